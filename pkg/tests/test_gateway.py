import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newssim.errors import CassetteMissError, LlmParseError
from newssim.gateway import (
    REPAIR_INSTRUCTION,
    Cassette,
    FailingTransport,
    LlmGateway,
    LlmRequest,
    canonical_hash,
    parse_structured,
)


def req(content="hello", tag="planning", **kw):
    return LlmRequest(role_tag=tag, messages=[{"role": "user", "content": content}], **kw)


class CountingTransport:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0
        self.seen = []

    def __call__(self, request):
        self.seen.append(request)
        self.calls += 1
        return self.responses.pop(0)


class TestCanonicalHash:
    def test_stable_for_equal_requests(self):
        assert canonical_hash(req()) == canonical_hash(req())

    def test_sensitive_to_content_and_tag(self):
        assert canonical_hash(req("a")) != canonical_hash(req("b"))
        assert canonical_hash(req(tag="planning")) != canonical_hash(req(tag="critique"))

    def test_insensitive_to_schema_key_order(self):
        a = req(response_schema={"x": "string", "y": "integer"})
        b = req(response_schema={"y": "integer", "x": "string"})
        assert canonical_hash(a) == canonical_hash(b)

    def test_temperature_quantized_to_four_places(self):
        assert canonical_hash(req(temperature=0.7)) == canonical_hash(
            req(temperature=0.70000001)
        )
        assert canonical_hash(req(temperature=0.7)) != canonical_hash(
            req(temperature=0.7001)
        )

    @settings(max_examples=50, deadline=None)
    @given(st.text(min_size=0, max_size=80), st.text(min_size=0, max_size=80))
    def test_distinct_contents_distinct_hashes(self, a, b):
        ha, hb = canonical_hash(req(a)), canonical_hash(req(b))
        assert (ha == hb) == (a == b)


class TestRequestValidation:
    def test_empty_messages_rejected(self):
        with pytest.raises(ValueError):
            LlmRequest(role_tag="x", messages=[])

    def test_first_role_must_open_conversation(self):
        with pytest.raises(ValueError):
            LlmRequest(role_tag="x", messages=[{"role": "assistant", "content": "hi"}])


class TestParseStructured:
    def test_happy_path_and_fence_stripping(self):
        text = '```json\n{"a": 1, "b": "x"}\n```'
        assert parse_structured(text, {"a": "integer", "b": "string"}) == {"a": 1, "b": "x"}

    def test_optional_keys(self):
        assert parse_structured('{"a": 1}', {"a": "integer", "b?": "string"}) == {"a": 1}

    def test_missing_required(self):
        with pytest.raises(LlmParseError, match="missing required"):
            parse_structured("{}", {"a": "integer"})

    def test_wrong_type(self):
        with pytest.raises(LlmParseError, match="not of type"):
            parse_structured('{"a": "1"}', {"a": "integer"})

    def test_bool_is_not_a_number(self):
        with pytest.raises(LlmParseError):
            parse_structured('{"a": true}', {"a": "number"})

    def test_non_object(self):
        with pytest.raises(LlmParseError):
            parse_structured("[1, 2]", {"a": "integer"})

    def test_garbage(self):
        with pytest.raises(LlmParseError):
            parse_structured("not json at all", {"a": "integer"})


class TestCassette:
    def test_record_then_replay_round_trip(self, tmp_path):
        path = tmp_path / "c.jsonl"
        transport = CountingTransport(["first", "second"])
        rec = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        assert rec.complete(req("one")).text == "first"
        assert rec.complete(req("two")).text == "second"
        rec.cassette.save(path)

        rep = LlmGateway(mode="replay", transport=FailingTransport(), cassette=Cassette(path))
        assert rep.complete(req("two")).text == "second"
        assert rep.complete(req("one")).text == "first"

    def test_replay_never_touches_transport(self, tmp_path):
        path = tmp_path / "c.jsonl"
        c = Cassette()
        c.record(canonical_hash(req()), "planning", "canned")
        c.save(path)
        gw = LlmGateway(mode="replay", transport=FailingTransport(), cassette=Cassette(path))
        assert gw.complete(req()).text == "canned"

    def test_miss_raises_with_tag_and_hash(self):
        gw = LlmGateway(mode="replay", transport=FailingTransport(), cassette=Cassette())
        with pytest.raises(CassetteMissError) as exc:
            gw.complete(req())
        assert exc.value.role_tag == "planning"
        assert exc.value.request_hash == canonical_hash(req())

    def test_per_hash_fifo_order(self):
        c = Cassette()
        h = canonical_hash(req())
        c.record(h, "planning", "resp-1")
        c.record(h, "planning", "resp-2")
        c.record(h, "planning", "resp-3")
        gw = LlmGateway(mode="replay", transport=FailingTransport(), cassette=c)
        c.reset()
        assert [gw.complete(req()).text for _ in range(3)] == ["resp-1", "resp-2", "resp-3"]
        with pytest.raises(CassetteMissError):
            gw.complete(req())

    def test_reset_rewinds(self):
        c = Cassette()
        c.record(canonical_hash(req()), "planning", "only")
        gw = LlmGateway(mode="replay", transport=FailingTransport(), cassette=c)
        c.reset()
        assert gw.complete(req()).text == "only"
        c.reset()
        assert gw.complete(req()).text == "only"

    def test_fast_forward_skips_consumed_prefix(self):
        c = Cassette()
        ha, hb = canonical_hash(req("a")), canonical_hash(req("b"))
        c.record(ha, "planning", "a-1")
        c.record(hb, "planning", "b-1")
        c.record(ha, "planning", "a-2")
        c.reset()
        c.fast_forward(2)
        gw = LlmGateway(mode="replay", transport=FailingTransport(), cassette=c)
        assert gw.complete(req("a")).text == "a-2"
        with pytest.raises(CassetteMissError):
            gw.complete(req("b"))

    def test_file_format_is_jsonl_with_expected_keys(self, tmp_path):
        path = tmp_path / "c.jsonl"
        c = Cassette()
        c.record("deadbeef", "judge", "score text")
        c.save(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        entry = json.loads(lines[0])
        assert set(entry) == {"hash", "role_tag", "response"}


class TestRepair:
    def test_repair_retries_exactly_once_then_succeeds(self):
        transport = CountingTransport(["oops not json", '{"a": 5}'])
        gw = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        resp = gw.complete(req(response_schema={"a": "integer"}))
        assert resp.parsed == {"a": 5}
        assert resp.repair_used
        assert transport.calls == 2
        repair_req = transport.seen[1]
        assert repair_req.messages[-1]["content"] == REPAIR_INSTRUCTION
        assert repair_req.messages[-2] == {"role": "assistant", "content": "oops not json"}

    def test_second_failure_propagates(self):
        transport = CountingTransport(["bad", "still bad"])
        gw = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        with pytest.raises(LlmParseError):
            gw.complete(req(response_schema={"a": "integer"}))
        assert transport.calls == 2

    def test_repair_replays_from_cassette(self, tmp_path):
        path = tmp_path / "c.jsonl"
        transport = CountingTransport(["broken", '{"a": 1}'])
        rec = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        rec.complete(req(response_schema={"a": "integer"}))
        rec.cassette.save(path)
        rep = LlmGateway(mode="replay", transport=FailingTransport(), cassette=Cassette(path))
        resp = rep.complete(req(response_schema={"a": "integer"}))
        assert resp.parsed == {"a": 1}
        assert resp.repair_used

    def test_calls_made_counts_repair(self):
        transport = CountingTransport(["bad", '{"a": 1}'])
        gw = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        gw.complete(req(response_schema={"a": "integer"}))
        assert gw.calls_made == 2
