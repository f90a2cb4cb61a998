import json
from datetime import datetime, timedelta, timezone

import pytest

from newssim.errors import EmptyCellError, JudgeRangeError, LlmParseError
from newssim.events import EventRecord
from newssim.gateway import Cassette, LlmGateway
from newssim.judge import (
    METRICS,
    JudgeRequestSpec,
    aggregate,
    judge,
    parse_judgment,
    render_judge_prompt,
    report_csv,
    report_markdown,
)
from newssim.output import SimulationExport

from conftest import FIXTURE_DIR
from helpers import ScriptedTransport


def sim(descs):
    t0 = datetime(2030, 1, 1, 8, 0, tzinfo=timezone.utc)
    return SimulationExport(
        config={},
        characters=[],
        events=[
            EventRecord(
                id=i + 1,
                timestamp=t0 + timedelta(hours=i),
                schema_node_id=None,
                event_type="freeform",
                arguments={},
                participants=[],
                description=d,
                provenance="global",
            )
            for i, d in enumerate(descs)
        ],
    )


def spec_2sims(metric="coherent"):
    return JudgeRequestSpec(
        scenario_name="disease outbreak",
        assumptions=[
            "A novel respiratory disease emerges in Jakarta",
            "Hospitals are near capacity",
        ],
        simulations=[
            sim(
                [
                    "The first case is confirmed at a district clinic.",
                    "Health officials announce new testing sites.",
                ]
            ),
            sim(
                [
                    "Rumors spread faster than official updates.",
                    "A neighborhood organizes its own supply run.",
                ]
            ),
        ],
        metric=metric,
    )


class TestPrompt:
    def test_golden_prompt_bytes(self):
        expected = (FIXTURE_DIR / "judge_prompt_2sims.txt").read_text(encoding="utf-8")
        assert render_judge_prompt(spec_2sims()) == expected

    def test_response_format_scales_with_simulation_count(self):
        one = JudgeRequestSpec("s", ["a"], [sim(["x"])], "coherent")
        prompt = render_judge_prompt(one)
        assert '"simulation_1": "Score for simulation 1.' in prompt
        assert "simulation_2" not in prompt
        # Single braces and a trailing comma before the closing brace.
        tail = prompt[prompt.index("Response Format:") :]
        assert "{{" not in tail
        assert 'of 1 to 10",\n}' in tail

    def test_response_format_is_json_loads_parseable_when_filled(self):
        # The stated contract: a reply following the format parses with
        # json.loads once placeholders are replaced (sans trailing comma).
        reply = '{"thoughts": "ok", "simulation_1": "7", "simulation_2": "4"}'
        assert json.loads(reply)

    @pytest.mark.parametrize("metric", METRICS)
    def test_each_metric_has_a_clause(self, metric):
        prompt = render_judge_prompt(spec_2sims(metric=metric))
        assert "Metric: " in prompt
        assert "range of 1-10" in prompt

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            JudgeRequestSpec("s", [], [sim(["x"])], "bogus")
        with pytest.raises(ValueError):
            JudgeRequestSpec("s", [], [], "coherent")
        with pytest.raises(ValueError):
            JudgeRequestSpec("s", [], [sim(["x"])] * 4, "coherent")


class TestParsing:
    def test_numeric_strings_coerced(self):
        text = '{"thoughts": "t", "simulation_1": "7", "simulation_2": 4}'
        judgment = parse_judgment(text, 2)
        assert judgment.scores == {1: 7, 2: 4}

    def test_integral_float_accepted(self):
        judgment = parse_judgment('{"thoughts": "t", "simulation_1": 8.0}', 1)
        assert judgment.scores == {1: 8}

    @pytest.mark.parametrize("bad", ["0", "11", 0, 11, 7.5, True])
    def test_out_of_range_or_non_integral_rejected(self, bad):
        text = json.dumps({"thoughts": "t", "simulation_1": bad})
        with pytest.raises(JudgeRangeError) as exc:
            parse_judgment(text, 1)
        assert exc.value.simulation_index == 1

    def test_non_numeric_string_is_parse_error(self):
        with pytest.raises(LlmParseError):
            parse_judgment('{"thoughts": "t", "simulation_1": "great"}', 1)

    def test_missing_simulation_key(self):
        with pytest.raises(LlmParseError):
            parse_judgment('{"thoughts": "t", "simulation_1": 5}', 2)


class TestJudgeCall:
    def test_judge_runs_at_temperature_zero(self):
        transport = ScriptedTransport()
        gateway = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        judgment = judge(gateway, spec_2sims())
        assert set(judgment.scores) == {1, 2}
        assert all(1 <= s <= 10 for s in judgment.scores.values())
        (request,) = transport.requests
        assert request.temperature == 0.0

    def test_judge_uses_repair_once(self):
        transport = ScriptedTransport().push(
            "judge", "not json", '{"thoughts": "t", "simulation_1": "6", "simulation_2": "3"}'
        )
        gateway = LlmGateway(mode="record", transport=transport, cassette=Cassette())
        judgment = judge(gateway, spec_2sims())
        assert judgment.repair_used
        assert judgment.scores == {1: 6, 2: 3}


class TestAggregation:
    ROWS = [
        ("base", "coherent", 7),
        ("base", "coherent", 8),
        ("norms", "coherent", 9),
        ("base", "entailment", 5),
        ("norms", "entailment", 6),
        ("base", "realistic", 7),
        ("norms", "realistic", 7),
        ("base", "appropriate", 4),
        ("norms", "appropriate", 10),
    ]

    def test_means_to_two_decimals(self):
        cells = aggregate(self.ROWS)
        assert cells[("base", "coherent")].mean == 7.5
        assert cells[("base", "coherent")].n == 2
        csv_text = report_csv(cells, ["base", "norms"])
        assert "coherent,7.50,9.00" in csv_text.replace("\r", "")

    def test_column_order_follows_declaration(self):
        cells = aggregate(self.ROWS)
        md = report_markdown(cells, ["norms", "base"])
        header = md.splitlines()[0]
        assert header.index("norms") < header.index("base")
        assert "| Coherent | 9.00 (n=1) | 7.50 (n=2) |" in md

    def test_metric_row_order_is_fixed(self):
        cells = aggregate(self.ROWS)
        lines = report_csv(cells, ["base", "norms"]).strip().splitlines()
        assert [line.split(",")[0] for line in lines[1:]] == list(METRICS)

    def test_empty_cell_raises(self):
        cells = aggregate([("base", "coherent", 7)])
        with pytest.raises(EmptyCellError):
            report_csv(cells, ["base"])
