"""Provider-agnostic LLM access with record/replay cassettes.

Every LLM call in the pipeline goes through ``LlmGateway.complete``. In
``record`` mode responses are appended to a cassette file; in ``replay``
mode they are served from it with zero network activity, making the whole
system byte-deterministic under test. Requests are keyed by a canonical
hash; entries sharing a hash are consumed in issue order (per-hash FIFO).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import CassetteMissError, LlmParseError, ProviderError

REPAIR_INSTRUCTION = "Your previous output was not valid; emit only the required structure"

# Creative stages get sampling variety; judge/multiple-choice stages must be stable.
DEFAULT_CREATIVE_TEMPERATURE = 0.7
DEFAULT_DETERMINISTIC_TEMPERATURE = 0.0


@dataclass
class LlmRequest:
    role_tag: str
    messages: list[dict]  # {"role": "system"|"user"|"assistant", "content": str}
    temperature: float = DEFAULT_CREATIVE_TEMPERATURE
    max_tokens: int = 1024
    response_schema: dict | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0]["role"] not in ("system", "user"):
            raise ValueError("first message must be system or user")


@dataclass
class LlmResponse:
    text: str
    parsed: object = None
    usage: dict = field(default_factory=dict)
    repair_used: bool = False


def canonical_hash(request: LlmRequest) -> str:
    """Stable digest of a request; insensitive to responseSchema key order."""
    payload = {
        "role_tag": request.role_tag,
        "messages": [{"role": m["role"], "content": m["content"]} for m in request.messages],
        "temperature": f"{request.temperature:.4f}",
        "max_tokens": request.max_tokens,
        "response_schema": request.response_schema,
    }
    canon = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def _strip_fences(text: str) -> str:
    m = _FENCE_RE.match(text.strip())
    return m.group(1) if m else text.strip()


_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
    "any": lambda v: True,
}


def parse_structured(text: str, schema: dict):
    """Parse ``text`` as JSON and check it against a flat key->type schema.

    Keys suffixed with ``?`` are optional. Extra keys are tolerated.
    Raises LlmParseError on any violation.
    """
    try:
        value = json.loads(_strip_fences(text))
    except json.JSONDecodeError as exc:
        raise LlmParseError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise LlmParseError("response must be a JSON object")
    for key, kind in schema.items():
        optional = key.endswith("?")
        name = key.rstrip("?")
        if name not in value:
            if optional:
                continue
            raise LlmParseError(f"missing required key {name!r}")
        if not _TYPE_CHECKS[kind](value[name]):
            raise LlmParseError(f"key {name!r} is not of type {kind}")
    return value


class Cassette:
    """Ordered, hash-keyed record of request/response pairs (JSON lines)."""

    def __init__(self, path=None):
        self.path = path
        self.entries: list[dict] = []
        self._fifo: dict[str, deque] = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            self.load(path)

    def load(self, path) -> None:
        self.entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self.entries.append(json.loads(line))
        self._rebuild_fifo()

    def _rebuild_fifo(self) -> None:
        self._fifo = {}
        for e in self.entries:
            self._fifo.setdefault(e["hash"], deque()).append(e["response"])

    def save(self, path=None) -> None:
        target = path or self.path
        if target is None:
            raise ValueError("cassette has no path")
        with open(target, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps(e, ensure_ascii=False) + "\n")

    def record(self, request_hash: str, role_tag: str, response: str) -> None:
        with self._lock:
            self.entries.append({"hash": request_hash, "role_tag": role_tag, "response": response})
            self._fifo.setdefault(request_hash, deque()).append(response)

    def replay(self, request_hash: str, role_tag: str) -> str:
        with self._lock:
            queue = self._fifo.get(request_hash)
            if not queue:
                raise CassetteMissError(role_tag, request_hash)
            return queue.popleft()

    def reset(self) -> None:
        """Rewind replay consumption to the start of the cassette."""
        with self._lock:
            self._rebuild_fifo()

    def fast_forward(self, n: int) -> None:
        """Mark the first ``n`` entries (in file order) as already consumed.

        Entries are recorded in issue order, so this resumes replay exactly
        where a checkpointed run left off.
        """
        with self._lock:
            for entry in self.entries[:n]:
                queue = self._fifo.get(entry["hash"])
                if queue:
                    queue.popleft()


class HttpTransport:
    """OpenAI-compatible chat-completions client, configured via env vars."""

    def __init__(self, base_url=None, api_key=None, model=None, max_retries=3):
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL", "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.model = model or os.environ.get("LLM_MODEL", "gpt-4o-mini")
        self.max_retries = max_retries
        self.last_usage: dict = {}

    def __call__(self, request: LlmRequest) -> str:
        import httpx

        body = {
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_exc = None
        for attempt in range(self.max_retries):
            try:
                resp = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=120.0,
                )
                resp.raise_for_status()
                data = resp.json()
                self.last_usage = data.get("usage", {})
                return data["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - retried, then wrapped
                last_exc = exc
                time.sleep(min(2.0 * (attempt + 1), 8.0))
        raise ProviderError(f"provider failed after {self.max_retries} attempts: {last_exc}")


class FailingTransport:
    """Transport that refuses every call; used to assert replay purity."""

    def __call__(self, request: LlmRequest) -> str:
        raise AssertionError("network transport invoked in replay mode")


class LlmGateway:
    """Front door for all LLM calls. Modes: record, replay, passthrough."""

    def __init__(self, mode="passthrough", transport=None, cassette: Cassette | None = None):
        if mode not in ("record", "replay", "passthrough"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode in ("record", "passthrough") and transport is None:
            transport = HttpTransport()
        if mode in ("record", "replay") and cassette is None:
            cassette = Cassette()
        self.mode = mode
        self.transport = transport
        self.cassette = cassette
        self.calls_made = 0
        self._lock = threading.Lock()

    def _raw(self, request: LlmRequest) -> str:
        request_hash = canonical_hash(request)
        if self.mode == "replay":
            text = self.cassette.replay(request_hash, request.role_tag)
            with self._lock:
                self.calls_made += 1
            return text
        with self._lock:
            text = self.transport(request)
            if self.mode == "record":
                self.cassette.record(request_hash, request.role_tag, text)
            self.calls_made += 1
        return text

    def complete(self, request: LlmRequest) -> LlmResponse:
        text = self._raw(request)
        usage = getattr(self.transport, "last_usage", {}) if self.mode != "replay" else {}
        if request.response_schema is None:
            return LlmResponse(text=text, usage=usage)
        try:
            parsed = parse_structured(text, request.response_schema)
            return LlmResponse(text=text, parsed=parsed, usage=usage)
        except LlmParseError:
            repair = LlmRequest(
                role_tag=request.role_tag,
                messages=request.messages
                + [
                    {"role": "assistant", "content": text},
                    {"role": "user", "content": REPAIR_INSTRUCTION},
                ],
                temperature=request.temperature,
                max_tokens=request.max_tokens,
                response_schema=request.response_schema,
            )
            text2 = self._raw(repair)
            parsed = parse_structured(text2, request.response_schema)
            return LlmResponse(text=text2, parsed=parsed, usage=usage, repair_used=True)
