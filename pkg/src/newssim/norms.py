"""Cultural norm retrieval, ranking, and event-description refinement.

A small seed knowledge base (JSON lines) is combined with norms elicited
from the LLM on the fly. Retrieved norms are ranked by LLM-scored
relevance and used to rewrite event descriptions with cultural detail.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import LlmParseError
from .gateway import LlmGateway, LlmRequest
from .prompting import render

ELICIT_COUNT = 5
DEFAULT_TOP_K = 5
# "Similar length" is a soft constraint: outside this ratio band we flag a
# warning but never reject the refinement.
LENGTH_RATIO_BAND = (0.6, 1.4)


@dataclass(frozen=True)
class Norm:
    id: str
    text: str
    regions: tuple[str, ...]
    topics: tuple[str, ...] = ()
    source: str = "staticKB"  # or "elicited"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "regions": list(self.regions),
            "topics": list(self.topics),
        }


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().lower()


def _region_matches(norm_region: str, region_tag: str) -> bool:
    # Exact, or country-level prefix in either direction: "Indonesia"
    # matches "Indonesia/Jakarta" and vice versa.
    if norm_region == region_tag:
        return True
    return norm_region.startswith(region_tag + "/") or region_tag.startswith(norm_region + "/")


class NormStore:
    """Immutable seed KB plus a session-scoped overlay of elicited norms."""

    def __init__(self, seed_norms: list[Norm] | None = None):
        self.seed: list[Norm] = list(seed_norms or [])
        self.overlay: list[Norm] = []
        self._elicit_counter = 0

    @classmethod
    def load(cls, path) -> "NormStore":
        norms = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                norms.append(
                    Norm(
                        id=raw["id"],
                        text=raw["text"],
                        regions=tuple(raw.get("regions", [])),
                        topics=tuple(raw.get("topics", [])),
                        source="staticKB",
                    )
                )
        return cls(norms)

    def static_for_region(self, region_tag: str) -> list[Norm]:
        return [
            n
            for n in self.seed + self.overlay
            if any(_region_matches(r, region_tag) for r in n.regions)
        ]

    def add_elicited(self, text: str, region_tag: str) -> Norm:
        self._elicit_counter += 1
        norm = Norm(
            id=f"elicited-{self._elicit_counter:03d}",
            text=text,
            regions=(region_tag,),
            source="elicited",
        )
        self.overlay.append(norm)
        return norm

    def overlay_state(self) -> dict:
        return {
            "counter": self._elicit_counter,
            "norms": [
                {"id": n.id, "text": n.text, "regions": list(n.regions)} for n in self.overlay
            ],
        }

    def restore_overlay(self, state: dict) -> None:
        self._elicit_counter = state.get("counter", 0)
        self.overlay = [
            Norm(id=n["id"], text=n["text"], regions=tuple(n["regions"]), source="elicited")
            for n in state.get("norms", [])
        ]


def retrieve_norms(
    store: NormStore,
    gateway: LlmGateway,
    region_tag: str,
    event_context: str,
    elicit: int = ELICIT_COUNT,
) -> list[Norm]:
    """Static KB matches plus up to ``elicit`` freshly elicited norms."""
    static = store.static_for_region(region_tag)
    seen = {_normalize_text(n.text) for n in static}
    elicited: list[Norm] = []
    if elicit > 0:
        request = LlmRequest(
            role_tag="norm-elicit",
            messages=[
                {
                    "role": "user",
                    "content": render(
                        "norm_elicit", count=elicit, region=region_tag, context=event_context
                    ),
                }
            ],
            response_schema={"norms": "array"},
        )
        try:
            response = gateway.complete(request)
        except LlmParseError:
            return static
        for text in response.parsed["norms"][:elicit]:
            if not isinstance(text, str) or not text.strip():
                continue
            key = _normalize_text(text)
            if key in seen:
                continue
            seen.add(key)
            elicited.append(store.add_elicited(text.strip(), region_tag))
    return static + elicited


def rank_norms(
    gateway: LlmGateway,
    norms: list[Norm],
    event_context: str,
    top_k: int = DEFAULT_TOP_K,
) -> list[tuple[Norm, float]]:
    """Score norms by LLM-judged relevance; ties broken by norm id."""
    if not norms:
        raise ValueError("norms must be non-empty")
    listing = "\n".join(f"- [{n.id}] {n.text}" for n in norms)
    request = LlmRequest(
        role_tag="norm-rank",
        messages=[
            {"role": "user", "content": render("norm_rank", context=event_context, norms=listing)}
        ],
        temperature=0.0,
        response_schema={"scores": "array"},
    )
    scores: dict[str, float] = {}
    try:
        response = gateway.complete(request)
        for item in response.parsed["scores"]:
            if not isinstance(item, dict):
                continue
            value = item.get("score")
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                value = 0.0
            scores[str(item.get("id"))] = min(max(float(value), 0.0), 1.0)
    except LlmParseError:
        pass
    ranked = sorted(
        ((n, scores.get(n.id, 0.0)) for n in norms),
        key=lambda pair: (-pair[1], pair[0].id),
    )
    return ranked[:top_k]


def refine_description(
    gateway: LlmGateway,
    original: str,
    ranked: list[tuple[Norm, float]],
) -> tuple[str, list[str], bool]:
    """Rewrite a description with cultural detail.

    Returns (refined text, applied norm ids, length_warning). An empty LLM
    output keeps the original and applies no norms.
    """
    if not ranked:
        raise ValueError("ranked norms must be non-empty")
    listing = "\n".join(f"- {n.text}" for n, _ in ranked)
    request = LlmRequest(
        role_tag="norm-refine",
        messages=[
            {"role": "user", "content": render("norm_refine", description=original, norms=listing)}
        ],
    )
    response = gateway.complete(request)
    refined = response.text.strip()
    if not refined:
        return original, [], False
    ratio = len(refined) / max(len(original), 1)
    warning = not (LENGTH_RATIO_BAND[0] <= ratio <= LENGTH_RATIO_BAND[1])
    return refined, [n.id for n, _ in ranked], warning
