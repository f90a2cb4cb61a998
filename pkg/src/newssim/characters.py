"""Per-character controllers: profile, memory, planning with self-critique.

The planning draft is produced by role-playing the character; a separate
critic pass, which alone sees the hidden plotline, keeps or revises the
draft for up to three rounds. Reactions run the same loop with a budget
of one round.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, time as dtime, timedelta

from .errors import LlmParseError
from .events import PlannedEvent
from .gateway import LlmGateway, LlmRequest
from .prompting import render

# Table-style social dimension checklist used for profile enrichment.
SOCIAL_DIMENSIONS = (
    "gender",
    "marital or family status",
    "economic status",
    "education",
    "ethnicity",
    "religion",
    "residence",
    "commute",
)

MAX_CRITIQUE_ROUNDS = 3
REPLAN_CRITIQUE_ROUNDS = 1
MEMORY_WINDOW = 20  # most recent involved events passed to prompts

# Planned events stop this margin before the window end so reactions always
# have room to land strictly after their trigger and still inside the window.
PLAN_END_MARGIN = timedelta(seconds=120)
REACTION_MARGIN = timedelta(seconds=60)


@dataclass
class CharacterProfile:
    name: str
    age: int
    profession: str
    backstory: str
    plotline: str
    social_dimensions: dict = field(default_factory=dict)
    retired: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "age": self.age,
            "profession": self.profession,
            "backstory": self.backstory,
            "plotline": self.plotline,
            "social_dimensions": dict(sorted(self.social_dimensions.items())),
            "retired": self.retired,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CharacterProfile":
        return cls(
            name=raw["name"],
            age=raw["age"],
            profession=raw["profession"],
            backstory=raw["backstory"],
            plotline=raw["plotline"],
            social_dimensions=dict(raw.get("social_dimensions", {})),
            retired=raw.get("retired", False),
        )


@dataclass
class CharacterMemory:
    involved: list = field(default_factory=list)  # (event_id, description) pairs
    last_plans: list = field(default_factory=list)  # plain-text plan lines

    def remember(self, event_id: int, description: str) -> None:
        self.involved.append((event_id, description))

    def recent(self, limit: int = MEMORY_WINDOW) -> list:
        return self.involved[-limit:]

    def to_dict(self) -> dict:
        return {
            "involved": [[eid, desc] for eid, desc in self.involved],
            "last_plans": list(self.last_plans),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CharacterMemory":
        return cls(
            involved=[(e[0], e[1]) for e in raw.get("involved", [])],
            last_plans=list(raw.get("last_plans", [])),
        )


_TIME_RE = re.compile(r"(\d{1,2}):(\d{2})")


def parse_plan_time(value, window_start: datetime, window_end: datetime) -> datetime:
    """Interpret an "HH:MM" answer on the window's date, clamped inside it."""
    upper = window_end - PLAN_END_MARGIN
    if isinstance(value, str):
        m = _TIME_RE.search(value)
        if m:
            hour, minute = int(m.group(1)), int(m.group(2))
            if hour < 24 and minute < 60:
                candidate = datetime.combine(
                    window_start.date(), dtime(hour, minute), tzinfo=window_start.tzinfo
                )
                return min(max(candidate, window_start), upper)
    return window_start  # unparseable time: schedule at window start


def _plan_items_to_events(
    items: list,
    controller_name: str,
    window_start: datetime,
    window_end: datetime,
    allowed_nodes: set[str],
    max_events: int,
) -> list[PlannedEvent]:
    out: list[PlannedEvent] = []
    for item in items:
        if not isinstance(item, dict):
            continue
        description = str(item.get("description", "")).strip()
        if not description:
            continue
        node_id = item.get("schema_node_id") or None
        if node_id is not None and node_id not in allowed_nodes:
            node_id = None  # unassigned grounding claims become freeform
        participants = [str(p) for p in item.get("participants", []) if p]
        out.append(
            PlannedEvent(
                timestamp=parse_plan_time(item.get("time"), window_start, window_end),
                description=description,
                controller_name=controller_name,
                schema_node_id=node_id,
                proposed_participants=participants,
            )
        )
        if len(out) >= max_events:
            break
    return out


def _plan_listing(events: list[PlannedEvent]) -> str:
    if not events:
        return "(no planned events)"
    return "\n".join(
        f"{i + 1}. [{e.timestamp.strftime('%H:%M')}] {e.description}"
        for i, e in enumerate(events)
    )


class CharacterAgent:
    """Owns one character's profile, memory, and planning calls."""

    def __init__(self, profile: CharacterProfile, memory: CharacterMemory | None = None):
        self.profile = profile
        self.memory = memory or CharacterMemory()
        self.last_critique_rounds = 0

    @property
    def name(self) -> str:
        return self.profile.name

    # -- prompt fragments -------------------------------------------------

    def _memory_text(self) -> str:
        recent = self.memory.recent()
        if not recent:
            return "(none yet)"
        return "\n".join(f"- (event {eid}) {desc}" for eid, desc in recent)

    def _dimensions_text(self) -> str:
        dims = self.profile.social_dimensions
        if not dims:
            return ""
        lines = "\n".join(f"- {k}: {v}" for k, v in sorted(dims.items()))
        return f"Social background:\n{lines}\n"

    def _draft_prompt(
        self,
        assumptions: list[str],
        window_start: datetime,
        window_end: datetime,
        assigned: list,
        max_events: int,
        norms_context: str,
    ) -> str:
        assigned_text = ""
        if assigned:
            listing = "\n".join(f"- [{nid}] {desc}" for nid, desc in assigned)
            assigned_text = f"You must include these assigned schema events:\n{listing}\n"
        norms_text = ""
        if norms_context:
            norms_text = f"Relevant cultural norms for this region:\n{norms_context}\n"
        return render(
            "plan_draft",
            name=self.profile.name,
            age=self.profile.age,
            profession=self.profile.profession,
            backstory=self.profile.backstory,
            social_dimensions=self._dimensions_text(),
            assumptions="\n".join(f"- {a}" for a in assumptions),
            memory=self._memory_text(),
            norms_context=norms_text,
            assigned_events=assigned_text,
            window_date=window_start.date().isoformat(),
            window_start=window_start.strftime("%H:%M"),
            window_end=window_end.strftime("%H:%M"),
            max_events=max_events,
        )

    # -- critique loop ----------------------------------------------------

    def _critique_once(self, gateway: LlmGateway, events: list[PlannedEvent]):
        prompt = render(
            "plan_critic",
            name=self.profile.name,
            age=self.profile.age,
            profession=self.profile.profession,
            plotline=self.profile.plotline,
            plan=_plan_listing(events),
        )
        request = LlmRequest(
            role_tag="critique",
            messages=[{"role": "user", "content": prompt}],
            temperature=0.0,
            response_schema={"has_suggestions": "boolean", "verdicts": "array"},
        )
        return gateway.complete(request).parsed

    @staticmethod
    def apply_verdicts(events: list[PlannedEvent], verdicts: list) -> list[PlannedEvent]:
        """Mechanically apply keep/remove/revise verdicts (1-based indices)."""
        decisions: dict[int, dict] = {}
        for v in verdicts:
            if isinstance(v, dict) and isinstance(v.get("action"), int):
                decisions[v["action"] - 1] = v
        out: list[PlannedEvent] = []
        for i, event in enumerate(events):
            verdict = decisions.get(i, {"verdict": "keep"})
            kind = verdict.get("verdict", "keep")
            if kind == "remove":
                continue
            if kind == "revise" and str(verdict.get("revised", "")).strip():
                event.description = str(verdict["revised"]).strip()
            out.append(event)
        return out

    def _critique_loop(
        self, gateway: LlmGateway, events: list[PlannedEvent], max_rounds: int
    ) -> list[PlannedEvent]:
        rounds = 0
        for _ in range(max_rounds):
            try:
                verdict = self._critique_once(gateway, events)
            except LlmParseError:
                rounds += 1
                break  # keep the current plan if the critic is unparseable
            rounds += 1
            if not verdict["has_suggestions"]:
                break
            events = self.apply_verdicts(events, verdict.get("verdicts", []))
            if not events:
                break
        self.last_critique_rounds = rounds
        return events

    # -- public operations -------------------------------------------------

    def plan(
        self,
        gateway: LlmGateway,
        assumptions: list[str],
        window_start: datetime,
        window_end: datetime,
        assigned: list | None = None,
        max_events: int = 5,
        norms_context: str = "",
    ) -> list[PlannedEvent]:
        """Draft a day plan in character, then run the self-critique loop."""
        assigned = assigned or []
        prompt = self._draft_prompt(
            assumptions, window_start, window_end, assigned, max_events, norms_context
        )
        request = LlmRequest(
            role_tag="planning",
            messages=[{"role": "user", "content": prompt}],
            response_schema={"plans": "array"},
        )
        try:
            parsed = gateway.complete(request).parsed
        except LlmParseError:
            self.last_critique_rounds = 0
            return []  # the character idles this step
        events = _plan_items_to_events(
            parsed["plans"],
            self.name,
            window_start,
            window_end,
            {nid for nid, _ in assigned},
            max_events,
        )
        if not events:
            self.last_critique_rounds = 0
            return []
        events = self._critique_loop(gateway, events, MAX_CRITIQUE_ROUNDS)
        self.memory.last_plans = [e.description for e in events]
        return events[:max_events]

    def replan(
        self,
        gateway: LlmGateway,
        trigger_time: datetime,
        trigger_description: str,
        remaining: list[PlannedEvent],
        window_start: datetime,
        window_end: datetime,
        max_events: int = 5,
    ) -> list[PlannedEvent]:
        """React to an event: return replacement plans for the rest of the step.

        Replacement timestamps are clamped strictly after the trigger. A parse
        failure keeps the original remaining plans.
        """
        prompt = render(
            "replan",
            name=self.profile.name,
            age=self.profile.age,
            profession=self.profile.profession,
            backstory=self.profile.backstory,
            trigger_time=trigger_time.strftime("%H:%M"),
            trigger_description=trigger_description,
            remaining_plans=_plan_listing(remaining),
        )
        request = LlmRequest(
            role_tag="replan",
            messages=[{"role": "user", "content": prompt}],
            response_schema={"plans": "array"},
        )
        try:
            parsed = gateway.complete(request).parsed
        except LlmParseError:
            self.last_critique_rounds = 0
            return remaining
        events = _plan_items_to_events(
            parsed["plans"], self.name, window_start, window_end, set(), max_events
        )
        lo = trigger_time + REACTION_MARGIN
        hi = window_end - REACTION_MARGIN
        for event in events:
            event.timestamp = min(max(event.timestamp, lo), max(lo, hi))
            event.from_reaction = True
        unchanged = [e.description for e in events] == [e.description for e in remaining]
        if unchanged:
            self.last_critique_rounds = 0
            return remaining
        if events:
            events = self._critique_loop(gateway, events, REPLAN_CRITIQUE_ROUNDS)
        else:
            self.last_critique_rounds = 0
        return events[:max_events]


def generate_profile(
    gateway: LlmGateway,
    assumptions: list[str],
    region_tag: str,
    event_description: str,
) -> CharacterProfile:
    """Ask the LLM for a fresh character seeded by the event it joins."""
    prompt = render(
        "profile_generate",
        region=region_tag,
        assumptions="\n".join(f"- {a}" for a in assumptions),
        event_description=event_description,
    )
    request = LlmRequest(
        role_tag="profile",
        messages=[{"role": "user", "content": prompt}],
        response_schema={
            "name": "string",
            "age": "integer",
            "profession": "string",
            "backstory": "string",
            "plotline": "string",
        },
    )
    parsed = gateway.complete(request).parsed
    return CharacterProfile(
        name=parsed["name"].strip(),
        age=parsed["age"],
        profession=parsed["profession"],
        backstory=parsed["backstory"],
        plotline=parsed["plotline"] or "stay safe through the crisis",
    )


def enrich_profile(
    gateway: LlmGateway, profile: CharacterProfile, region_tag: str
) -> CharacterProfile:
    """Fill missing social dimensions; existing values are never overwritten.

    An empty-string value from the model counts as missing and gets one
    retry before the dimension is omitted. Idempotent once all checklist
    dimensions are present (no LLM call is made).
    """
    missing = [d for d in SOCIAL_DIMENSIONS if not profile.social_dimensions.get(d)]
    if not missing:
        return profile
    dims = dict(profile.social_dimensions)
    extension = ""
    for _attempt in range(2):
        known = "\n".join(f"- {k}: {v}" for k, v in sorted(dims.items())) or "(none)"
        prompt = render(
            "profile_enrich",
            region=region_tag,
            name=profile.name,
            age=profile.age,
            profession=profile.profession,
            backstory=profile.backstory,
            known_dimensions=known,
            checklist=", ".join(missing),
        )
        request = LlmRequest(
            role_tag="profile-enrich",
            messages=[{"role": "user", "content": prompt}],
            response_schema={"dimensions": "object", "backstory_extension?": "string"},
        )
        try:
            parsed = gateway.complete(request).parsed
        except LlmParseError:
            if dims == profile.social_dimensions:
                return profile  # unenriched; caller logs the warning
            break
        for key, value in parsed["dimensions"].items():
            if key in missing and isinstance(value, str) and value.strip() and not dims.get(key):
                dims[key] = value.strip()
        if not extension:
            extension = str(parsed.get("backstory_extension", "")).strip()
        missing = [d for d in missing if not dims.get(d)]
        if not missing:
            break
    # Dimensions the model never produced a usable value for are pinned to
    # "unspecified" so a later enrich pass does not re-prompt for them.
    for d in missing:
        dims[d] = "unspecified"
    backstory = profile.backstory
    if extension:
        backstory = f"{backstory} {extension}".strip()
    return CharacterProfile(
        name=profile.name,
        age=profile.age,
        profession=profile.profession,
        backstory=backstory,
        plotline=profile.plotline,
        social_dimensions=dims,
        retired=profile.retired,
    )
