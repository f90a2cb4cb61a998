"""The global controller: time, queues, history, and the event lifecycle.

Each step runs the four-stage cycle: schema events are assigned to
controllers, every controller plans its events for the step window, the
merged queue executes in temporal order, and executed events trigger
reactions from their non-proposing participants. All nondeterminism flows
through the LLM gateway, so a cassette plus a seed fully determines a run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

from . import schema_graph
from .characters import (
    REACTION_MARGIN,
    CharacterAgent,
    CharacterMemory,
    CharacterProfile,
    enrich_profile,
    generate_profile,
)
from .errors import EngineHalt, LlmParseError
from .events import GLOBAL_CONTROLLER, EventRecord, Notice, PlannedEvent
from .gateway import LlmGateway, LlmRequest
from .norms import NormStore, rank_norms, refine_description, retrieve_norms
from .prompting import render
from .schema_graph import EventSchema

NEW_CHARACTER_OPTION = "create a new character"
NO_CHARACTER_OPTION = "no character (handled globally)"
RECENT_CONTEXT_EVENTS = 10


@dataclass
class SimulationConfig:
    schema_id: str
    assumptions: list[str]
    region_tag: str
    start_time: datetime
    step_duration: timedelta = timedelta(hours=24)
    max_steps: int = 5
    max_active_characters: int = 8
    max_planned_events: int = 5
    norms_enabled: bool = True
    random_seed: int = 0
    executable_parents: bool = False

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.step_duration <= timedelta(0):
            raise ValueError("step_duration must be positive")
        if not self.assumptions:
            raise ValueError("assumptions must be non-empty")
        if self.start_time.tzinfo is None:
            self.start_time = self.start_time.replace(tzinfo=timezone.utc)

    def to_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "assumptions": list(self.assumptions),
            "region_tag": self.region_tag,
            "start_time": self.start_time.isoformat(),
            "step_duration_seconds": int(self.step_duration.total_seconds()),
            "max_steps": self.max_steps,
            "max_active_characters": self.max_active_characters,
            "max_planned_events": self.max_planned_events,
            "norms_enabled": self.norms_enabled,
            "random_seed": self.random_seed,
            "executable_parents": self.executable_parents,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SimulationConfig":
        return cls(
            schema_id=raw["schema_id"],
            assumptions=list(raw["assumptions"]),
            region_tag=raw["region_tag"],
            start_time=datetime.fromisoformat(raw["start_time"]),
            step_duration=timedelta(seconds=raw.get("step_duration_seconds", 86400)),
            max_steps=raw.get("max_steps", 5),
            max_active_characters=raw.get("max_active_characters", 8),
            max_planned_events=raw.get("max_planned_events", 5),
            norms_enabled=raw.get("norms_enabled", True),
            random_seed=raw.get("random_seed", 0),
            executable_parents=raw.get("executable_parents", False),
        )


@dataclass
class AssignmentDecision:
    kind: str  # "existing" | "new" | "global"
    character: str | None = None


class SimulationEngine:
    """Owns one simulation's entire mutable state."""

    def __init__(
        self,
        schema: EventSchema,
        config: SimulationConfig,
        gateway: LlmGateway,
        norm_store: NormStore | None = None,
    ):
        self.schema = schema
        self.config = config
        self.gateway = gateway
        self.norm_store = norm_store
        self.step_index = 0
        self.characters: dict[str, CharacterAgent] = {}
        self.retired: list[CharacterProfile] = []
        self.entity_registry: dict[str, str] = {}  # entity name -> kind
        self.history: list[EventRecord] = []
        self.executed: set[str] = set()
        self.assignments: dict[str, str] = {}  # pending node -> controller
        self.last_involvement: dict[str, int] = {}
        self._event_seq = 0
        self._involvement_seq = 0
        self._insertion_seq = 0
        self._name_counters: dict[str, int] = {}
        self._queue: list[PlannedEvent] = []

    # -- clock -------------------------------------------------------------

    def window(self, step: int | None = None) -> tuple[datetime, datetime]:
        step = self.step_index if step is None else step
        start = self.config.start_time + step * self.config.step_duration
        return start, start + self.config.step_duration

    def is_finished(self) -> bool:
        if self.step_index >= self.config.max_steps:
            return True
        roots = self.schema.root_node_ids
        return bool(roots) and all(
            schema_graph.is_complete(self.schema, self.executed, r) for r in roots
        )

    # -- shared prompt context ---------------------------------------------

    def _assumptions_text(self) -> str:
        return "\n".join(f"- {a}" for a in self.config.assumptions)

    def _recent_events_text(self) -> str:
        recent = self.history[-RECENT_CONTEXT_EVENTS:]
        if not recent:
            return "(none yet)"
        return "\n".join(f"- [{e.timestamp.isoformat()}] {e.description}" for e in recent)

    # -- stage 1: event assignment -----------------------------------------

    def assign_event(self, node_id: str) -> AssignmentDecision:
        """Multiple-choice LLM decision: who handles a proposed schema event."""
        node = self.schema.node(node_id)
        options = sorted(self.characters) + [NEW_CHARACTER_OPTION, NO_CHARACTER_OPTION]
        prompt = render(
            "assignment",
            assumptions=self._assumptions_text(),
            recent_events=self._recent_events_text(),
            event_description=f"{node.event_type}: {node.description or node.id}",
            options="\n".join(f"{i + 1}. {o}" for i, o in enumerate(options)),
        )
        request = LlmRequest(
            role_tag="assignment",
            messages=[{"role": "user", "content": prompt}],
            temperature=0.0,
            response_schema={"choice": "string"},
        )
        try:
            choice = self.gateway.complete(request).parsed["choice"].strip()
        except LlmParseError:
            return AssignmentDecision("global")
        if choice == NEW_CHARACTER_OPTION:
            return AssignmentDecision("new")
        if choice in self.characters:
            return AssignmentDecision("existing", choice)
        # "no character" and any non-option answer fall back to the
        # global controller, deterministically.
        return AssignmentDecision("global")

    # -- character lifecycle -----------------------------------------------

    def _dedup_name(self, name: str) -> str:
        taken = set(self.characters) | {p.name for p in self.retired}
        if name not in taken:
            return name
        count = self._name_counters.get(name, 1)
        suffixes = [" II", " III", " IV", " V", " VI", " VII", " VIII", " IX", " X"]
        while True:
            candidate = name + suffixes[min(count - 1, len(suffixes) - 1)]
            count += 1
            if candidate not in taken:
                self._name_counters[name] = count
                return candidate

    def retire_character(self, name: str) -> None:
        agent = self.characters.pop(name)
        agent.profile.retired = True
        self.retired.append(agent.profile)
        self.last_involvement.pop(name, None)
        # Pending planned events of a retired character leave the queue.
        self._queue = [e for e in self._queue if e.controller_name != name]
        self.assignments = {
            nid: ctrl for nid, ctrl in self.assignments.items() if ctrl != name
        }

    def spawn_character(self, seed_event_description: str) -> CharacterAgent:
        """Create a character from a seed event, evicting the LRU if at cap."""
        for attempt in range(2):
            try:
                profile = generate_profile(
                    self.gateway,
                    self.config.assumptions,
                    self.config.region_tag,
                    seed_event_description,
                )
                break
            except LlmParseError:
                if attempt == 1:
                    raise EngineHalt("character profile generation failed twice") from None
        profile.name = self._dedup_name(profile.name)
        if self.config.norms_enabled and self.norm_store is not None:
            profile = enrich_profile(self.gateway, profile, self.config.region_tag)
        while len(self.characters) >= self.config.max_active_characters:
            lru = min(self.last_involvement, key=lambda n: self.last_involvement[n])
            self.retire_character(lru)
        agent = CharacterAgent(profile)
        self.characters[profile.name] = agent
        self._involvement_seq += 1
        self.last_involvement[profile.name] = self._involvement_seq
        return agent

    # -- stage 2: planning --------------------------------------------------

    def _global_plan(
        self, assigned: list, window_start: datetime, window_end: datetime
    ) -> list[PlannedEvent]:
        listing = "\n".join(f"- [{nid}] {desc}" for nid, desc in assigned)
        prompt = render(
            "global_plan",
            assumptions=self._assumptions_text(),
            recent_events=self._recent_events_text(),
            window_date=window_start.date().isoformat(),
            window_start=window_start.strftime("%H:%M"),
            window_end=window_end.strftime("%H:%M"),
            assigned_events=listing,
        )
        request = LlmRequest(
            role_tag="planning",
            messages=[{"role": "user", "content": prompt}],
            response_schema={"plans": "array"},
        )
        try:
            parsed = self.gateway.complete(request).parsed
        except LlmParseError:
            return []
        from .characters import _plan_items_to_events

        return _plan_items_to_events(
            parsed["plans"],
            GLOBAL_CONTROLLER,
            window_start,
            window_end,
            {nid for nid, _ in assigned},
            self.config.max_planned_events,
        )

    def _step_norms_context(self) -> str:
        if not (self.config.norms_enabled and self.norm_store is not None):
            return ""
        context = f"{self.schema.scenario}: " + "; ".join(self.config.assumptions)
        norms = retrieve_norms(
            self.norm_store, self.gateway, self.config.region_tag, context
        )
        if not norms:
            return ""
        ranked = rank_norms(self.gateway, norms, context)
        return "\n".join(f"- {n.text}" for n, _ in ranked)

    # -- stage 3: execution -------------------------------------------------

    def _fill_arguments(self, plan: PlannedEvent, participants: list[str]) -> tuple[dict, bool]:
        node = self.schema.node(plan.schema_node_id) if plan.schema_node_id else None
        if node is not None and node.arg_roles:
            roles = ", ".join(f"{r.role} ({r.kind})" for r in node.arg_roles)
            roles_clause = f"Fill values for exactly these roles: {roles}."
        elif node is not None:
            roles_clause = "This event type defines no argument roles; answer with an empty object."
        else:
            roles_clause = (
                "Identify the salient roles yourself (person, location, instrument, ...)."
            )
        prompt = render(
            "arguments",
            summary=plan.description,
            timestamp=plan.timestamp.isoformat(),
            participants=", ".join(participants) or "(none)",
            roles_clause=roles_clause,
        )
        request = LlmRequest(
            role_tag="arguments",
            messages=[{"role": "user", "content": prompt}],
            temperature=0.0,
            response_schema={"arguments": "object"},
        )
        try:
            raw = self.gateway.complete(request).parsed["arguments"]
        except LlmParseError:
            return {}, True
        arguments = {str(k): str(v) for k, v in raw.items() if isinstance(v, (str, int, float))}
        if node is not None:
            allowed = {r.role for r in node.arg_roles}
            arguments = {k: v for k, v in arguments.items() if k in allowed}
        return arguments, False

    def _describe(self, plan: PlannedEvent, participants: list[str], arguments: dict) -> str:
        prompt = render(
            "description",
            assumptions=self._assumptions_text(),
            summary=plan.description,
            timestamp=plan.timestamp.isoformat(),
            participants=", ".join(participants) or "(none)",
            arguments=json.dumps(dict(sorted(arguments.items())), ensure_ascii=False),
        )
        request = LlmRequest(
            role_tag="description",
            messages=[{"role": "user", "content": prompt}],
            response_schema={"description": "string"},
        )
        try:
            return self.gateway.complete(request).parsed["description"].strip()
        except LlmParseError:
            return plan.description

    def _resolve_participants(self, plan: PlannedEvent) -> list[str]:
        out: list[str] = []
        if plan.controller_name in self.characters:
            out.append(plan.controller_name)
        for name in plan.proposed_participants:
            if name in self.characters and name not in out:
                out.append(name)
        return out

    def execute_event(self, plan: PlannedEvent) -> EventRecord | None:
        """Run one planned event: arguments, description, norms, bookkeeping.

        Returns None when a grounded event got blocked (already executed or
        an XOR sibling fired first); the plan is dropped without a record.
        """
        node = None
        if plan.schema_node_id is not None:
            if plan.schema_node_id in self.executed or schema_graph._xor_blocked(
                self.schema, self.executed, plan.schema_node_id
            ):
                self.assignments.pop(plan.schema_node_id, None)
                return None
            node = self.schema.node(plan.schema_node_id)

        participants = self._resolve_participants(plan)
        warnings: list[str] = []
        arguments, arg_failed = self._fill_arguments(plan, participants)
        if arg_failed:
            warnings.append("argument-extraction-failed")
        description = self._describe(plan, participants, arguments)

        norm_ids: list[str] = []
        if self.config.norms_enabled and self.norm_store is not None:
            norms = retrieve_norms(
                self.norm_store, self.gateway, self.config.region_tag, description
            )
            if norms:
                ranked = rank_norms(self.gateway, norms, description)
                description, norm_ids, length_warning = refine_description(
                    self.gateway, description, ranked
                )
                if length_warning:
                    warnings.append("length-ratio")

        self._event_seq += 1
        record = EventRecord(
            id=self._event_seq,
            timestamp=plan.timestamp,
            schema_node_id=plan.schema_node_id,
            event_type=node.event_type if node is not None else "freeform",
            arguments=arguments,
            participants=participants,
            description=description,
            provenance=plan.controller_name,
            norm_ids=norm_ids,
            warnings=warnings,
        )
        self.history.append(record)
        if plan.schema_node_id is not None:
            self.executed.add(plan.schema_node_id)
            self.assignments.pop(plan.schema_node_id, None)
        for name, value in sorted(arguments.items()):
            kind = "other"
            if node is not None:
                for r in node.arg_roles:
                    if r.role == name:
                        kind = r.kind
            self.entity_registry.setdefault(value, kind)
        for name in participants:
            self._involvement_seq += 1
            self.last_involvement[name] = self._involvement_seq
            self.characters[name].memory.remember(record.id, record.description)
        return record

    # -- stage 4: reactions -------------------------------------------------

    def _process_reactions(self, record: EventRecord, window: tuple[datetime, datetime]) -> None:
        notices = [
            Notice(sender=record.provenance, recipient=name, about_event=record.id)
            for name in record.participants
            if name != record.provenance
        ]
        window_start, window_end = window
        for notice in notices:
            agent = self.characters.get(notice.recipient)
            if agent is None:
                continue
            remaining = [e for e in self._queue if e.controller_name == notice.recipient]
            replacement = agent.replan(
                self.gateway,
                record.timestamp,
                record.description,
                remaining,
                window_start,
                window_end,
                self.config.max_planned_events,
            )
            if replacement is remaining:
                continue
            self._queue = [e for e in self._queue if e.controller_name != notice.recipient]
            for event in replacement:
                # Keep replacements strictly after the trigger even when the
                # agent returned them unclamped.
                if event.timestamp <= record.timestamp:
                    event.timestamp = min(
                        record.timestamp + REACTION_MARGIN, window_end - REACTION_MARGIN
                    )
                self._insertion_seq += 1
                event.insertion_index = self._insertion_seq
                self._queue.append(event)
            self._queue.sort(key=PlannedEvent.sort_key)

    # -- the step -----------------------------------------------------------

    def run_step(self) -> list[EventRecord]:
        if self.is_finished():
            raise EngineHalt("simulation already finished")
        window_start, window_end = self.window()

        # (a) fetch eligible schema events and assign them.
        eligible = schema_graph.eligible_events(
            self.schema, self.executed, self.config.executable_parents
        )
        for node_id in sorted(eligible):
            if node_id in self.assignments:
                continue
            decision = self.assign_event(node_id)
            node = self.schema.node(node_id)
            if decision.kind == "new":
                agent = self.spawn_character(f"{node.event_type}: {node.description or node_id}")
                self.assignments[node_id] = agent.name
            elif decision.kind == "existing":
                self.assignments[node_id] = decision.character
            else:
                self.assignments[node_id] = GLOBAL_CONTROLLER

        # (b) poll every controller for plans, in controller-name order.
        norms_context = self._step_norms_context()
        by_controller: dict[str, list] = {}
        for node_id, controller in sorted(self.assignments.items()):
            node = self.schema.node(node_id)
            by_controller.setdefault(controller, []).append(
                (node_id, f"{node.event_type}: {node.description or node_id}")
            )
        plans: list[PlannedEvent] = []
        for controller in sorted(set(self.characters) | {GLOBAL_CONTROLLER}):
            if controller == GLOBAL_CONTROLLER:
                assigned = by_controller.get(GLOBAL_CONTROLLER, [])
                if not assigned:
                    continue
                produced = self._global_plan(assigned, window_start, window_end)
            else:
                produced = self.characters[controller].plan(
                    self.gateway,
                    self.config.assumptions,
                    window_start,
                    window_end,
                    by_controller.get(controller, []),
                    self.config.max_planned_events,
                    norms_context,
                )
            for event in produced:
                self._insertion_seq += 1
                event.insertion_index = self._insertion_seq
                plans.append(event)

        # (c) merge and execute in temporal order; (d) react after each.
        self._queue = sorted(plans, key=PlannedEvent.sort_key)
        new_records: list[EventRecord] = []
        while self._queue:
            plan = self._queue.pop(0)
            record = self.execute_event(plan)
            if record is None:
                continue
            new_records.append(record)
            self._process_reactions(record, (window_start, window_end))

        self.step_index += 1
        return new_records

    def run(self) -> list[EventRecord]:
        records: list[EventRecord] = []
        while not self.is_finished():
            records.extend(self.run_step())
        return records

    # -- checkpointing ------------------------------------------------------

    def checkpoint(self) -> dict:
        """Full state snapshot; restoring it resumes the run identically."""
        return {
            "config": self.config.to_dict(),
            "step_index": self.step_index,
            "characters": [
                {"profile": a.profile.to_dict(), "memory": a.memory.to_dict()}
                for _, a in sorted(self.characters.items())
            ],
            "retired": [p.to_dict() for p in self.retired],
            "entity_registry": dict(sorted(self.entity_registry.items())),
            "history": [r.to_dict() for r in self.history],
            "executed": sorted(self.executed),
            "assignments": dict(sorted(self.assignments.items())),
            "last_involvement": dict(sorted(self.last_involvement.items())),
            "event_seq": self._event_seq,
            "involvement_seq": self._involvement_seq,
            "insertion_seq": self._insertion_seq,
            "name_counters": dict(sorted(self._name_counters.items())),
            "norm_overlay": self.norm_store.overlay_state() if self.norm_store else None,
        }

    @classmethod
    def from_checkpoint(
        cls,
        raw: dict,
        schema: EventSchema,
        gateway: LlmGateway,
        norm_store: NormStore | None = None,
        config: SimulationConfig | None = None,
    ) -> "SimulationEngine":
        engine = cls(
            schema, config or SimulationConfig.from_dict(raw["config"]), gateway, norm_store
        )
        engine.step_index = raw["step_index"]
        engine.characters = {
            c["profile"]["name"]: CharacterAgent(
                CharacterProfile.from_dict(c["profile"]),
                CharacterMemory.from_dict(c["memory"]),
            )
            for c in raw["characters"]
        }
        engine.retired = [CharacterProfile.from_dict(p) for p in raw["retired"]]
        engine.entity_registry = dict(raw["entity_registry"])
        engine.history = [EventRecord.from_dict(r) for r in raw["history"]]
        engine.executed = set(raw["executed"])
        engine.assignments = dict(raw["assignments"])
        engine.last_involvement = dict(raw["last_involvement"])
        engine._event_seq = raw["event_seq"]
        engine._involvement_seq = raw["involvement_seq"]
        engine._insertion_seq = raw["insertion_seq"]
        engine._name_counters = dict(raw["name_counters"])
        if norm_store is not None and raw.get("norm_overlay"):
            norm_store.restore_overlay(raw["norm_overlay"])
        return engine
