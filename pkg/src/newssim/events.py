"""Shared event types passed between the engine, characters, and output."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

GLOBAL_CONTROLLER = "global"


@dataclass
class PlannedEvent:
    timestamp: datetime
    description: str
    controller_name: str
    schema_node_id: str | None = None
    proposed_participants: list[str] = field(default_factory=list)
    insertion_index: int = 0
    from_reaction: bool = False

    def sort_key(self):
        return (self.timestamp, self.controller_name, self.insertion_index)


@dataclass
class EventRecord:
    id: int
    timestamp: datetime
    schema_node_id: str | None
    event_type: str  # "freeform" when ungrounded
    arguments: dict
    participants: list[str]
    description: str
    provenance: str  # controller name that proposed the event
    norm_ids: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "timestamp": self.timestamp.isoformat(),
            "schema_node_id": self.schema_node_id,
            "event_type": self.event_type,
            "arguments": dict(sorted(self.arguments.items())),
            "participants": list(self.participants),
            "description": self.description,
            "provenance": self.provenance,
            "norm_ids": list(self.norm_ids),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EventRecord":
        return cls(
            id=raw["id"],
            timestamp=datetime.fromisoformat(raw["timestamp"]),
            schema_node_id=raw.get("schema_node_id"),
            event_type=raw["event_type"],
            arguments=dict(raw.get("arguments", {})),
            participants=list(raw.get("participants", [])),
            description=raw["description"],
            provenance=raw["provenance"],
            norm_ids=list(raw.get("norm_ids", [])),
            warnings=list(raw.get("warnings", [])),
        )


@dataclass
class Notice:
    sender: str
    recipient: str
    about_event: int
    kind: str = "involvement-notice"
