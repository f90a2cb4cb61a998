"""Event schema graphs: atomic event nodes, temporal/hierarchical edges, logic gates.

A schema constrains the global structure of a simulation. Nodes are atomic
events; hierarchical edges group them into a forest; temporal edges order
siblings within one hierarchy level; AND/OR/XOR gates govern how a parent's
children may fire and when the parent counts as complete.

Validated schemas are immutable and safe to share across simulations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import SchemaSyntaxError, SchemaValidationError, UnknownNodeError

ENTITY_KINDS = ("person", "organization", "location", "instrument", "other")
GATE_TYPES = ("AND", "OR", "XOR")
EDGE_KINDS = ("temporal", "hierarchical")


@dataclass(frozen=True)
class ArgRole:
    role: str
    kind: str  # one of ENTITY_KINDS


@dataclass(frozen=True)
class SchemaNode:
    id: str
    event_type: str
    description: str = ""
    arg_roles: tuple[ArgRole, ...] = ()


@dataclass(frozen=True)
class SchemaEdge:
    kind: str  # one of EDGE_KINDS
    src: str
    dst: str


@dataclass(frozen=True)
class Gate:
    owner: str
    gate_type: str  # one of GATE_TYPES
    children: tuple[str, ...]


@dataclass(frozen=True)
class EventSchema:
    id: str
    scenario: str
    nodes: tuple[SchemaNode, ...]
    edges: tuple[SchemaEdge, ...]
    gates: tuple[Gate, ...]
    # Derived lookups, built by validate().
    _node_ids: frozenset[str] = field(default=frozenset(), compare=False)
    _parent: dict = field(default_factory=dict, compare=False)
    _children: dict = field(default_factory=dict, compare=False)
    _temporal_preds: dict = field(default_factory=dict, compare=False)
    _gate_by_owner: dict = field(default_factory=dict, compare=False)

    def node(self, node_id: str) -> SchemaNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNodeError(f"unknown node id {node_id!r}")

    def has_node(self, node_id: str) -> bool:
        return node_id in self._node_ids

    @property
    def root_node_ids(self) -> list[str]:
        """Nodes with no hierarchical parent, in declaration order."""
        return [n.id for n in self.nodes if n.id not in self._parent]

    def children_of(self, node_id: str) -> list[str]:
        return list(self._children.get(node_id, ()))

    def parent_of(self, node_id: str) -> str | None:
        return self._parent.get(node_id)

    def gate_of(self, node_id: str) -> Gate | None:
        return self._gate_by_owner.get(node_id)

    def descendants_of(self, node_id: str) -> set[str]:
        out: set[str] = set()
        stack = list(self._children.get(node_id, ()))
        while stack:
            cur = stack.pop()
            out.add(cur)
            stack.extend(self._children.get(cur, ()))
        return out


def _err(message: str, path: str = ""):
    raise SchemaValidationError(message, path)


def validate_schema(
    schema_id: str,
    scenario: str,
    nodes: list[SchemaNode],
    edges: list[SchemaEdge],
    gates: list[Gate],
) -> EventSchema:
    """Check every structural invariant and build the derived lookups."""
    node_ids: set[str] = set()
    for n in nodes:
        if not n.id:
            _err("node id empty", "nodes")
        if n.id in node_ids:
            _err("duplicate node id", f"nodes/{n.id}")
        node_ids.add(n.id)
        if not n.event_type:
            _err("eventType empty", f"nodes/{n.id}")
        roles = [r.role for r in n.arg_roles]
        if len(roles) != len(set(roles)):
            _err("duplicate role name", f"nodes/{n.id}/arg_roles")
        for r in n.arg_roles:
            if r.kind not in ENTITY_KINDS:
                _err(f"unknown entity kind {r.kind!r}", f"nodes/{n.id}/arg_roles/{r.role}")

    parent: dict[str, str] = {}
    children: dict[str, list[str]] = {}
    temporal_preds: dict[str, list[str]] = {}
    for i, e in enumerate(edges):
        path = f"edges/{i}"
        if e.kind not in EDGE_KINDS:
            _err(f"unknown edge kind {e.kind!r}", path)
        if e.src not in node_ids or e.dst not in node_ids:
            _err(f"edge endpoint missing ({e.src} -> {e.dst})", path)
        if e.src == e.dst:
            _err("self-loop", path)
        if e.kind == "hierarchical":
            if e.dst in parent:
                _err(f"node {e.dst} has two hierarchical parents", path)
            parent[e.dst] = e.src
            children.setdefault(e.src, []).append(e.dst)
        else:
            temporal_preds.setdefault(e.dst, []).append(e.src)

    # Hierarchical edges must form a forest: parent uniqueness is enforced
    # above, so only cycles remain to be ruled out.
    for start in node_ids:
        seen = set()
        cur: str | None = start
        while cur is not None:
            if cur in seen:
                _err("hierarchical cycle", f"nodes/{start}")
            seen.add(cur)
            cur = parent.get(cur)

    # Temporal edges connect siblings of one hierarchy level.
    for e in edges:
        if e.kind == "temporal" and parent.get(e.src) != parent.get(e.dst):
            _err(
                f"temporal edge crosses hierarchy levels ({e.src} -> {e.dst})",
                "edges",
            )

    # Temporal DAG: Kahn's algorithm over temporal edges only.
    indeg = {nid: 0 for nid in node_ids}
    succs: dict[str, list[str]] = {}
    for dst, preds in temporal_preds.items():
        for src in preds:
            indeg[dst] += 1
            succs.setdefault(src, []).append(dst)
    queue = [nid for nid, d in indeg.items() if d == 0]
    visited = 0
    while queue:
        cur = queue.pop()
        visited += 1
        for nxt in succs.get(cur, ()):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if visited != len(node_ids):
        _err("temporal cycle", "edges")

    gate_by_owner: dict[str, Gate] = {}
    for g in gates:
        path = f"gates/{g.owner}"
        if g.gate_type not in GATE_TYPES:
            _err(f"unknown gate type {g.gate_type!r}", path)
        if g.owner not in node_ids:
            _err("gate owner missing", path)
        if g.owner in gate_by_owner:
            _err("node owns two gates", path)
        if not g.children:
            _err("gate children empty", path)
        for c in g.children:
            if parent.get(c) != g.owner:
                _err(f"gate child {c} is not a hierarchical child of owner", path)
        gate_by_owner[g.owner] = g

    return EventSchema(
        id=schema_id,
        scenario=scenario,
        nodes=tuple(nodes),
        edges=tuple(edges),
        gates=tuple(gates),
        _node_ids=frozenset(node_ids),
        _parent=parent,
        _children={k: tuple(v) for k, v in children.items()},
        _temporal_preds={k: tuple(v) for k, v in temporal_preds.items()},
        _gate_by_owner=gate_by_owner,
    )


def parse_schema(document: str) -> EventSchema:
    """Parse and validate a schema document (see the file format in README)."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaSyntaxError(f"malformed schema document: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaSyntaxError("schema document must be a JSON object")
    try:
        nodes = [
            SchemaNode(
                id=n["id"],
                event_type=n["event_type"],
                description=n.get("description", ""),
                arg_roles=tuple(
                    ArgRole(role=r["role"], kind=r["kind"]) for r in n.get("arg_roles", [])
                ),
            )
            for n in raw.get("nodes", [])
        ]
        edges = [
            SchemaEdge(kind=e["kind"], src=e["from"], dst=e["to"]) for e in raw.get("edges", [])
        ]
        gates = [
            Gate(owner=g["owner"], gate_type=g["type"], children=tuple(g["children"]))
            for g in raw.get("gates", [])
        ]
    except (KeyError, TypeError) as exc:
        raise SchemaSyntaxError(f"missing or malformed field: {exc}") from exc
    return validate_schema(raw.get("id", ""), raw.get("scenario", ""), nodes, edges, gates)


def serialize_schema(schema: EventSchema) -> str:
    """Inverse of parse_schema; stable field order for diff-friendly files."""
    doc = {
        "id": schema.id,
        "scenario": schema.scenario,
        "nodes": [
            {
                "id": n.id,
                "event_type": n.event_type,
                "description": n.description,
                "arg_roles": [{"role": r.role, "kind": r.kind} for r in n.arg_roles],
            }
            for n in schema.nodes
        ],
        "edges": [{"kind": e.kind, "from": e.src, "to": e.dst} for e in schema.edges],
        "gates": [
            {"owner": g.owner, "type": g.gate_type, "children": list(g.children)}
            for g in schema.gates
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def load_schema(path) -> EventSchema:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())


def _check_executed(schema: EventSchema, executed: set[str]) -> None:
    unknown = executed - set(schema._node_ids)
    if unknown:
        raise UnknownNodeError(f"executed set references unknown nodes: {sorted(unknown)}")


def _subtree_triggered(schema: EventSchema, executed: set[str], node_id: str) -> bool:
    """True if the node or any of its descendants has executed."""
    if node_id in executed:
        return True
    return bool(schema.descendants_of(node_id) & executed)


def _pred_satisfied(schema: EventSchema, executed: set[str], pred_id: str) -> bool:
    # A grouping predecessor (has children) counts as done once complete;
    # an atomic predecessor must itself have executed.
    if schema.children_of(pred_id):
        return is_complete(schema, executed, pred_id)
    return pred_id in executed


def _xor_blocked(schema: EventSchema, executed: set[str], node_id: str) -> bool:
    # Walk up the hierarchy: if any ancestor (or the node itself) sits under
    # an XOR gate whose other branch already fired, the node is ineligible.
    cur: str | None = node_id
    while cur is not None:
        parent = schema.parent_of(cur)
        if parent is not None:
            gate = schema.gate_of(parent)
            if gate is not None and gate.gate_type == "XOR" and cur in gate.children:
                for sibling in gate.children:
                    if sibling != cur and _subtree_triggered(schema, executed, sibling):
                        return True
        cur = parent
    return False


def eligible_events(
    schema: EventSchema,
    executed: set[str],
    executable_parents: bool = False,
) -> set[str]:
    """Nodes that may fire next, given the set of already-executed nodes.

    A node is eligible when it has not executed, all its temporal
    predecessors are done (a node inherits the temporal constraints of its
    ancestors: a child cannot fire before its parent's predecessors are
    done), and no XOR sibling branch has already fired. Grouping parents
    are not executable unless ``executable_parents``.
    """
    _check_executed(schema, executed)
    out: set[str] = set()
    for n in schema.nodes:
        nid = n.id
        if nid in executed:
            continue
        if not executable_parents and schema.children_of(nid):
            continue
        cur: str | None = nid
        ready = True
        while cur is not None and ready:
            preds = schema._temporal_preds.get(cur, ())
            ready = all(_pred_satisfied(schema, executed, p) for p in preds)
            cur = schema.parent_of(cur)
        if not ready:
            continue
        if _xor_blocked(schema, executed, nid):
            continue
        out.add(nid)
    return out


def is_complete(schema: EventSchema, executed: set[str], node_id: str) -> bool:
    """Completion semantics: leaves execute, parents complete via their gate.

    A gateless parent behaves like AND (all children complete).
    """
    if not schema.has_node(node_id):
        raise UnknownNodeError(f"unknown node id {node_id!r}")
    _check_executed(schema, executed)
    children = schema.children_of(node_id)
    if not children:
        return node_id in executed
    gate = schema.gate_of(node_id)
    if gate is None:
        return all(is_complete(schema, executed, c) for c in children)
    # Children outside the gate are always required; the gate rules only
    # its own children.
    ungated = [c for c in children if c not in gate.children]
    if not all(is_complete(schema, executed, c) for c in ungated):
        return False
    done = [is_complete(schema, executed, c) for c in gate.children]
    if gate.gate_type == "AND":
        return all(done)
    if gate.gate_type == "OR":
        return any(done)
    return sum(done) == 1  # XOR: exactly one branch
