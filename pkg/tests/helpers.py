"""Scripted LLM transport used across the test suite.

Acts as a live "provider": tests run the engine against it in record mode
to build cassettes, then replay those cassettes to check determinism.
Responses can be queued explicitly per stage (exact scenarios) or fall
back to seeded generators (randomized property runs). Each stage draws
from its own RNG stream so enabling/disabling the norm pipeline does not
perturb the other stages' responses.
"""

from __future__ import annotations

import json
import random
import re
from collections import defaultdict, deque

FIRST_NAMES = [
    "Andi", "Maria", "Carlos", "Siti", "Budi", "Dewi", "Rizky", "Putri",
    "Agus", "Lina", "Joko", "Ratna", "Hendra", "Sari", "Eko", "Wati",
]
LAST_NAMES = [
    "Pratama", "Santoso", "Wijaya", "Lestari", "Garcia", "Nugroho",
    "Ramirez", "Halim", "Susanto", "Putra",
]
PROFESSIONS = [
    "nurse", "teacher", "fisherman", "market vendor", "civil servant",
    "journalist", "shop owner", "bus driver", "doctor", "student",
]

_OPTION_RE = re.compile(r"^\d+\. (.+)$", re.MULTILINE)
_ASSIGNED_RE = re.compile(r"^- \[([a-z_0-9]+)\] ", re.MULTILINE)
_NORM_ID_RE = re.compile(r"^- \[([\w-]+)\] ", re.MULTILINE)
_CHECKLIST_RE = re.compile(r"Dimension checklist: (.+)")
_ORIGINAL_RE = re.compile(r"Original event description:\n(.*?)\n\nRelevant", re.DOTALL)
_SIM_COUNT_RE = re.compile(r"^Simulation (\d+):", re.MULTILINE)


class ScriptedTransport:
    """Deterministic fake provider keyed on each request's role tag."""

    def __init__(self, seed=0, spawn_probability=0.6):
        self.seed = seed
        self.spawn_probability = spawn_probability
        self.queues = defaultdict(deque)
        self.requests = []  # every request seen, for prompt-inspection tests
        self.last_usage = {"prompt_tokens": 0, "completion_tokens": 0}
        self._rngs = {}

    def rng(self, tag):
        if tag not in self._rngs:
            self._rngs[tag] = random.Random(f"{self.seed}:{tag}")
        return self._rngs[tag]

    def push(self, role_tag, *responses):
        for r in responses:
            self.queues[role_tag].append(r)
        return self

    def push_json(self, role_tag, *payloads):
        for p in payloads:
            self.queues[role_tag].append(json.dumps(p))
        return self

    def __call__(self, request):
        self.requests.append(request)
        tag = request.role_tag
        if self.queues[tag]:
            response = self.queues[tag].popleft()
            if callable(response):
                response = response(request)
            return response
        return self._default(tag, request)

    # -- stage defaults ----------------------------------------------------

    def _default(self, tag, request):
        prompt = request.messages[-1]["content"]
        rng = self.rng(tag)
        if tag == "assignment":
            options = _OPTION_RE.findall(prompt)
            creatable = [o for o in options if o.startswith("create")]
            if rng.random() < self.spawn_probability and creatable:
                return json.dumps({"choice": creatable[0]})
            return json.dumps({"choice": rng.choice(options)})
        if tag == "profile":
            name = f"{rng.choice(FIRST_NAMES)} {rng.choice(LAST_NAMES)}"
            return json.dumps(
                {
                    "name": name,
                    "age": rng.randint(18, 70),
                    "profession": rng.choice(PROFESSIONS),
                    "backstory": f"{name} has lived in the region all their life.",
                    "plotline": "gradually becomes a pillar of the local response",
                }
            )
        if tag == "profile-enrich":
            m = _CHECKLIST_RE.search(prompt)
            wanted = [w.strip() for w in m.group(1).split(",")] if m else []
            dims = {w: f"{w} value {rng.randint(1, 9)}" for w in wanted}
            return json.dumps(
                {"dimensions": dims, "backstory_extension": "They are well known locally."}
            )
        if tag == "planning":
            assigned = _ASSIGNED_RE.findall(prompt)
            plans = []
            for node_id in assigned:
                plans.append(
                    {
                        "time": f"{rng.randint(6, 18):02d}:{rng.choice([0, 15, 30, 45]):02d}",
                        "description": f"carries out {node_id.replace('_', ' ')}",
                        "schema_node_id": node_id,
                        "participants": [],
                    }
                )
            for _ in range(rng.randint(0, 2)):
                plans.append(
                    {
                        "time": f"{rng.randint(6, 21):02d}:{rng.choice([0, 10, 20, 40]):02d}",
                        "description": rng.choice(
                            [
                                "checks on the neighbors",
                                "goes to work despite the situation",
                                "stocks up on supplies",
                                "calls family members",
                                "follows the news updates",
                            ]
                        ),
                        "schema_node_id": None,
                        "participants": [],
                    }
                )
            return json.dumps({"plans": plans})
        if tag == "critique":
            return json.dumps({"has_suggestions": False, "verdicts": []})
        if tag == "replan":
            return json.dumps({"plans": []})
        if tag == "arguments":
            m = re.search(r"exactly these roles: (.+)\.", prompt)
            args = {}
            if m:
                for part in m.group(1).split(", "):
                    role = part.split(" (")[0]
                    args[role] = f"entity-{rng.randint(1, 50)}"
            return json.dumps({"arguments": args})
        if tag == "description":
            n = rng.randint(100, 999)
            return json.dumps(
                {
                    "description": (
                        f"Detailed account #{n} of the event as it unfolded, with "
                        "responders coordinating on the ground and residents "
                        "adjusting their plans for the rest of the day."
                    )
                }
            )
        if tag == "norm-elicit":
            return json.dumps({"norms": []})
        if tag == "norm-rank":
            ids = _NORM_ID_RE.findall(prompt)
            return json.dumps(
                {"scores": [{"id": i, "score": round(rng.random(), 2)} for i in ids]}
            )
        if tag == "norm-refine":
            m = _ORIGINAL_RE.search(prompt)
            original = m.group(1).strip() if m else "the event"
            return f"{original} Neighbors pitched in, true to local custom."
        if tag == "judge":
            count = max((int(i) for i in _SIM_COUNT_RE.findall(prompt)), default=1)
            payload = {"thoughts": "Scores reflect overall flow."}
            for i in range(1, count + 1):
                payload[f"simulation_{i}"] = str(rng.randint(1, 10))
            return json.dumps(payload)
        if tag == "overview":
            return "An overview of how the scenario unfolded, day by day."
        raise AssertionError(f"no scripted behaviour for role tag {tag!r}")
