"""LLM-as-judge evaluation: listwise scoring of 1-3 simulations per metric.

The prompt is a bit-exact instantiation of a fixed template (one call per
metric); scores are strict-JSON parsed, range-checked, and aggregated into
a per-variant mean table.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .errors import EmptyCellError, JudgeRangeError, LlmParseError
from .gateway import LlmGateway, LlmRequest
from .output import SimulationExport
from .prompting import load_template

METRICS = ("coherent", "entailment", "realistic", "appropriate")
MAX_SIMULATIONS = 3


@dataclass
class JudgeRequestSpec:
    scenario_name: str
    assumptions: list[str]
    simulations: list[SimulationExport]
    metric: str

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not 1 <= len(self.simulations) <= MAX_SIMULATIONS:
            raise ValueError("spec must carry between 1 and 3 simulations")


@dataclass
class Judgment:
    thoughts: str
    scores: dict = field(default_factory=dict)  # simulation index (1-based) -> int
    repair_used: bool = False


def _event_lines(export: SimulationExport) -> str:
    return "\n".join(f"- {e.timestamp.isoformat()}: {e.description}" for e in export.events)


def render_judge_prompt(spec: JudgeRequestSpec) -> str:
    """Deterministic prompt instantiation; injective in the simulation count."""
    blocks = []
    for i, sim in enumerate(spec.simulations, start=1):
        blocks.append(f"Simulation {i}:\n{_event_lines(sim)}")
    simulations = "\n---\n".join(blocks)
    fmt_lines = ["{", '"thoughts": "Your step-by-step reasoning for the evaluation scores you will provide",']
    for i in range(1, len(spec.simulations) + 1):
        fmt_lines.append(
            f'"simulation_{i}": "Score for simulation {i}. '
            'Just provide a number here in the range of 1 to 10",'
        )
    fmt_lines.append("}")
    response_format = "\n".join(fmt_lines)
    return load_template("judge_base").format(
        scenario_name=spec.scenario_name,
        assumptions=json.dumps(spec.assumptions, ensure_ascii=False),
        simulations=simulations,
        metric_clause=load_template(f"judge_metric_{spec.metric}").strip(),
        response_format=response_format,
    )


def _coerce_score(value, index: int) -> int:
    if isinstance(value, bool):
        raise JudgeRangeError(index, value)
    if isinstance(value, str):
        try:
            value = int(value.strip())
        except ValueError as exc:
            raise LlmParseError(f"score for simulation {index} is not numeric: {value!r}") from exc
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int) or not 1 <= value <= 10:
        raise JudgeRangeError(index, value)
    return value


def parse_judgment(text: str, n_simulations: int, repair_used: bool = False) -> Judgment:
    from .gateway import parse_structured

    schema = {"thoughts": "string"}
    schema.update({f"simulation_{i}": "any" for i in range(1, n_simulations + 1)})
    parsed = parse_structured(text, schema)
    scores = {
        i: _coerce_score(parsed[f"simulation_{i}"], i) for i in range(1, n_simulations + 1)
    }
    return Judgment(thoughts=parsed["thoughts"], scores=scores, repair_used=repair_used)


def judge(gateway: LlmGateway, spec: JudgeRequestSpec) -> Judgment:
    prompt = render_judge_prompt(spec)
    schema = {"thoughts": "string"}
    schema.update({f"simulation_{i}": "any" for i in range(1, len(spec.simulations) + 1)})
    request = LlmRequest(
        role_tag="judge",
        messages=[{"role": "user", "content": prompt}],
        temperature=0.0,
        response_schema=schema,
    )
    response = gateway.complete(request)
    scores = {
        i: _coerce_score(response.parsed[f"simulation_{i}"], i)
        for i in range(1, len(spec.simulations) + 1)
    }
    return Judgment(
        thoughts=response.parsed["thoughts"], scores=scores, repair_used=response.repair_used
    )


@dataclass
class Cell:
    mean: float
    n: int


def aggregate(judgments: list) -> dict:
    """Mean per (variant, metric) cell over (variant, metric, score) rows."""
    buckets: dict[tuple, list] = {}
    for variant, metric, score in judgments:
        buckets.setdefault((variant, metric), []).append(score)
    out = {}
    for key, scores in buckets.items():
        if not scores:
            raise EmptyCellError(f"no judgments for cell {key}")
        out[key] = Cell(mean=sum(scores) / len(scores), n=len(scores))
    return out


def report_rows(cells: dict, variants: list) -> list:
    """Table rows: one per metric, columns in declared variant order."""
    rows = []
    for metric in METRICS:
        row = {"metric": metric}
        for variant in variants:
            cell = cells.get((variant, metric))
            if cell is None:
                raise EmptyCellError(f"no judgments for ({variant}, {metric})")
            row[variant] = f"{cell.mean:.2f}"
            row[f"{variant}_n"] = cell.n
        rows.append(row)
    return rows


def report_csv(cells: dict, variants: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric"] + [v for v in variants] + [f"{v}_n" for v in variants])
    for row in report_rows(cells, variants):
        writer.writerow(
            [row["metric"]] + [row[v] for v in variants] + [row[f"{v}_n"] for v in variants]
        )
    return buf.getvalue()


def report_markdown(cells: dict, variants: list) -> str:
    header = "| Metric | " + " | ".join(variants) + " |"
    sep = "|---" * (len(variants) + 1) + "|"
    lines = [header, sep]
    for row in report_rows(cells, variants):
        label = row["metric"].capitalize()
        cells_text = " | ".join(f"{row[v]} (n={row[f'{v}_n']})" for v in variants)
        lines.append(f"| {label} | {cells_text} |")
    return "\n".join(lines)
