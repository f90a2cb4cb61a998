"""Headless driver: run simulations, validate schemas, judge comparisons.

Exit codes: 0 success, 1 validation problem, 2 engine halt, 3 cassette
miss. Stdout stays human-readable; machine output goes to files.
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .engine import SimulationConfig, SimulationEngine
from .errors import (
    CassetteMissError,
    EngineHalt,
    JudgeRangeError,
    LlmParseError,
    SchemaSyntaxError,
    SchemaValidationError,
    SimError,
)
from .gateway import Cassette, FailingTransport, LlmGateway
from .judge import METRICS, JudgeRequestSpec, aggregate, judge, report_csv, report_markdown
from .norms import NormStore
from .output import export_log, generate_overview, parse_export, to_markdown
from .resources import default_norms_path
from .schema_graph import load_schema

EXIT_VALIDATION = 1
EXIT_ENGINE_HALT = 2
EXIT_CASSETTE_MISS = 3


def _load_toml_defaults(config_path: str | None, section: str) -> dict:
    path = Path(config_path) if config_path else Path("sim.toml")
    if not path.exists():
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return data.get(section, {})


def _make_gateway(mode: str | None, cassette_path: str | None) -> LlmGateway | None:
    if mode == "replay":
        if not cassette_path:
            raise click.UsageError("--mode replay requires --cassette")
        return LlmGateway(
            mode="replay", transport=FailingTransport(), cassette=Cassette(cassette_path)
        )
    if mode == "record":
        if not cassette_path:
            raise click.UsageError("--mode record requires --cassette")
        return LlmGateway(mode="record", cassette=Cassette(cassette_path))
    return LlmGateway(mode="passthrough")


@click.group()
def main():
    """Complex news event simulator."""


@main.command()
@click.option("--schema", "schema_path", required=True, type=click.Path())
def validate(schema_path):
    """Validate a schema file; print the violation path on failure."""
    try:
        schema = load_schema(schema_path)
    except (SchemaSyntaxError, SchemaValidationError) as exc:
        click.echo(f"INVALID: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except FileNotFoundError as exc:
        click.echo(f"INVALID: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(
        f"OK: {schema.id} ({len(schema.nodes)} nodes, "
        f"{len(schema.edges)} edges, {len(schema.gates)} gates)"
    )


@main.command()
@click.option("--schema", "schema_path", type=click.Path())
@click.option("--assumptions", "assumptions_path", type=click.Path())
@click.option("--region", "region_tag")
@click.option("--steps", type=int)
@click.option("--seed", type=int)
@click.option("--start-time", "start_time")
@click.option("--cassette", "cassette_path", type=click.Path())
@click.option("--mode", type=click.Choice(["record", "replay"]))
@click.option("--no-norms", is_flag=True, default=None)
@click.option("--norms-file", "norms_path", type=click.Path())
@click.option("--max-characters", type=int)
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.option("--config", "config_path", type=click.Path())
def run(
    schema_path,
    assumptions_path,
    region_tag,
    steps,
    seed,
    start_time,
    cassette_path,
    mode,
    no_norms,
    norms_path,
    max_characters,
    out_dir,
    config_path,
):
    """Run a simulation and write export JSON + Markdown."""
    defaults = _load_toml_defaults(config_path, "run")
    schema_path = schema_path or defaults.get("schema")
    assumptions_path = assumptions_path or defaults.get("assumptions")
    region_tag = region_tag or defaults.get("region")
    steps = steps if steps is not None else defaults.get("steps", 5)
    seed = seed if seed is not None else defaults.get("seed", 0)
    start_time = start_time or defaults.get("start_time")
    cassette_path = cassette_path or defaults.get("cassette")
    mode = mode or defaults.get("mode")
    no_norms = no_norms if no_norms is not None else defaults.get("no_norms", False)
    norms_path = norms_path or defaults.get("norms_file")
    max_characters = (
        max_characters if max_characters is not None else defaults.get("max_characters", 8)
    )

    if not schema_path or not assumptions_path or not region_tag:
        click.echo("missing required flags: --schema, --assumptions, --region", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        schema = load_schema(schema_path)
        assumptions = [
            line.strip()
            for line in Path(assumptions_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        config = SimulationConfig(
            schema_id=schema.id,
            assumptions=assumptions,
            region_tag=region_tag,
            start_time=(
                datetime.fromisoformat(start_time)
                if start_time
                else datetime(2030, 1, 1, tzinfo=timezone.utc)
            ),
            max_steps=steps,
            max_active_characters=max_characters,
            norms_enabled=not no_norms,
            random_seed=seed,
        )
    except (SchemaSyntaxError, SchemaValidationError, ValueError, OSError) as exc:
        click.echo(f"INVALID: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)

    norm_store = None
    if config.norms_enabled:
        seed_path = Path(norms_path) if norms_path else default_norms_path()
        if seed_path.exists():
            norm_store = NormStore.load(seed_path)
    gateway = _make_gateway(mode, cassette_path)

    engine = SimulationEngine(schema, config, gateway, norm_store)
    try:
        engine.run()
    except CassetteMissError as exc:
        click.echo(f"CASSETTE MISS: {exc}", err=True)
        sys.exit(EXIT_CASSETTE_MISS)
    except (EngineHalt, LlmParseError) as exc:
        click.echo(f"ENGINE HALT: {exc}", err=True)
        sys.exit(EXIT_ENGINE_HALT)

    export = export_log(engine)
    if export.events:
        export.overview = generate_overview(None, export)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "export.json").write_text(export.to_json(), encoding="utf-8")
    (out / "export.md").write_text(to_markdown(export), encoding="utf-8")
    if mode == "record":
        gateway.cassette.save(cassette_path)
    click.echo(
        f"done: {len(export.events)} events over {engine.step_index} steps "
        f"-> {out / 'export.json'}"
    )


@main.command("eval")
@click.option("--metric", default="all")
@click.option(
    "--variants",
    "variant_specs",
    multiple=True,
    required=True,
    help="name=dir pairs; column order follows declaration order",
)
@click.option("--cassette", "cassette_path", type=click.Path())
@click.option("--mode", type=click.Choice(["record", "replay"]))
@click.option("--out", "out_dir", type=click.Path(), default=".")
def eval_cmd(metric, variant_specs, cassette_path, mode, out_dir):
    """Judge exports per variant and emit a metric x variant report."""
    metrics = list(METRICS) if metric == "all" else [metric]
    for m in metrics:
        if m not in METRICS:
            click.echo(f"unknown metric {m!r}", err=True)
            sys.exit(EXIT_VALIDATION)
    variants = []
    exports_by_variant = {}
    for spec_text in variant_specs:
        if "=" not in spec_text:
            click.echo(f"bad --variants value {spec_text!r}; expected name=dir", err=True)
            sys.exit(EXIT_VALIDATION)
        name, directory = spec_text.split("=", 1)
        files = sorted(Path(directory).glob("*.json"))
        if not files:
            click.echo(f"no export files in {directory}", err=True)
            sys.exit(EXIT_VALIDATION)
        exports = []
        for path in files:
            try:
                exports.append((path, parse_export(path.read_text(encoding="utf-8"))))
            except (SimError, json.JSONDecodeError, KeyError) as exc:
                click.echo(f"bad export {path}: {exc}", err=True)
                sys.exit(EXIT_VALIDATION)
        variants.append(name)
        exports_by_variant[name] = exports

    gateway = _make_gateway(mode, cassette_path)
    rows = []
    for name in variants:
        for path, export in exports_by_variant[name]:
            for m in metrics:
                spec = JudgeRequestSpec(
                    scenario_name=export.scenario or export.config.get("schema_id", ""),
                    assumptions=export.config.get("assumptions", []),
                    simulations=[export],
                    metric=m,
                )
                try:
                    judgment = judge(gateway, spec)
                except CassetteMissError as exc:
                    click.echo(f"CASSETTE MISS: {exc}", err=True)
                    sys.exit(EXIT_CASSETTE_MISS)
                except (LlmParseError, JudgeRangeError) as exc:
                    click.echo(f"judge failed on {path}: {exc}", err=True)
                    sys.exit(EXIT_VALIDATION)
                rows.append((name, m, judgment.scores[1]))
    cells = aggregate(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(cells, variants), encoding="utf-8")
    (out / "report.md").write_text(report_markdown(cells, variants), encoding="utf-8")
    if mode == "record":
        gateway.cassette.save(cassette_path)
    click.echo(f"report written to {out / 'report.csv'} and {out / 'report.md'}")


@main.command()
@click.option("--bind", default="127.0.0.1:8000")
@click.option("--data-dir", type=click.Path(), default="./data")
@click.option("--schema-dir", type=click.Path())
@click.option("--norms-file", type=click.Path())
def serve(bind, data_dir, schema_dir, norms_file):
    """Serve the HTTP API for the steering UI."""
    import uvicorn

    from .service import create_app

    host, _, port = bind.partition(":")
    app = create_app(data_dir=data_dir, schema_dir=schema_dir, norms_path=norms_file)
    uvicorn.run(app, host=host, port=int(port or 8000))


if __name__ == "__main__":
    main()
