"""HTTP service for the steering UI: simulation lifecycle, schemas, exports.

Each simulation lives in its own append-only directory (config, cassette
settings, one checkpoint per step, export). Per-simulation mutations are
serialized by a non-blocking lease; a second concurrent mutation gets a
409. No database, no auth (single-analyst tool).
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .engine import SimulationConfig, SimulationEngine
from .errors import (
    CassetteMissError,
    EngineHalt,
    SimError,
    UnknownCheckpointError,
    UnknownSchemaError,
)
from .gateway import Cassette, LlmGateway
from .judge import METRICS, JudgeRequestSpec, judge
from .norms import NormStore
from .output import export_log, generate_overview, parse_export
from .resources import default_norms_path, default_schema_dir
from .schema_graph import EventSchema, load_schema, serialize_schema


class SchemaLibrary:
    def __init__(self, schema_dir: Path):
        self.schema_dir = Path(schema_dir)

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.schema_dir.glob("*.json"))

    def get(self, schema_id: str) -> EventSchema:
        path = self.schema_dir / f"{schema_id}.json"
        if not path.exists():
            raise UnknownSchemaError(f"unknown schema id {schema_id!r}")
        return load_schema(path)


class SimulationStore:
    """Disk-backed registry of simulations and their step checkpoints."""

    def __init__(self, data_dir: Path, library: SchemaLibrary, norms_path: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.library = library
        self.norms_path = Path(norms_path)
        self._leases: dict[str, threading.Lock] = {}
        self._leases_guard = threading.Lock()

    # -- filesystem layout --------------------------------------------------

    def _dir(self, sim_id: str) -> Path:
        return self.data_dir / sim_id

    def _handle_path(self, sim_id: str) -> Path:
        return self._dir(sim_id) / "handle.json"

    def _checkpoint_path(self, sim_id: str, step: int) -> Path:
        return self._dir(sim_id) / "checkpoints" / f"step_{step:04d}.json"

    def _lease(self, sim_id: str) -> threading.Lock:
        with self._leases_guard:
            return self._leases.setdefault(sim_id, threading.Lock())

    def _write_json(self, path: Path, payload: dict) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")

    def _read_json(self, path: Path) -> dict:
        return json.loads(path.read_text(encoding="utf-8"))

    # -- handles ------------------------------------------------------------

    def handle(self, sim_id: str) -> dict:
        path = self._handle_path(sim_id)
        if not path.exists():
            raise SimError(f"unknown simulation {sim_id!r}")
        return self._read_json(path)

    def _save_handle(self, handle: dict) -> None:
        self._write_json(self._handle_path(handle["sim_id"]), handle)

    # -- engine plumbing ----------------------------------------------------

    def _gateway(self, handle: dict) -> LlmGateway:
        mode = handle.get("llm_mode", "passthrough")
        cassette_path = handle.get("cassette")
        cassette = Cassette(cassette_path) if cassette_path else None
        return LlmGateway(mode=mode, cassette=cassette)

    def _engine_at(self, handle: dict, step: int) -> SimulationEngine:
        sim_id = handle["sim_id"]
        path = self._checkpoint_path(sim_id, step)
        if not path.exists():
            raise UnknownCheckpointError(f"no checkpoint at step {step} for {sim_id}")
        raw = self._read_json(path)
        schema = self.library.get(raw["config"]["schema_id"])
        norm_store = (
            NormStore.load(self.norms_path)
            if raw["config"].get("norms_enabled") and self.norms_path.exists()
            else None
        )
        gateway = self._gateway(handle)
        if gateway.mode == "replay":
            gateway.cassette.fast_forward(raw.get("llm_calls", 0))
        return SimulationEngine.from_checkpoint(raw, schema, gateway, norm_store)

    def _save_checkpoint(self, sim_id: str, engine: SimulationEngine) -> None:
        snapshot = engine.checkpoint()
        snapshot["llm_calls"] = getattr(engine.gateway, "calls_made", 0)
        self._write_json(self._checkpoint_path(sim_id, engine.step_index), snapshot)

    # -- operations ---------------------------------------------------------

    def create(self, config: SimulationConfig, llm_mode="passthrough", cassette=None) -> dict:
        self.library.get(config.schema_id)  # raises UnknownSchemaError
        sim_id = f"sim-{uuid.uuid4().hex[:12]}"
        handle = {
            "sim_id": sim_id,
            "status": "created",
            "current_step": 0,
            "parent_sim": None,
            "llm_mode": llm_mode,
            "cassette": str(cassette) if cassette else None,
        }
        self._dir(sim_id).mkdir(parents=True)
        self._write_json(self._dir(sim_id) / "config.json", config.to_dict())
        norm_store = (
            NormStore.load(self.norms_path)
            if config.norms_enabled and self.norms_path.exists()
            else None
        )
        engine = SimulationEngine(
            self.library.get(config.schema_id), config, self._gateway(handle), norm_store
        )
        self._save_checkpoint(sim_id, engine)
        self._save_handle(handle)
        return handle

    def step(self, sim_id: str, n: int) -> tuple[dict, list[dict]]:
        handle = self.handle(sim_id)
        if handle["status"] in ("running", "finished"):
            if handle["status"] == "running":
                raise SimError("simulation is running")
            return handle, []
        if n <= 0:
            return handle, []
        lease = self._lease(sim_id)
        if not lease.acquire(blocking=False):
            from .errors import ConflictError

            raise ConflictError(f"simulation {sim_id} is busy")
        try:
            engine = self._engine_at(handle, handle["current_step"])
            new_events = []
            for _ in range(n):
                if engine.is_finished():
                    break
                try:
                    records = engine.run_step()
                except EngineHalt as exc:
                    handle["status"] = "failed"
                    self._save_handle(handle)
                    raise EngineHalt(
                        f"engine halt at step {engine.step_index}: {exc}"
                    ) from exc
                new_events.extend(r.to_dict() for r in records)
                self._save_checkpoint(sim_id, engine)
            handle["current_step"] = engine.step_index
            handle["status"] = "finished" if engine.is_finished() else "paused"
            self._save_handle(handle)
            return handle, new_events
        finally:
            lease.release()

    def fork(self, sim_id: str, at_step: int, assumptions: list[str] | None) -> dict:
        parent = self.handle(sim_id)
        source = self._checkpoint_path(sim_id, at_step)
        if not source.exists():
            raise UnknownCheckpointError(f"no checkpoint at step {at_step} for {sim_id}")
        raw = self._read_json(source)
        if assumptions:
            raw["config"]["assumptions"] = list(assumptions)
        child_id = f"sim-{uuid.uuid4().hex[:12]}"
        child = {
            "sim_id": child_id,
            "status": "paused" if at_step > 0 else "created",
            "current_step": at_step,
            "parent_sim": {"sim_id": sim_id, "fork_step": at_step},
            "llm_mode": parent.get("llm_mode", "passthrough"),
            "cassette": parent.get("cassette"),
        }
        self._dir(child_id).mkdir(parents=True)
        self._write_json(self._dir(child_id) / "config.json", raw["config"])
        self._write_json(self._checkpoint_path(child_id, at_step), raw)
        self._save_handle(child)
        return child

    def events_since(self, sim_id: str, since: int) -> list[dict]:
        handle = self.handle(sim_id)
        raw = self._read_json(self._checkpoint_path(sim_id, handle["current_step"]))
        return [e for e in raw["history"] if e["id"] > since]

    def export(self, sim_id: str, overview: bool = False) -> dict:
        handle = self.handle(sim_id)
        engine = self._engine_at(handle, handle["current_step"])
        export = export_log(engine)
        if overview and export.events:
            export.overview = generate_overview(None, export)
        payload = export.to_dict()
        self._write_json(self._dir(sim_id) / "export.json", payload)
        return payload

    def characters(self, sim_id: str) -> list[dict]:
        handle = self.handle(sim_id)
        raw = self._read_json(self._checkpoint_path(sim_id, handle["current_step"]))
        return [c["profile"] for c in raw["characters"]] + raw["retired"]


class CreateSimulationBody(BaseModel):
    config: dict
    llm_mode: str = "passthrough"
    cassette: str | None = None


class ForkBody(BaseModel):
    at_step: int
    assumptions: list[str] | None = None


class EvaluationBody(BaseModel):
    scenario_name: str
    assumptions: list[str]
    exports: list[dict]  # 1-3 export/v1 documents
    metrics: list[str] = list(METRICS)
    llm_mode: str = "passthrough"
    cassette: str | None = None


def create_app(data_dir=None, schema_dir=None, norms_path=None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get("DATA_DIR", "./data"))
    library = SchemaLibrary(Path(schema_dir or default_schema_dir()))
    store = SimulationStore(data_dir, library, Path(norms_path or default_norms_path()))
    app = FastAPI(title="newssim")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store

    def _http(exc: SimError) -> HTTPException:
        if isinstance(exc, (UnknownSchemaError, UnknownCheckpointError)):
            return HTTPException(status_code=404, detail=str(exc))
        from .errors import ConflictError

        if isinstance(exc, ConflictError):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, CassetteMissError):
            return HTTPException(status_code=422, detail=str(exc))
        return HTTPException(status_code=400, detail=str(exc))

    @app.get("/schemas")
    def list_schemas():
        return {"schemas": library.ids()}

    @app.get("/schemas/{schema_id}")
    def get_schema(schema_id: str):
        try:
            return json.loads(serialize_schema(library.get(schema_id)))
        except SimError as exc:
            raise _http(exc) from exc

    @app.post("/simulations", status_code=201)
    def create_simulation(body: CreateSimulationBody):
        try:
            config = SimulationConfig.from_dict(body.config)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid config: {exc}") from exc
        try:
            return store.create(config, llm_mode=body.llm_mode, cassette=body.cassette)
        except SimError as exc:
            raise _http(exc) from exc

    @app.get("/simulations/{sim_id}")
    def get_simulation(sim_id: str):
        try:
            return store.handle(sim_id)
        except SimError as exc:
            raise _http(exc) from exc

    @app.post("/simulations/{sim_id}/step")
    def step_simulation(sim_id: str, n: int = Query(default=1, ge=0)):
        try:
            handle, events = store.step(sim_id, n)
            return {"handle": handle, "events": events}
        except SimError as exc:
            raise _http(exc) from exc

    @app.post("/simulations/{sim_id}/fork", status_code=201)
    def fork_simulation(sim_id: str, body: ForkBody):
        try:
            return store.fork(sim_id, body.at_step, body.assumptions)
        except SimError as exc:
            raise _http(exc) from exc

    @app.get("/simulations/{sim_id}/events")
    def simulation_events(sim_id: str, since: int = Query(default=0, ge=0)):
        try:
            return {"events": store.events_since(sim_id, since)}
        except SimError as exc:
            raise _http(exc) from exc

    @app.get("/simulations/{sim_id}/export")
    def simulation_export(sim_id: str):
        try:
            return store.export(sim_id)
        except SimError as exc:
            raise _http(exc) from exc

    @app.get("/simulations/{sim_id}/characters")
    def simulation_characters(sim_id: str):
        try:
            return {"characters": store.characters(sim_id)}
        except SimError as exc:
            raise _http(exc) from exc

    @app.post("/evaluations")
    def run_evaluation(body: EvaluationBody):
        cassette = Cassette(body.cassette) if body.cassette else None
        gateway = LlmGateway(mode=body.llm_mode, cassette=cassette)
        exports = [parse_export(json.dumps(e)) for e in body.exports]
        results = {}
        try:
            for metric in body.metrics:
                spec = JudgeRequestSpec(
                    scenario_name=body.scenario_name,
                    assumptions=body.assumptions,
                    simulations=exports,
                    metric=metric,
                )
                judgment = judge(gateway, spec)
                results[metric] = {
                    "thoughts": judgment.thoughts,
                    "scores": {str(k): v for k, v in judgment.scores.items()},
                }
        except SimError as exc:
            raise _http(exc) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"results": results}

    return app
