import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from newssim.engine import SimulationConfig
from newssim.schema_graph import load_schema

REPO_ROOT = Path(__file__).resolve().parents[1]
SCHEMA_DIR = REPO_ROOT / "schemas"
NORMS_PATH = REPO_ROOT / "norms" / "seed.jsonl"
FIXTURE_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def outbreak_schema():
    return load_schema(SCHEMA_DIR / "disease_outbreak.json")


@pytest.fixture(scope="session")
def earthquake_schema():
    return load_schema(SCHEMA_DIR / "earthquake.json")


@pytest.fixture(scope="session")
def spill_schema():
    return load_schema(SCHEMA_DIR / "chemical_spill.json")


def base_config(**overrides) -> SimulationConfig:
    defaults = dict(
        schema_id="disease_outbreak",
        assumptions=[
            "A novel respiratory disease emerges in Jakarta",
            "The infection rate is high in dense urban areas",
        ],
        region_tag="Indonesia",
        start_time=datetime(2030, 1, 1, tzinfo=timezone.utc),
        max_steps=3,
        norms_enabled=False,
        random_seed=7,
    )
    defaults.update(overrides)
    return SimulationConfig(**defaults)
