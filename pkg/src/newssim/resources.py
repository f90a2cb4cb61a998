"""Default locations of the shipped schema library and seed norm KB."""

from __future__ import annotations

import os
from pathlib import Path

_REPO_ROOT = Path(__file__).resolve().parents[2]


def default_schema_dir() -> Path:
    return Path(os.environ.get("SIM_SCHEMA_DIR", _REPO_ROOT / "schemas"))


def default_norms_path() -> Path:
    return Path(os.environ.get("SIM_NORMS_PATH", _REPO_ROOT / "norms" / "seed.jsonl"))
