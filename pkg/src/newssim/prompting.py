"""Versioned prompt template loading and rendering.

Templates live as plain text files under ``newssim/prompts/`` and use
``str.format`` named placeholders (literal braces are doubled). Rendering
is pure, so golden tests can pin exact prompt bytes.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

PROMPT_DIR = Path(__file__).parent / "prompts"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = PROMPT_DIR / f"{name}.txt"
    return path.read_text(encoding="utf-8")


def render(name: str, /, **fields) -> str:
    return load_template(name).format(**fields)
