"""Locating the regression corpus."""
from __future__ import annotations

import os
from pathlib import Path

ENV_VAR = "WAVELACE_CORPUS"


def bundled_corpus() -> Path:
    return Path(__file__).resolve().parent.parent / "corpus"


def corpus_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else bundled_corpus()


def corpus_files(directory: Path | None = None) -> list[Path]:
    d = directory if directory is not None else corpus_dir()
    if not d.is_dir():
        return []
    return sorted(p for p in d.iterdir() if p.suffix in (".yaml", ".yml", ".json"))
