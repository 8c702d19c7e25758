"""Flat ``key = value`` config files, prompt-template files and seed derivation."""
from __future__ import annotations

import hashlib
from pathlib import Path

from faithkit.errors import DataError
from faithkit.models.interfaces import PromptTemplate


def _lines(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config: {exc.strerror}", path=str(path)) from exc
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise DataError(f"expected 'key = value', got {raw!r}", path=str(path), line=n)
        yield n, key.strip(), value.strip()


def read_config(path) -> dict[str, str]:
    """Read a flat key=value file.  Blank lines and ``#`` comments are ignored."""
    out: dict[str, str] = {}
    for n, key, value in _lines(path):
        if key in out:
            raise DataError(f"duplicate key {key!r}", path=str(path), line=n)
        out[key] = value
    return out


def write_config(cfg: dict, path) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in sorted(cfg.items())), encoding="utf-8")


def read_prompt_templates(path) -> list[PromptTemplate]:
    """One ``name = template`` entry per line; ``\\n`` in a template stands for a newline.

    Order is preserved because pseudo-reference selection breaks ties by it.
    """
    out, seen = [], set()
    for n, key, value in _lines(path):
        if key in seen:
            raise DataError(f"duplicate template {key!r}", path=str(path), line=n)
        text = value.replace("\\n", "\n")
        if text.count("{source}") != 1:
            raise DataError(f"template {key!r} must contain {{source}} exactly once", path=str(path), line=n)
        seen.add(key)
        out.append(PromptTemplate(key, text))
    if not out:
        raise DataError("no prompt templates defined", path=str(path))
    return out


def derive_seed(seed: int, *labels) -> int:
    """A 31-bit seed for a named component, stable across platforms and Python versions."""
    key = ":".join([str(seed), *map(str, labels)]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little") & 0x7FFF_FFFF
