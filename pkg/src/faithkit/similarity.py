"""Embedding-similarity (BERTScore-style) and token-consistency (CTC-style) metrics."""
from __future__ import annotations

import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from faithkit.errors import ContractError
from faithkit.lexical import OverlapScore, tokenize
from faithkit.models.interfaces import ValidatedAligner, ValidatedEncoder


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.where(norms == 0, 1.0, norms)


def _weights(tokens, idf_table):
    if idf_table is None:
        return np.ones(len(tokens))
    default = max(idf_table.values()) if idf_table else 1.0
    return np.array([idf_table.get(t, idf_table.get(t.lower(), default)) for t in tokens], dtype=float)


def bertscore(hyp: str, ref: str, encoder, use_idf: bool = False,
              idf_table: Mapping[str, float] | None = None) -> OverlapScore:
    """Greedy-matching cosine similarity between contextual token embeddings.

    Precision averages, over hypothesis tokens, the best cosine similarity to
    any reference token; recall does the same from the reference side.
    """
    if not isinstance(encoder, ValidatedEncoder):
        encoder = ValidatedEncoder(encoder)
    hseg, hv = encoder.encode(hyp)
    rseg, rv = encoder.encode(ref)
    if not hseg or not rseg:
        raise ValueError("bertscore needs a nonempty hypothesis and reference")
    if hv.shape[1] != rv.shape[1]:
        raise ContractError("TokenEncoder", f"dimension mismatch {hv.shape[1]} vs {rv.shape[1]}")
    sim = np.clip(_unit_rows(hv) @ _unit_rows(rv).T, -1.0, 1.0)
    table = idf_table if use_idf else None
    wh = _weights([t for t, _ in hseg], table)
    wr = _weights([t for t, _ in rseg], table)
    p = float(np.dot(wh, sim.max(axis=1)) / wh.sum())
    r = float(np.dot(wr, sim.max(axis=0)) / wr.sum())
    return OverlapScore.from_pr(p, r)


def compute_idf(documents: Iterable[str]) -> dict[str, float]:
    """Smoothed inverse document frequency over toolkit tokens."""
    df = Counter()
    m = 0
    for doc in documents:
        m += 1
        df.update(set(tokenize(doc)))
    return {t: math.log((m + 1) / (c + 1)) for t, c in df.items()}


def load_idf_table(path) -> dict[str, float]:
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'token<TAB>idf'")
        table[parts[0]] = float(parts[1])
    return table


def save_idf_table(table: Mapping[str, float], path) -> None:
    lines = [f"{t}\t{v!r}" for t, v in sorted(table.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def ctc_consistency(source: str, hyp: str, aligner) -> float:
    """Mean per-token probability that hypothesis tokens are consistent with the source."""
    if not isinstance(aligner, ValidatedAligner):
        aligner = ValidatedAligner(aligner)
    if not aligner.segment(hyp):
        raise ValueError("hypothesis is empty under the aligner's tokenization")
    probs = aligner.consistency(source, hyp)
    return math.fsum(probs) / len(probs)
