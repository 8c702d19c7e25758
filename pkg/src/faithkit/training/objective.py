"""MLE + unlikelihood objective over teacher-forced token log-probabilities.

For a positive sequence the loss is the summed negative log-likelihood of
every token.  For a negative sequence only the tokens in its negative set N
contribute, each through ``-alpha * log(1 - p_t)``; there is no likelihood
term on the remaining tokens of a negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from faithkit.lexical import tokenize_with_spans


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.1
    prob_ceiling_eps: float = 1e-6

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0.0 < self.prob_ceiling_eps < 0.5:
            raise ValueError("prob_ceiling_eps must lie in (0, 0.5)")


@dataclass(frozen=True)
class TrainItem:
    source: str
    target: str
    label: str = "positive"
    negative_indices: frozenset[int] = frozenset()
    model_negative_positions: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "negative_indices", frozenset(self.negative_indices))
        object.__setattr__(self, "model_negative_positions", frozenset(self.model_negative_positions))
        if self.label not in ("positive", "negative"):
            raise ValueError(f"label must be 'positive' or 'negative', got {self.label!r}")
        if self.label == "positive" and (self.negative_indices or self.model_negative_positions):
            raise ValueError("positive items carry no negative positions")

    @classmethod
    def build(cls, source, target, label="positive", negative_indices=(), segmentation=None):
        """Create an item, mapping toolkit negative indices onto ``segmentation``."""
        negative_indices = frozenset(negative_indices)
        positions = frozenset()
        if label == "negative":
            seg = segmentation if segmentation is not None else tokenize_with_spans(target)
            positions = frozenset(align_negative_positions(target, negative_indices, seg))
        return cls(source, target, label, negative_indices, positions)


def _check(item: TrainItem, token_logprobs) -> np.ndarray:
    lp = np.asarray(token_logprobs, dtype=float)
    if np.isnan(lp).any():
        raise ValueError("NaN in token log-probabilities")
    bad = [t for t in item.model_negative_positions if not 0 <= t < len(lp)]
    if bad:
        raise ValueError(f"negative positions {sorted(bad)} out of range for {len(lp)} target tokens")
    return lp


def unlikelihood_loss(item: TrainItem, token_logprobs: Sequence[float], cfg: LossConfig = LossConfig(),
                      expected_len: int | None = None) -> float:
    lp = _check(item, token_logprobs)
    if expected_len is not None and len(lp) != expected_len:
        raise ValueError(f"got {len(lp)} log-probabilities for a target of {expected_len} tokens")
    if item.label == "positive":
        return float(-math.fsum(lp))
    if not item.model_negative_positions:
        return 0.0
    ceiling = 1.0 - cfg.prob_ceiling_eps
    terms = [math.log1p(-min(math.exp(lp[t]), ceiling)) for t in sorted(item.model_negative_positions)]
    return float(-cfg.alpha * math.fsum(terms))


def unlikelihood_grad(item: TrainItem, token_logprobs: Sequence[float], cfg: LossConfig = LossConfig()) -> np.ndarray:
    """dLoss / d(log p_t) for every target position."""
    lp = _check(item, token_logprobs)
    if item.label == "positive":
        return -np.ones_like(lp)
    g = np.zeros_like(lp)
    ceiling = 1.0 - cfg.prob_ceiling_eps
    for t in item.model_negative_positions:
        p = math.exp(lp[t])
        if p < ceiling:  # clamped region has zero slope
            g[t] = cfg.alpha * p / (1.0 - p)
    return g


def align_negative_positions(target: str, toolkit_indices: Iterable[int],
                             model_segmentation: Sequence[tuple[str, tuple[int, int]]]) -> set[int]:
    """Model-token positions whose character span overlaps a negative toolkit token."""
    toolkit_indices = set(toolkit_indices)
    if not toolkit_indices:
        return set()
    toolkit = tokenize_with_spans(target)
    out = set()
    for i in sorted(toolkit_indices):
        if not 0 <= i < len(toolkit):
            raise ValueError(f"toolkit index {i} out of range for {len(toolkit)} tokens")
        a, b = toolkit[i][1]
        hits = [k for k, (_, (s, e)) in enumerate(model_segmentation) if s < b and a < e]
        if not hits:
            raise ValueError(f"model segmentation leaves toolkit token {i} ({toolkit[i][0]!r}) uncovered")
        out.update(hits)
    return out
