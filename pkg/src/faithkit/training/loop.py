"""Seeded mini-batch gradient descent on the MLE + unlikelihood objective."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from faithkit.errors import TrainingDivergedError
from faithkit.training.objective import LossConfig, TrainItem, align_negative_positions, unlikelihood_grad, unlikelihood_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    The defaults suit the tiny model.  Real backends were tuned with AdamW at
    a learning rate of 2e-5 and batches of 64 (see ``REAL_BACKEND_DEFAULTS``).
    ``negative_fraction`` fixes the share of negatives per batch; ``None``
    draws batches uniformly from the shuffled pool.
    """

    learning_rate: float = 0.05
    batch_size: int = 16
    steps: int = 300
    seed: int = 0
    num_runs: int = 3
    negative_fraction: float | None = None
    grad_clip: float | None = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.steps <= 0 or self.num_runs <= 0:
            raise ValueError("learning_rate, batch_size, steps and num_runs must be positive")
        if self.negative_fraction is not None and not 0.0 <= self.negative_fraction <= 1.0:
            raise ValueError("negative_fraction must lie in [0, 1]")


REAL_BACKEND_DEFAULTS = TrainConfig(learning_rate=2e-5, batch_size=64, steps=10_000, grad_clip=None)


def prepare_items(model, items: Sequence[TrainItem]) -> list[TrainItem]:
    """Fill in model-token negative positions for items that only carry toolkit indices."""
    out = []
    for it in items:
        if it.label == "negative" and it.negative_indices and not it.model_negative_positions:
            pos = align_negative_positions(it.target, it.negative_indices, model.segment(it.target))
            it = replace(it, model_negative_positions=frozenset(pos))
        out.append(it)
    return out


def batch_loss_and_grad(model, items: Sequence[TrainItem], loss_cfg: LossConfig, with_grad: bool = True):
    """Mean per-item loss over ``items`` and its gradient with respect to model parameters."""
    grads = model.zero_grads() if with_grad else None
    total = 0.0
    for it in items:
        cache = model.forward(it.source, it.target)
        lp = cache.gold_logprobs
        if not np.all(np.isfinite(lp)):
            return math.nan, grads
        total += unlikelihood_loss(it, lp, loss_cfg, expected_len=len(lp))
        if with_grad:
            g = unlikelihood_grad(it, lp, loss_cfg)
            if g.any():
                model.backward(cache, g, grads)
    n = len(items)
    if with_grad:
        for v in grads.values():
            v /= n
    return total / n, grads


class _Sampler:
    """Draws batch indices; each label pool has its own seeded stream.

    With ``negative_fraction`` set, the sequence of positives drawn depends
    only on the seed and the positive quota, so adding negatives to a run
    leaves its positive batches unchanged.
    """

    def __init__(self, items, cfg: TrainConfig):
        self.cfg = cfg
        if cfg.negative_fraction is None:
            self.pools = [list(range(len(items)))]
            self.quota = [cfg.batch_size]
        else:
            pos = [i for i, it in enumerate(items) if it.label == "positive"]
            neg = [i for i, it in enumerate(items) if it.label == "negative"]
            n_neg = round(cfg.batch_size * cfg.negative_fraction) if neg else 0
            if not pos:
                n_neg = cfg.batch_size
            self.pools = [pos, neg]
            self.quota = [cfg.batch_size - n_neg, n_neg]
        self.rngs = [np.random.default_rng([cfg.seed, k]) for k in range(len(self.pools))]
        self.queues = [[] for _ in self.pools]

    def _take(self, k, n):
        out = []
        while len(out) < n:
            if not self.queues[k]:
                self.queues[k] = [self.pools[k][i] for i in self.rngs[k].permutation(len(self.pools[k]))]
            out.append(self.queues[k].pop())
        return out

    def batch(self):
        out = []
        for k, n in enumerate(self.quota):
            if n and self.pools[k]:
                out.extend(self._take(k, n))
        return out


def train(model, data: Sequence[TrainItem], loss_cfg: LossConfig = LossConfig(),
          train_cfg: TrainConfig = TrainConfig()):
    """Train ``model`` in place; returns ``(model, loss_trace)``.

    Each step draws a seeded mini-batch, takes the mean per-item loss and
    applies one plain gradient-descent update (optionally norm-clipped).
    """
    if not data:
        raise ValueError("training data is empty")
    items = prepare_items(model, data)
    sampler = _Sampler(items, train_cfg)
    trace = []
    for step in range(train_cfg.steps):
        batch = [items[i] for i in sampler.batch()]
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = batch_loss_and_grad(model, batch, loss_cfg)
        if not math.isfinite(loss):
            raise TrainingDivergedError(step, loss)
        if train_cfg.grad_clip is not None:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if not math.isfinite(norm):
                raise TrainingDivergedError(step, norm)
            if norm > train_cfg.grad_clip:
                for g in grads.values():
                    g *= train_cfg.grad_clip / norm
        model.apply_gradients(grads, train_cfg.learning_rate)
        trace.append(loss)
        if step % 100 == 0:
            log.debug("step %d loss %.4f", step, loss)
    return model, trace
