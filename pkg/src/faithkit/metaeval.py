"""Rank-correlation meta-evaluation of metrics against human judgments."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from faithkit.corpus import HumanJudgment, ScoreRecord
from faithkit.errors import DataError, UndefinedCorrelationError

GROUPINGS = ("pooled", "per_system_mean")
TSV_COLUMNS = ("metric", "grouping", "n", "rho", "ci_low", "ci_high", "pearson", "kendall")


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        raise UndefinedCorrelationError("correlation undefined: zero variance")
    r = float(a @ b) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two paired values")
    try:
        return _pearson(average_ranks(x), average_ranks(y))
    except UndefinedCorrelationError:
        raise UndefinedCorrelationError("Spearman correlation undefined: an input has fewer than two distinct values") from None


@dataclass(frozen=True)
class PairedSeries:
    ids: tuple[str, ...]
    metric_values: tuple[float, ...]
    human_values: tuple[float, ...]

    def __post_init__(self):
        n = len(self.ids)
        if n < 2 or len(self.metric_values) != n or len(self.human_values) != n:
            raise ValueError("paired series need equal lengths of at least 2")
        if len(set(self.ids)) != n:
            raise ValueError("paired series ids must be unique")
        if not all(math.isfinite(v) for v in (*self.metric_values, *self.human_values)):
            raise ValueError("paired series values must be finite")


@dataclass(frozen=True)
class CorrelationReport:
    metric: str
    rho: float
    n: int
    grouping: str = "pooled"
    ci_low: float | None = None
    ci_high: float | None = None
    pearson: float | None = None
    kendall: float | None = None

    def __post_init__(self):
        if self.grouping not in GROUPINGS:
            raise ValueError(f"grouping must be one of {GROUPINGS}")
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValueError("ci_low and ci_high must be given together")
        if self.ci_low is not None and not self.ci_low <= self.rho <= self.ci_high:
            raise ValueError(f"interval [{self.ci_low}, {self.ci_high}] does not contain rho={self.rho}")

    def tsv_row(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            return f"{v:.6f}" if isinstance(v, float) else str(v)
        return "\t".join(fmt(getattr(self, c)) for c in TSV_COLUMNS)


def bootstrap_distribution(series: PairedSeries, resamples: int, seed: int) -> tuple[np.ndarray, int]:
    """Spearman rho over paired resamples, plus the number of degenerate resamples skipped."""
    if resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    x = np.asarray(series.metric_values, dtype=float)
    y = np.asarray(series.human_values, dtype=float)
    rng = np.random.default_rng(seed)
    n = len(x)
    rhos, skipped = [], 0
    for _ in range(resamples):
        idx = rng.integers(0, n, n)
        try:
            rhos.append(spearman(x[idx], y[idx]))
        except UndefinedCorrelationError:
            skipped += 1
    if skipped > resamples / 2:
        raise UndefinedCorrelationError(f"{skipped} of {resamples} bootstrap resamples had zero rank variance")
    return np.array(rhos), skipped


def bootstrap_ci(series: PairedSeries, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for Spearman's rho."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    rhos, _ = bootstrap_distribution(series, resamples, seed)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(rhos, [tail, 1.0 - tail])
    return float(lo), float(hi)


def join_scores(scores: Sequence[ScoreRecord], judgments: Sequence[HumanJudgment],
                metric: str | None = None) -> tuple[str, PairedSeries]:
    metrics = sorted({s.metric for s in scores})
    if metric is None:
        if len(metrics) != 1:
            raise DataError(f"score records mix metrics {metrics}; choose one")
        metric = metrics[0]
    chosen = sorted((s for s in scores if s.metric == metric), key=lambda s: s.summary_id)
    human = {j.summary_id: j.faithfulness for j in judgments}
    missing = [s.summary_id for s in chosen if s.summary_id not in human]
    if missing:
        raise DataError(f"{len(missing)} scored summaries have no human judgment: {', '.join(missing[:10])}")
    if len(chosen) < 2:
        raise DataError(f"need at least 2 joined samples for {metric!r}, got {len(chosen)}")
    series = PairedSeries(tuple(s.summary_id for s in chosen), tuple(s.value for s in chosen),
                          tuple(human[s.summary_id] for s in chosen))
    return metric, series


def evaluate_metric(scores: Sequence[ScoreRecord], judgments: Sequence[HumanJudgment], grouping: str = "pooled",
                    systems: Mapping[str, str] | None = None, metric: str | None = None,
                    ci_resamples: int = 0, ci_level: float = 0.95, seed: int = 0) -> CorrelationReport:
    """Correlate one metric's scores with human faithfulness judgments.

    ``pooled`` computes one Spearman over every joined (summary, judgment)
    pair.  ``per_system_mean`` needs ``systems`` (summary id -> system) and
    reports the unweighted mean of within-system correlations.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    metric, series = join_scores(scores, judgments, metric)
    x, y = series.metric_values, series.human_values
    if grouping == "pooled":
        rho = spearman(x, y)
        pearson = _pearson(np.asarray(x, float), np.asarray(y, float))
        kendall = float(stats.kendalltau(x, y).statistic)
        lo = hi = None
        if ci_resamples:
            lo, hi = bootstrap_ci(series, ci_resamples, ci_level, seed)
            # percentile intervals can miss a skewed point estimate; report the union
            lo, hi = min(lo, rho), max(hi, rho)
        return CorrelationReport(metric, rho, len(x), grouping, lo, hi, pearson, kendall)

    if systems is None:
        raise ValueError("per_system_mean grouping needs a summary-id -> system mapping")
    groups: dict[str, list[int]] = {}
    for k, sid in enumerate(series.ids):
        if sid not in systems:
            raise DataError(f"no system recorded for summary {sid!r}")
        groups.setdefault(systems[sid], []).append(k)
    rhos = []
    for name in sorted(groups):
        idx = groups[name]
        try:
            rhos.append(spearman([x[i] for i in idx], [y[i] for i in idx]))
        except (ValueError, UndefinedCorrelationError) as exc:
            raise type(exc)(f"system {name!r}: {exc}") from exc
    return CorrelationReport(metric, float(np.mean(rhos)), len(x), grouping)


def write_report_tsv(reports: Sequence[CorrelationReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(TSV_COLUMNS)] + [r.tsv_row() for r in reports]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report_json(reports: Sequence[CorrelationReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([asdict(r) for r in reports], indent=2) + "\n", encoding="utf-8")


def read_report_tsv(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, ln.split("\t"))) for ln in lines[1:] if ln]


def scatter_plot(series: PairedSeries, metric: str, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(series.metric_values, series.human_values, s=10, alpha=0.6)
    ax.set_xlabel(metric)
    ax.set_ylabel("human faithfulness")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
