import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from _fixtures import rank_oracle, spearman_oracle
from faithkit.corpus import HumanJudgment, ScoreRecord
from faithkit.errors import DataError, UndefinedCorrelationError
from faithkit.metaeval import (
    CorrelationReport,
    PairedSeries,
    average_ranks,
    bootstrap_ci,
    evaluate_metric,
    read_report_tsv,
    scatter_plot,
    spearman,
    write_report_json,
    write_report_tsv,
)

finite = st.integers(-1000, 1000)


def records(metric_values, human_values, metric="m"):
    ids = [f"s{i}" for i in range(len(metric_values))]
    return ([ScoreRecord(i, metric, v) for i, v in zip(ids, metric_values)],
            [HumanJudgment(i, h) for i, h in zip(ids, human_values)])


def test_trivial_orders():
    assert spearman([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0


def test_tied_hand_case():
    assert list(average_ranks([1, 2, 2, 4])) == [1, 2.5, 2.5, 4]
    assert spearman([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(0.9487, abs=1e-4)
    assert spearman([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(3 / math.sqrt(10), abs=1e-12)


def test_against_independent_oracles():
    rng = random.Random(0)
    for k in range(200):
        n = rng.randint(3, 25)
        pool = rng.randint(2, 6) if k % 2 else 1000  # half the cases are heavily tied
        x = [rng.randrange(pool) for _ in range(n)]
        y = [rng.randrange(pool) for _ in range(n)]
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert list(average_ranks(x)) == rank_oracle(x)
        ours = spearman(x, y)
        assert abs(ours - spearman_oracle(x, y)) < 1e-9
        assert abs(ours - stats.spearmanr(x, y).statistic) < 1e-9


def test_errors():
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1], [1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=30))
def test_symmetry_and_monotone_invariance(pairs):
    x, y = [p[0] for p in pairs], [p[1] for p in pairs]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    r = spearman(x, y)
    assert r == pytest.approx(spearman(y, x), abs=1e-12)
    assert r == pytest.approx(spearman([3 * v + 7 for v in x], y), abs=1e-12)
    assert r == pytest.approx(spearman([math.exp(v / 100) for v in x], y), abs=1e-12)
    assert -1.0 <= r <= 1.0


def test_evaluate_metric_basic():
    h = [1, 5, 3, 9, 7]
    s, j = records(h, h)
    assert evaluate_metric(s, j).rho == 1.0
    s, j = records([-v for v in h], h)
    assert evaluate_metric(s, j).rho == -1.0
    s, j = records([1, 2, 2, 4], [1, 3, 2, 4])
    rep = evaluate_metric(s, j)
    assert rep.rho == pytest.approx(0.9487, abs=1e-4) and rep.n == 4 and rep.grouping == "pooled"


def test_pooled_order_invariance():
    rng = random.Random(3)
    m = [rng.random() for _ in range(30)]
    h = [rng.randint(1, 10) for _ in range(30)]
    s, j = records(m, h)
    a = evaluate_metric(s, j)
    rng.shuffle(s)
    rng.shuffle(j)
    assert evaluate_metric(s, j).rho == a.rho


def test_unmatched_ids_listed():
    s, j = records(list(range(15)), [5] * 15)
    with pytest.raises(DataError, match=r"13 scored summaries have no human judgment: s10, s11"):
        evaluate_metric(s, j[:2])


def test_per_system_mean():
    s, j = records([1, 2, 3, 3, 2, 1], [1, 2, 3, 1, 2, 3])
    systems = {"s0": "A", "s1": "A", "s2": "A", "s3": "B", "s4": "B", "s5": "B"}
    rep = evaluate_metric(s, j, "per_system_mean", systems)
    assert rep.rho == pytest.approx(0.0)   # (+1 + -1) / 2
    assert evaluate_metric(s, j).rho == pytest.approx(0.0)
    with pytest.raises(ValueError):
        evaluate_metric(s, j, "per_system_mean")


def test_bootstrap_degenerate_bounds():
    x = list(range(20))
    assert bootstrap_ci(PairedSeries(tuple(map(str, x)), tuple(x), tuple(x)), 200) == (1.0, 1.0)
    assert bootstrap_ci(PairedSeries(tuple(map(str, x)), tuple(x), tuple(-v for v in x)), 200) == (-1.0, -1.0)
    with pytest.raises(ValueError):
        bootstrap_ci(PairedSeries(("a", "b"), (1, 2), (1, 2)), 50)


def test_bootstrap_reproducible_and_brackets_rho():
    rng = np.random.default_rng(1)
    x = rng.normal(size=40)
    y = x + rng.normal(size=40)
    series = PairedSeries(tuple(f"i{k}" for k in range(40)), tuple(x), tuple(y))
    a = bootstrap_ci(series, 500, seed=9)
    assert a == bootstrap_ci(series, 500, seed=9)
    s, j = records(list(x), list(np.clip(np.round(5 + 2 * y), 1, 10)))
    rep = evaluate_metric(s, j, ci_resamples=500, seed=9)
    assert rep.ci_low <= rep.rho <= rep.ci_high


def test_bootstrap_mostly_degenerate_errors():
    series = PairedSeries(("a", "b", "c"), (1.0, 2.0, 3.0), (1.0, 2.0, 3.0))
    # with n=3 about a quarter of resamples are constant; n=2 pushes it past half
    bootstrap_ci(series, 200)
    with pytest.raises(UndefinedCorrelationError):
        bootstrap_ci(PairedSeries(("a", "b"), (1.0, 2.0), (1.0, 2.0)), 200)


def test_report_invariant():
    with pytest.raises(ValueError):
        CorrelationReport("m", 0.5, 10, ci_low=0.6, ci_high=0.9)


def test_report_files(tmp_path):
    s, j = records([1, 2, 2, 4], [1, 3, 2, 4])
    rep = evaluate_metric(s, j)
    write_report_tsv([rep], tmp_path / "r.tsv")
    write_report_json([rep], tmp_path / "r.json")
    row = read_report_tsv(tmp_path / "r.tsv")[0]
    assert row["metric"] == "m" and row["rho"] == "0.948683" and row["ci_low"] == ""
    assert (tmp_path / "r.json").read_text().count("0.9486") == 1


def test_scatter_plot(tmp_path):
    pytest.importorskip("matplotlib")
    scatter_plot(PairedSeries(("a", "b", "c"), (1, 2, 3), (3, 1, 2)), "m", tmp_path / "p.png")
    assert (tmp_path / "p.png").stat().st_size > 0
