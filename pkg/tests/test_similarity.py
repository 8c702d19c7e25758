import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faithkit.errors import ContractError
from faithkit.models import FixedAligner, HashEncoder, LexicalAligner, LookupEncoder
from faithkit.similarity import bertscore, compute_idf, ctc_consistency, load_idf_table, save_idf_table

E = {"x": [1.0, 0.0, 0.0], "y": [0.0, 1.0, 0.0], "z": [0.0, 0.0, 1.0]}
WORDS = "amanda jerry baked cookies bring some tomorrow".split()


def test_identity_is_one():
    s = bertscore("Amanda baked cookies", "Amanda baked cookies", HashEncoder())
    assert (s.precision, s.recall, s.f1) == pytest.approx((1.0, 1.0, 1.0))


def test_orthogonal_hand_case():
    s = bertscore("x y", "x z", LookupEncoder(E))
    assert (s.precision, s.recall, s.f1) == pytest.approx((0.5, 0.5, 0.5))


def test_idf_weighting():
    idf = {"x": 3.0, "y": 1.0}
    s = bertscore("x y", "x z", LookupEncoder(E), use_idf=True, idf_table=idf)
    assert s.precision == pytest.approx(3.0 / 4.0)
    # z is missing from the table and takes the table maximum
    assert s.recall == pytest.approx(3.0 / 6.0)
    assert bertscore("x y", "x z", LookupEncoder(E), use_idf=False, idf_table=idf).precision == pytest.approx(0.5)


def test_errors():
    with pytest.raises(ValueError):
        bertscore("", "x", LookupEncoder(E))

    class Shifty:
        def encode(self, text):
            d = 2 if text.startswith("a") else 3
            return [(t, (0, 1)) for t in text.split()], np.ones((len(text.split()), d))

    with pytest.raises(ContractError):
        bertscore("a b", "c d", Shifty())


def _random_pair(rng):
    return " ".join(rng.choices(WORDS, k=rng.randint(1, 7))), " ".join(rng.choices(WORDS, k=rng.randint(1, 7)))


def test_precision_recall_symmetry():
    rng = random.Random(0)
    enc = HashEncoder(dim=16, context_weight=0.3)
    for _ in range(50):
        a, b = _random_pair(rng)
        assert bertscore(a, b, enc).precision == pytest.approx(bertscore(b, a, enc).recall, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(WORDS), min_size=1, max_size=6), st.lists(st.sampled_from(WORDS), min_size=1, max_size=6),
       st.randoms())
def test_reference_order_invariance(hyp, ref, rnd):
    enc = HashEncoder(dim=8)
    shuffled = ref[:]
    rnd.shuffle(shuffled)
    a = bertscore(" ".join(hyp), " ".join(ref), enc)
    b = bertscore(" ".join(hyp), " ".join(shuffled), enc)
    assert a.f1 == pytest.approx(b.f1, abs=1e-12)
    assert -1.0 <= a.precision <= 1.0 and -1.0 <= a.recall <= 1.0


def test_idf_table_round_trip(tmp_path):
    table = compute_idf(["a b", "a c", "a"])
    assert table["a"] < table["b"]
    save_idf_table(table, tmp_path / "idf.tsv")
    assert load_idf_table(tmp_path / "idf.tsv") == table


@pytest.mark.parametrize("probs, expected", [([1.0] * 4, 1.0), ([1.0, 0.0, 0.5, 0.5], 0.5), ([0.0] * 4, 0.0)])
def test_ctc_mean(probs, expected):
    assert ctc_consistency("src", "a b c d", FixedAligner(probs)) == pytest.approx(expected)


def test_ctc_errors_and_exact_mean():
    with pytest.raises(ValueError):
        ctc_consistency("src", " ", FixedAligner([]))
    with pytest.raises(ContractError):
        ctc_consistency("src", "a b", FixedAligner([0.5, 1.2]))
    base = ctc_consistency("s", "a b c d", FixedAligner([0.2, 0.4, 0.6, 0.8]))
    bumped = ctc_consistency("s", "a b c d", FixedAligner([0.2, 0.4, 0.7, 0.8]))
    assert bumped - base == pytest.approx(0.1 / 4)


def test_lexical_aligner_ctc():
    assert ctc_consistency("Amanda baked cookies", "Jerry baked cookies", LexicalAligner()) == pytest.approx(2 / 3)
