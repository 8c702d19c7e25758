import itertools
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from _fixtures import COOKIES_DIALOGUE, COOKIES_HALLU, COOKIES_MASKENT, COOKIES_REFERENCE, COOKIES_SWAPENT
from faithkit.corpus import Dialogue, LabeledSummary, render_dialogue
from faithkit.errors import ContractError
from faithkit.lexical import tokenize
from faithkit.models import MASK, ConstantInfiller, EntitySpan, GazetteerTagger, TinyModel, make_fixed_generator, vocab_from_texts
from faithkit.negatives import NegativeFactory, hallucinate, mask_and_fill, negative_token_indices, swap_entities

TAGGER = GazetteerTagger({"Amanda": "PERSON", "Jerry": "PERSON", "Tom": "PERSON", "park": "LOCATION"})
DIALOGUE = Dialogue.from_pairs("d", COOKIES_DIALOGUE)


def spans(text, *surfaces):
    found = TAGGER.tag(text)
    return [s for s in found if s.surface in surfaces] if surfaces else found


def test_indices_identity_and_insertion():
    assert negative_token_indices(COOKIES_REFERENCE, COOKIES_REFERENCE) == set()
    assert negative_token_indices("a b c d", "a b x c d") == {2}


def test_indices_cookies_swap():
    assert negative_token_indices(COOKIES_REFERENCE, COOKIES_SWAPENT) == {0, 6}


def test_swap_cookies_row():
    s = swap_entities(COOKIES_REFERENCE, spans(COOKIES_REFERENCE, "Amanda", "Jerry"), seed=0)
    assert s.text == COOKIES_SWAPENT
    assert s.negative_indices == {0, 6} and s.neg_type == "swapent"


def test_swap_needs_two_distinct_surfaces():
    assert swap_entities(COOKIES_REFERENCE, spans(COOKIES_REFERENCE, "Amanda"), seed=0) is None
    text = "Tom met Tom."
    assert swap_entities(text, spans(text), seed=0) is None


def test_swap_overlapping_spans_rejected():
    bad = [EntitySpan(0, 6, "Amanda", "PERSON"), EntitySpan(2, 6, "anda", "PERSON")]
    with pytest.raises(ValueError, match="overlapping"):
        swap_entities(COOKIES_REFERENCE, bad, seed=0)


def _oracle_outputs(text, sp):
    """Every text reachable by permuting same-typed surfaces with no surface left in place."""
    by_type = {}
    for s in sp:
        by_type.setdefault(s.type, []).append(s)
    choices = []
    for group in by_type.values():
        surf = [s.surface for s in group]
        perms = [p for p in itertools.permutations(surf) if all(a != b for a, b in zip(p, surf))]
        choices.append([list(zip(group, p)) for p in perms] or [list(zip(group, surf))])
    out = set()
    for combo in itertools.product(*choices):
        pieces, last = [], 0
        for s, new in sorted((x for part in combo for x in part), key=lambda x: x[0].char_start):
            pieces += [text[last:s.char_start], new]
            last = s.char_end
        out.add("".join(pieces) + text[last:])
    return out


def test_swap_matches_permutation_oracle():
    text = "Amanda told Jerry and Tom to meet at the park."
    sp = spans(text)
    allowed = _oracle_outputs(text, sp)
    seen = set()
    for seed in range(60):
        s = swap_entities(text, sp, seed)
        assert s.text in allowed
        assert "at the park." in s.text
        seen.add(s.text)
    assert seen == allowed  # both 3-cycles are reachable


@settings(max_examples=100, deadline=None)
@given(st.permutations(["Amanda", "Jerry", "Tom"]), st.integers(0, 10_000))
def test_swap_preserves_token_multiset(names, seed):
    text = f"{names[0]} and {names[1]} saw {names[2]} at the park with {names[0]}."
    s = swap_entities(text, spans(text), seed)
    assert s is not None and s.text != text
    assert Counter(tokenize(s.text)) == Counter(tokenize(text))
    assert s.negative_indices and max(s.negative_indices) < len(tokenize(s.text))


def test_maskent_cookies_position():
    sp = spans(COOKIES_REFERENCE, "Amanda")
    s = mask_and_fill(COOKIES_REFERENCE, sp, ConstantInfiller("I have"), seed=0)
    assert s.text == COOKIES_MASKENT
    assert s.negative_indices == {0, 1}


def test_maskent_stub_fill():
    s = mask_and_fill(COOKIES_REFERENCE, spans(COOKIES_REFERENCE, "Amanda"), ConstantInfiller("someone"), seed=0)
    assert s.text == "someone baked cookies and will bring Jerry some tomorrow."
    assert s.negative_indices == {0}


def test_maskent_one_mask_per_type():
    text = "Amanda and Jerry met at the park."
    masked = []

    class Spy:
        def fill(self, t):
            masked.append(t)
            return t.replace(MASK, "Tom")

    mask_and_fill(text, spans(text), Spy(), seed=3)
    assert masked[0].count(MASK) == 2 and "park" not in masked[0]


def test_maskent_edge_cases():
    assert mask_and_fill(COOKIES_REFERENCE, [], ConstantInfiller("x"), seed=0) is None
    assert mask_and_fill(COOKIES_REFERENCE, spans(COOKIES_REFERENCE, "Amanda"), ConstantInfiller("Amanda"), 0) is None
    with pytest.raises(ContractError):
        mask_and_fill(COOKIES_REFERENCE, spans(COOKIES_REFERENCE, "Amanda"), ConstantInfiller(MASK), 0)


def test_hallu_cookies_all_tokens_negative():
    gen = make_fixed_generator({"hallu": COOKIES_HALLU})
    s = hallucinate(DIALOGUE, gen, seed=0)
    assert s.text == COOKIES_HALLU
    assert s.negative_indices == set(range(len(tokenize(COOKIES_HALLU))))


def test_hallu_seed_determinism_and_empty():
    model = TinyModel(vocab_from_texts([render_dialogue(DIALOGUE)]), dim=8, seed=1)
    a = hallucinate(DIALOGUE, model, seed=5, max_len=10)
    assert a == hallucinate(DIALOGUE, model, seed=5, max_len=10)
    assert len(tokenize(a.text)) <= 10
    with pytest.raises(ValueError, match="empty"):
        hallucinate(DIALOGUE, make_fixed_generator({"hallu": ""}), seed=0)


def test_factory_ids_and_counts():
    gen = make_fixed_generator({"hallu": COOKIES_HALLU})
    ref = LabeledSummary("r1", "d", "reference", COOKIES_REFERENCE)
    f = NegativeFactory(TAGGER, ConstantInfiller("someone"), gen)
    out = f.for_reference(ref, DIALOGUE, seed=0)
    assert [s.id for s in out] == ["r1-swapent", "r1-maskent", "r1-hallu"]
    assert all(s.label == "negative" and s.negative_indices for s in out)
    assert f.accepted == {"swapent": 1, "maskent": 1, "hallu": 1}
    assert f.for_reference(ref, DIALOGUE, seed=0) == out
