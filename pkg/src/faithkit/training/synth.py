"""Template-generated toy dialogues with rule-derived summaries and negatives.

A closed vocabulary (names, foods, places, days) keeps every text inside the
tiny model's vocabulary.  Roles matter: the first speaker made the food and
brings it to the second speaker, so swapping the two names yields a fluent but
unfaithful summary.  Slot values follow a Zipf law, so a decoder that leans on
its language prior rather than the source prefers the frequent values, and
the default infiller fills masks with exactly those plausible values.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass

from faithkit.corpus import Dialogue, LabeledSummary, Turn
from faithkit.genprob import DEFAULT_T0_TEMPLATE
from faithkit.lexical import tokenize
from faithkit.models.stubs import ContextInfiller, GazetteerTagger
from faithkit.models.tiny import BOS, EOS, TinyModel
from faithkit.negatives import NegativeFactory

NAMES = ("Amanda", "Jerry", "Hannah", "Mark", "Olivia", "Tom", "Lisa", "Kevin", "Sara", "Paul")
FOODS = (("baked", "cookies"), ("made", "pancakes"), ("cooked", "soup"),
         ("bought", "donuts"), ("grilled", "burgers"), ("baked", "muffins"))
PLACES = ("park", "office", "gym", "library", "station", "cafe")
DAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
REPLIES = ("Sure! Where can we meet?", "Yes! Where should we meet?", "Great! Where could we meet?")

OPENING = "I {made} {food} today. Do you want some?"
CLOSING = "I'll bring you some at the {place} on {day}."
SUMMARY = "{a} {made} {food} and will bring {b} some at the {place} on {day}."

GAZETTEER = {**{n: "PERSON" for n in NAMES}, **{p: "LOCATION" for p in PLACES}, **{d: "DATE" for d in DAYS}}
HALLU_MAX_LEN = 14
ZIPF_EXPONENT = 1.0


def zipf_weights(k: int, exponent: float = ZIPF_EXPONENT) -> list[float]:
    return [1.0 / (r + 1) ** exponent for r in range(k)]


@dataclass
class SynthCorpus:
    dialogues: list[Dialogue]
    positives: list[LabeledSummary]
    negatives: list[LabeledSummary]


def synth_vocab() -> list[str]:
    texts = [OPENING, CLOSING, SUMMARY, DEFAULT_T0_TEMPLATE, *REPLIES, *NAMES, *PLACES, *DAYS]
    texts += [f"{m} {f}" for m, f in FOODS]
    toks = set()
    for t in texts:
        toks.update(tokenize(re.sub(r"\{\w+\}", " ", t)))
    toks.add(":")  # speaker separator in rendered dialogues
    return [BOS, EOS] + sorted(toks)


def _sample_slots(rng: random.Random) -> dict:
    a, b = rng.sample(NAMES, 2)
    made, food = rng.choices(FOODS, zipf_weights(len(FOODS)))[0]
    return {"a": a, "b": b, "made": made, "food": food,
            "place": rng.choices(PLACES, zipf_weights(len(PLACES)))[0],
            "day": rng.choices(DAYS, zipf_weights(len(DAYS)))[0],
            "reply": rng.choice(REPLIES)}


def slot_infiller(seed: int) -> ContextInfiller:
    """Fills masks with frequent, grammatical slot values (a plausible-content infiller)."""
    return ContextInfiller(
        rules={"the": (PLACES, zipf_weights(len(PLACES))), "on": (DAYS, zipf_weights(len(DAYS)))},
        default=(NAMES, [1.0] * len(NAMES)),
        seed=seed,
    )


def make_dialogue(i: int, slots: dict) -> tuple[Dialogue, LabeledSummary]:
    d = Dialogue(f"d{i:05d}", (
        Turn(slots["a"], OPENING.format(**slots)),
        Turn(slots["b"], slots["reply"]),
        Turn(slots["a"], CLOSING.format(**slots)),
    ))
    ref = LabeledSummary(f"s{i:05d}-ref", d.id, "reference", SUMMARY.format(**slots), "positive")
    return d, ref


def default_hallu_generator(seed: int) -> TinyModel:
    """An untrained tiny model: unrestricted sampling from it is off-domain word salad."""
    return TinyModel(synth_vocab(), dim=8, seed=seed + 104_729)


def synth_corpus(n: int, seed: int = 0, generator=None, infiller=None) -> SynthCorpus:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = random.Random(seed)
    factory = NegativeFactory(
        tagger=GazetteerTagger(GAZETTEER),
        infiller=infiller or slot_infiller(seed),
        generator=generator or default_hallu_generator(seed),
        max_len=HALLU_MAX_LEN,
    )
    dialogues, positives, negatives = [], [], []
    for i in range(n):
        d, ref = make_dialogue(i, _sample_slots(rng))
        dialogues.append(d)
        positives.append(ref)
        negatives.extend(factory.for_reference(ref, d, seed=seed * 1_000_003 + i))
    return SynthCorpus(dialogues, positives, negatives)
