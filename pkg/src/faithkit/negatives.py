"""Negative summary generators: entity swap, mask-and-fill, and hallucination.

Each generator returns a :class:`NegativeSample` whose ``negative_indices``
are toolkit-token positions of the corrupted content, or ``None`` when no
corruption distinct from the reference can be produced.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from faithkit.corpus import Dialogue, LabeledSummary, render_dialogue
from faithkit.lexical import lcs_alignment, tokenize
from faithkit.models.interfaces import (
    MASK,
    EntitySpan,
    PromptTemplate,
    SamplingConfig,
    ValidatedGenerator,
    ValidatedInfiller,
)

NEG_TYPES = ("swapent", "maskent", "hallu")
HALLU_TEMPLATE = PromptTemplate("hallu", "{source}")
_ENUMERATE_UP_TO = 7


@dataclass(frozen=True)
class NegativeSample:
    text: str
    neg_type: str
    negative_indices: frozenset[int]
    source_summary_id: str = ""

    def to_summary(self, id: str, dialogue_id: str, system: str | None = None) -> LabeledSummary:
        return LabeledSummary(id=id, dialogue_id=dialogue_id, system=system or self.neg_type,
                              text=self.text, label="negative", neg_type=self.neg_type,
                              negative_indices=self.negative_indices)


def negative_token_indices(reference: str, candidate: str) -> set[int]:
    """Candidate token positions left unmatched by an LCS alignment with the reference."""
    ref, cand = tokenize(reference), tokenize(candidate)
    matched = {j for _, j in lcs_alignment(ref, cand)}
    return set(range(len(cand))) - matched


def _check_spans(text: str, spans: Sequence[EntitySpan]) -> list[EntitySpan]:
    for s in spans:
        s.check(text)
    ordered = sorted(spans, key=lambda s: (s.char_start, s.char_end))
    for a, b in zip(ordered, ordered[1:]):
        if b.char_start < a.char_end:
            raise ValueError(f"overlapping entity spans {a} and {b}")
    return ordered


def _replace_spans(text: str, replacements: Iterable[tuple[EntitySpan, str]]) -> str:
    out = text
    for span, new in sorted(replacements, key=lambda r: r[0].char_start, reverse=True):
        out = out[:span.char_start] + new + out[span.char_end:]
    return out


def _by_type(spans: Sequence[EntitySpan]) -> dict[str, list[EntitySpan]]:
    groups: dict[str, list[EntitySpan]] = {}
    for s in spans:
        groups.setdefault(s.type, []).append(s)
    return dict(sorted(groups.items()))


def _surface_derangement(surfaces: Sequence[str], rng: random.Random) -> list[int] | None:
    """A permutation moving a different surface into every position, or None."""
    k = len(surfaces)

    def ok(perm):
        return all(surfaces[perm[i]] != surfaces[i] for i in range(k))

    if k <= _ENUMERATE_UP_TO:
        valid = [perm for perm in itertools.permutations(range(k)) if ok(perm)]
        return list(rng.choice(valid)) if valid else None
    perm = list(range(k))
    for _ in range(10_000):
        rng.shuffle(perm)
        if ok(perm):
            return perm
    return None


def _accept(reference, text, neg_type, summary_id) -> NegativeSample | None:
    if text == reference:
        return None
    idx = negative_token_indices(reference, text)
    if not idx:
        return None
    return NegativeSample(text, neg_type, frozenset(idx), summary_id)


def swap_entities(reference: str, spans: Sequence[EntitySpan], seed: int,
                  source_summary_id: str = "") -> NegativeSample | None:
    """Shuffle entity surfaces among same-typed positions so none stays in place."""
    spans = _check_spans(reference, spans)
    rng = random.Random(seed)
    replacements = []
    for _, group in _by_type(spans).items():
        surfaces = [s.surface for s in group]
        if len(set(surfaces)) < 2:
            continue
        perm = _surface_derangement(surfaces, rng)
        if perm is None:
            continue
        replacements.extend((group[i], surfaces[perm[i]]) for i in range(len(group)))
    if not replacements:
        return None
    return _accept(reference, _replace_spans(reference, replacements), "swapent", source_summary_id)


def mask_and_fill(reference: str, spans: Sequence[EntitySpan], infiller, seed: int,
                  source_summary_id: str = "") -> NegativeSample | None:
    """Mask one randomly chosen entity of each type and let ``infiller`` fill the gaps."""
    spans = _check_spans(reference, spans)
    if not spans:
        return None
    rng = random.Random(seed)
    chosen = [group[rng.randrange(len(group))] for group in _by_type(spans).values()]
    masked = _replace_spans(reference, [(s, MASK) for s in chosen])
    if not isinstance(infiller, ValidatedInfiller):
        infiller = ValidatedInfiller(infiller)
    filled = infiller.fill(masked)
    return _accept(reference, filled, "maskent", source_summary_id)


def hallucinate(dialogue: Dialogue, generator, seed: int, max_len: int = 32,
                template: PromptTemplate = HALLU_TEMPLATE, source_summary_id: str = "") -> NegativeSample:
    """Sample a summary with unrestricted nucleus sampling (p = 1.0); every token is negative."""
    if not isinstance(generator, ValidatedGenerator):
        generator = ValidatedGenerator(generator)
    sampling = SamplingConfig(strategy="top_p", p=1.0, seed=seed, max_len=max_len)
    text = generator.generate(render_dialogue(dialogue), template, sampling)
    n = len(tokenize(text))
    if n == 0:
        raise ValueError(f"generator produced an empty summary for dialogue {dialogue.id!r}")
    return NegativeSample(text, "hallu", frozenset(range(n)), source_summary_id)


@dataclass
class NegativeFactory:
    """Bundles backends so a corpus of references can be corrupted in one pass."""

    tagger: object = None
    infiller: object = None
    generator: object = None
    types: Sequence[str] = NEG_TYPES
    max_len: int = 32
    hallu_retries: int = 3
    _stats: dict = field(default_factory=dict)

    def for_reference(self, ref: LabeledSummary, dialogue: Dialogue, seed: int) -> list[LabeledSummary]:
        out = []
        spans = self.tagger.tag(ref.text) if self.tagger is not None and (
            "swapent" in self.types or "maskent" in self.types) else []
        for k, kind in enumerate(self.types):
            sub_seed = seed * 1_000 + k
            if kind == "swapent":
                sample = swap_entities(ref.text, spans, sub_seed, ref.id)
            elif kind == "maskent":
                sample = mask_and_fill(ref.text, spans, self.infiller, sub_seed, ref.id)
            elif kind == "hallu":
                sample = None
                for attempt in range(self.hallu_retries):
                    try:
                        sample = hallucinate(dialogue, self.generator, sub_seed + 7919 * attempt,
                                             self.max_len, source_summary_id=ref.id)
                        break
                    except ValueError:
                        continue
                if sample is not None and sample.text == ref.text:
                    sample = None
            else:
                raise ValueError(f"unknown negative type {kind!r}")
            self._stats[kind] = self._stats.get(kind, 0) + (sample is not None)
            if sample is not None:
                out.append(sample.to_summary(f"{ref.id}-{kind}", dialogue.id))
        return out

    @property
    def accepted(self) -> dict:
        return dict(self._stats)
