"""Contracts for the neural capabilities the toolkit consumes.

Backends (stubs, the tiny model, adapters around pretrained models) implement
these protocols structurally.  The ``Validated*`` wrappers enforce each
contract around any backend and raise :class:`ContractError` on violation.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from faithkit.errors import ContractError

MASK = "<mask>"

Segmentation = list[tuple[str, tuple[int, int]]]


@dataclass(frozen=True)
class SamplingConfig:
    strategy: str = "greedy"  # "greedy" | "top_p"
    p: float = 1.0
    seed: int = 0
    max_len: int = 32

    def __post_init__(self):
        if self.strategy not in ("greedy", "top_p"):
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"top-p must lie in (0, 1], got {self.p}")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str = "{source}"

    def apply(self, source: str) -> str:
        return self.text.replace("{source}", source)


def as_template(t) -> PromptTemplate:
    if isinstance(t, PromptTemplate):
        return t
    return PromptTemplate(id=t, text=t if "{source}" in t else "{source}")


@dataclass(frozen=True)
class EntitySpan:
    char_start: int
    char_end: int
    surface: str
    type: str

    def check(self, text: str) -> None:
        if not (0 <= self.char_start < self.char_end <= len(text)):
            raise ValueError(f"span [{self.char_start}, {self.char_end}) out of bounds for text of length {len(text)}")
        if text[self.char_start:self.char_end] != self.surface:
            raise ValueError(f"span surface {self.surface!r} does not match text slice "
                             f"{text[self.char_start:self.char_end]!r}")


@runtime_checkable
class ConditionalScorer(Protocol):
    def segment(self, text: str) -> Segmentation: ...

    def token_logprobs(self, source: str, target: str) -> Sequence[float]: ...


@runtime_checkable
class Generator(Protocol):
    def generate(self, source: str, template, sampling: SamplingConfig = SamplingConfig()) -> str: ...


@runtime_checkable
class TokenEncoder(Protocol):
    def encode(self, text: str) -> tuple[Segmentation, np.ndarray]: ...


@runtime_checkable
class Infiller(Protocol):
    def fill(self, text: str) -> str: ...


@runtime_checkable
class EntityTagger(Protocol):
    def tag(self, text: str) -> list[EntitySpan]: ...


@runtime_checkable
class TokenConsistencyAligner(Protocol):
    def segment(self, text: str) -> Segmentation: ...

    def consistency(self, source: str, hypothesis: str) -> Sequence[float]: ...


# -- validation wrappers ----------------------------------------------------

class _Wrapper:
    interface = ""

    def __init__(self, inner):
        self.inner = inner

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def _fail(self, msg):
        raise ContractError(self.interface, msg)


class ValidatedScorer(_Wrapper):
    interface = "ConditionalScorer"

    def segment(self, text):
        return self.inner.segment(text)

    def token_logprobs(self, source, target):
        lps = [float(x) for x in self.inner.token_logprobs(source, target)]
        n = len(self.inner.segment(target))
        if len(lps) != n:
            self._fail(f"returned {len(lps)} log-probabilities for a target of {n} tokens")
        for k, x in enumerate(lps):
            if math.isnan(x) or x > 0.0 or math.isinf(x):
                self._fail(f"log-probability {x} at position {k} is not a finite value <= 0")
        return lps


class ValidatedGenerator(_Wrapper):
    interface = "Generator"

    def generate(self, source, template, sampling=SamplingConfig()):
        out = self.inner.generate(source, template, sampling)
        if not isinstance(out, str):
            self._fail(f"generate returned {type(out).__name__}, expected str")
        return out


class ValidatedEncoder(_Wrapper):
    interface = "TokenEncoder"

    def __init__(self, inner):
        super().__init__(inner)
        self.dim = None

    def encode(self, text):
        seg, vecs = self.inner.encode(text)
        vecs = np.asarray(vecs, dtype=float)
        if vecs.ndim != 2 or vecs.shape[0] != len(seg):
            self._fail(f"{vecs.shape} vectors for {len(seg)} tokens")
        if not seg:
            return seg, vecs
        if self.dim is None:
            self.dim = vecs.shape[1]
        elif vecs.shape[1] != self.dim:
            self._fail(f"dimension changed from {self.dim} to {vecs.shape[1]}")
        if not np.all(np.isfinite(vecs)):
            self._fail("non-finite embedding values")
        return seg, vecs


class ValidatedInfiller(_Wrapper):
    interface = "Infiller"

    def fill(self, text):
        out = self.inner.fill(text)
        if MASK in out:
            self._fail(f"output still contains the mask placeholder: {out!r}")
        pieces = text.split(MASK)
        pattern = "(.*?)".join(re.escape(p) for p in pieces)
        if re.fullmatch(pattern, out, flags=re.DOTALL) is None:
            self._fail(f"non-masked text was not preserved: {text!r} -> {out!r}")
        return out


class ValidatedTagger(_Wrapper):
    interface = "EntityTagger"

    def tag(self, text):
        spans = list(self.inner.tag(text))
        last_end = -1
        for s in spans:
            try:
                s.check(text)
            except ValueError as exc:
                self._fail(str(exc))
            if s.char_start < last_end:
                self._fail(f"spans overlap or are unsorted at {s}")
            last_end = s.char_end
        return spans


class ValidatedAligner(_Wrapper):
    interface = "TokenConsistencyAligner"

    def segment(self, text):
        return self.inner.segment(text)

    def consistency(self, source, hypothesis):
        probs = [float(x) for x in self.inner.consistency(source, hypothesis)]
        n = len(self.inner.segment(hypothesis))
        if len(probs) != n:
            self._fail(f"returned {len(probs)} probabilities for {n} hypothesis tokens")
        bad = [p for p in probs if not 0.0 <= p <= 1.0]
        if bad:
            self._fail(f"probabilities outside [0, 1]: {bad[:5]}")
        return probs
