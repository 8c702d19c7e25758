"""Deterministic stand-in backends for tests and CPU-only runs."""
from __future__ import annotations

import hashlib
import math
import random
import re
from typing import Callable, Mapping, Sequence

import numpy as np

from faithkit.lexical import tokenize, tokenize_with_spans
from faithkit.models.interfaces import MASK, EntitySpan, SamplingConfig, as_template

_WS = re.compile(r"\S+")


def whitespace_segment(text: str):
    return [(m.group(), (m.start(), m.end())) for m in _WS.finditer(text)]


class TableScorer:
    """Looks up p(token | source, prefix) in a table, falling back to ``default_p``.

    Table keys are ``(source, prefix)`` where ``prefix`` is the tuple of target
    tokens up to and including the scored token (a whitespace-joined string is
    accepted too).
    """

    def __init__(self, table: Mapping, default_p: float):
        if not 0.0 < default_p <= 1.0:
            raise ValueError(f"default_p must lie in (0, 1], got {default_p}")
        self.default_p = default_p
        self.table = {}
        for (src, prefix), p in table.items():
            if not 0.0 < p <= 1.0:
                raise ValueError(f"table probability {p} outside (0, 1]")
            if isinstance(prefix, str):
                prefix = tuple(prefix.split())
            self.table[(src, tuple(prefix))] = p

    def segment(self, text):
        return whitespace_segment(text)

    def token_logprobs(self, source, target):
        toks = [t for t, _ in self.segment(target)]
        return [math.log(self.table.get((source, tuple(toks[:k + 1])), self.default_p))
                for k in range(len(toks))]


def make_table_scorer(table: Mapping, default_p: float) -> TableScorer:
    return TableScorer(table, default_p)


class CopyScorer:
    """p(token) = p_in when the (normalized) token occurs in the source, else p_out."""

    def __init__(self, p_in: float = 0.8, p_out: float = 0.05):
        self.p_in, self.p_out = p_in, p_out

    def segment(self, text):
        return tokenize_with_spans(text)

    def token_logprobs(self, source, target):
        vocab = set(tokenize(source))
        return [math.log(self.p_in if t in vocab else self.p_out) for t, _ in self.segment(target)]


class FixedGenerator:
    def __init__(self, outputs: Mapping[str, str]):
        if not outputs:
            raise ValueError("fixed generator needs at least one template output")
        self.outputs = dict(outputs)

    def generate(self, source, template, sampling=SamplingConfig()):
        tid = as_template(template).id
        try:
            return self.outputs[tid]
        except KeyError:
            raise KeyError(f"unknown template id {tid!r}; known: {sorted(self.outputs)}") from None


def make_fixed_generator(outputs: Mapping[str, str]) -> FixedGenerator:
    return FixedGenerator(outputs)


class TurnGenerator:
    """Extractive stub: template number k returns turn k (mod #turns) of the source.

    Expects a rendered dialogue (``Speaker: text`` per line).  Templates are
    numbered by their position in ``template_ids``; unknown ids hash to a turn.
    """

    def __init__(self, template_ids: Sequence[str] = ()):
        self.order = {t: i for i, t in enumerate(template_ids)}

    def generate(self, source, template, sampling=SamplingConfig()):
        tid = as_template(template).id
        lines = [ln for ln in source.splitlines() if ln.strip()] or [source]
        k = self.order.get(tid)
        if k is None:
            k = int(hashlib.sha256(tid.encode()).hexdigest(), 16)
        line = lines[k % len(lines)]
        speaker, sep, text = line.partition(": ")
        out = f"{speaker} says {text}" if sep else line
        return " ".join(out.split()[:sampling.max_len])


class LookupEncoder:
    """Encoder over whitespace tokens with vectors from a table (or a callable)."""

    def __init__(self, vectors: Mapping[str, Sequence[float]] | Callable[[str], Sequence[float]]):
        self.vectors = vectors

    def encode(self, text):
        seg = whitespace_segment(text)
        get = self.vectors if callable(self.vectors) else self.vectors.__getitem__
        vecs = np.array([get(t) for t, _ in seg], dtype=float)
        if not seg:
            vecs = vecs.reshape(0, 0)
        return seg, vecs


class HashEncoder:
    """Deterministic pseudo-embeddings: one unit vector per normalized token type.

    A small share of the vector is taken from the neighbouring tokens so that
    identical words in different contexts are similar but not identical.
    """

    def __init__(self, dim: int = 32, context_weight: float = 0.0):
        self.dim = dim
        self.context_weight = context_weight

    def _vec(self, token):
        seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
        v = np.random.default_rng(seed).standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def encode(self, text):
        seg = tokenize_with_spans(text)
        base = np.array([self._vec(t) for t, _ in seg]).reshape(len(seg), self.dim)
        if self.context_weight and len(seg) > 1:
            ctx = np.zeros_like(base)
            ctx[1:] += base[:-1]
            ctx[:-1] += base[1:]
            base = base + self.context_weight * ctx
        return seg, base


class ConstantInfiller:
    def __init__(self, fill: str):
        self.fill_text = fill

    def fill(self, text):
        return text.replace(MASK, self.fill_text)


class PoolInfiller:
    """Fills every mask with a seeded draw from ``pool``."""

    def __init__(self, pool: Sequence[str], seed: int = 0):
        if not pool:
            raise ValueError("infiller pool is empty")
        self.pool = list(pool)
        self.seed = seed

    def fill(self, text):
        # Seeded per input so results do not depend on call order.
        digest = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
        rng = random.Random(digest)
        pieces = text.split(MASK)
        out = [pieces[0]]
        for p in pieces[1:]:
            out.append(rng.choice(self.pool))
            out.append(p)
        return "".join(out)


class ContextInfiller:
    """Fills each mask from a weighted pool chosen by the word just before it.

    A crude stand-in for a language-model infiller: ``rules`` maps a
    lowercased preceding word to ``(choices, weights)``; masks with no rule
    draw from ``default``.  Draws are seeded per input text.
    """

    def __init__(self, rules: Mapping[str, tuple[Sequence[str], Sequence[float]]],
                 default: tuple[Sequence[str], Sequence[float]], seed: int = 0):
        self.rules = {k.lower(): (list(c), list(w)) for k, (c, w) in rules.items()}
        self.default = (list(default[0]), list(default[1]))
        self.seed = seed

    def fill(self, text):
        digest = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
        rng = random.Random(digest)
        pieces = text.split(MASK)
        out = [pieces[0]]
        for p in pieces[1:]:
            before = "".join(out).split()
            choices, weights = self.rules.get(before[-1].lower() if before else "", self.default)
            out.append(rng.choices(choices, weights)[0])
            out.append(p)
        return "".join(out)


class GazetteerTagger:
    """Tags whole-word occurrences of known surfaces; longer surfaces win."""

    def __init__(self, gazetteer: Mapping[str, str]):
        self.gazetteer = dict(gazetteer)
        names = sorted(self.gazetteer, key=len, reverse=True)
        self._pattern = re.compile(r"(?<!\w)(" + "|".join(map(re.escape, names)) + r")(?!\w)") if names else None

    def tag(self, text):
        if self._pattern is None:
            return []
        return [EntitySpan(m.start(), m.end(), m.group(), self.gazetteer[m.group()])
                for m in self._pattern.finditer(text)]


class LexicalAligner:
    """Token is consistent (1.0) iff it occurs in the source, else ``miss`` (0.0)."""

    def __init__(self, miss: float = 0.0):
        self.miss = miss

    def segment(self, text):
        return tokenize_with_spans(text)

    def consistency(self, source, hypothesis):
        vocab = set(tokenize(source))
        return [1.0 if t in vocab else self.miss for t, _ in self.segment(hypothesis)]


class ScorerAligner:
    """Token consistency read off a conditional scorer: p(token | source, prefix)."""

    def __init__(self, scorer):
        self.scorer = scorer

    def segment(self, text):
        return self.scorer.segment(text)

    def consistency(self, source, hypothesis):
        return [math.exp(x) for x in self.scorer.token_logprobs(source, hypothesis)]


class FixedAligner:
    def __init__(self, probs: Sequence[float]):
        self.probs = list(probs)

    def segment(self, text):
        return whitespace_segment(text)

    def consistency(self, source, hypothesis):
        return list(self.probs)
