"""Deterministic tokenizer and ROUGE n-gram / LCS overlap metrics.

The tokenizer here is the toolkit tokenizer: every token position stored in
a corpus (e.g. ``negative_indices``) refers to its output.
"""
from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

_CHUNK = re.compile(r"\S+")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _normalize(chunk: str) -> str:
    # NFKC and lower() do not commute for every code point; iterate to a fixed point.
    for _ in range(4):
        out = unicodedata.normalize("NFKC", chunk).lower()
        if out == chunk:
            break
        chunk = out
    return chunk


def _peel(word: str) -> list[tuple[str, int, int]]:
    """Split leading/trailing punctuation characters off ``word``.

    Returns (token, start, end) with offsets relative to ``word``.
    """
    i, j = 0, len(word)
    while i < j and _is_punct(word[i]):
        i += 1
    while j > i and _is_punct(word[j - 1]):
        j -= 1
    out = [(word[k], k, k + 1) for k in range(i)]
    if i < j:
        out.append((word[i:j], i, j))
    out.extend((word[k], k, k + 1) for k in range(j, len(word)))
    return out


@lru_cache(maxsize=1)
def _porter():
    try:
        from nltk.stem.porter import PorterStemmer
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise RuntimeError("stemming requires the 'stem' extra (nltk)") from exc
    return PorterStemmer()


def tokenize_with_spans(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Tokenize ``text`` and report each token's character span in ``text``.

    When normalization changes a chunk's length the span of every token from
    that chunk is the whole chunk.
    """
    tokens = []
    for m in _CHUNK.finditer(text):
        raw = m.group()
        norm = _normalize(raw)
        exact = len(norm) == len(raw)
        for sub in _CHUNK.finditer(norm):
            for tok, a, b in _peel(sub.group()):
                if exact:
                    span = (m.start() + sub.start() + a, m.start() + sub.start() + b)
                else:
                    span = (m.start(), m.end())
                tokens.append((tok, span))
    return tokens


def tokenize(text: str, stem: bool = False, stopwords: Iterable[str] | None = None) -> list[str]:
    """Unicode-normalize, lowercase, split on whitespace and peel punctuation.

    >>> tokenize("Amanda baked cookies.")
    ['amanda', 'baked', 'cookies', '.']
    """
    toks = [t for t, _ in tokenize_with_spans(text)]
    if stopwords is not None:
        stop = set(stopwords)
        toks = [t for t in toks if t not in stop]
    if stem:
        stemmer = _porter()
        toks = [stemmer.stem(t) for t in toks]
    return toks


@dataclass(frozen=True)
class OverlapScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "OverlapScore":
        total = precision + recall
        f1 = 2 * precision * recall / total if total > 0 else 0.0
        return cls(precision, recall, f1)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(hyp: Sequence[str], ref: Sequence[str], n: int) -> OverlapScore:
    """Clipped n-gram overlap between token sequences."""
    if n <= 0:
        raise ValueError(f"n must be a positive integer, got {n}")
    h, r = ngrams(hyp, n), ngrams(ref, n)
    overlap = sum((h & r).values())
    nh, nr = sum(h.values()), sum(r.values())
    p = overlap / nh if nh else 0.0
    rec = overlap / nr if nr else 0.0
    return OverlapScore.from_pr(p, rec)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lcs_alignment(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    """Matched index pairs (i, j) of a longest common subsequence of a and b.

    Among maximum-length alignments, the one with the most same-position
    matches (i == j) is preferred; remaining ties resolve deterministically.
    """
    n, m = len(a), len(b)
    # best[i][j] = (lcs length, diagonal matches) for suffixes a[i:], b[j:]
    best = [[(0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = best[i], best[i + 1]
        for j in range(m - 1, -1, -1):
            cand = max(below[j], row[j + 1])
            if a[i] == b[j]:
                ln, dg = below[j + 1]
                cand = max(cand, (ln + 1, dg + (i == j)))
            row[j] = cand
    pairs = []
    i = j = 0
    while i < n and j < m:
        here = best[i][j]
        if a[i] == b[j]:
            ln, dg = best[i + 1][j + 1]
            if (ln + 1, dg + (i == j)) == here:
                pairs.append((i, j))
                i += 1
                j += 1
                continue
        if best[i + 1][j] == here:
            i += 1
        else:
            j += 1
    return pairs


def rouge_l(hyp: Sequence[str], ref: Sequence[str]) -> OverlapScore:
    lcs = lcs_length(hyp, ref)
    p = lcs / len(hyp) if hyp else 0.0
    r = lcs / len(ref) if ref else 0.0
    return OverlapScore.from_pr(p, r)
