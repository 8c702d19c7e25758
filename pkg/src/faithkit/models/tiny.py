"""A tiny source-conditioned autoregressive model with analytic gradients.

Architecture (d = ``dim``, V = vocabulary size, L = ``max_src_len``)::

    h_t   = tanh(A1 E[y_{t-1}] + A2 E[y_{t-2}] + b_h)       trigram decoder state
    k_j   = R[s_j] + P[j],  v_j = S[s_j]                     source keys / values
    a_t   = softmax_j(Wq h_t . k_j / sqrt(d))                        attention over source
    c_t   = sum_j a_tj v_j
    z_t   = Wo [h_t; c_t] + b_o                              next-token logits

The decoder state depends only on gold previous tokens, so teacher-forced
scoring of all positions is a handful of matrix products.  Target tokens are
toolkit tokens; there is no end-of-sequence term in the scored log-probs.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from faithkit.errors import TokenizationError
from faithkit.lexical import tokenize_with_spans
from faithkit.models.interfaces import SamplingConfig, as_template

BOS = "<s>"
EOS = "</s>"
PARAM_NAMES = ("E", "A1", "A2", "bh", "S", "R", "P", "Wq", "Wo", "bo")
MAX_PARAMS = 100_000


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class ForwardCache:
    src: np.ndarray
    tgt: np.ndarray
    prev1: np.ndarray
    prev2: np.ndarray
    H: np.ndarray
    K: np.ndarray
    Vs: np.ndarray
    Q: np.ndarray
    att: np.ndarray
    F: np.ndarray
    logp: np.ndarray  # (T, V) log-softmax

    @property
    def gold_logprobs(self) -> np.ndarray:
        return self.logp[np.arange(len(self.tgt)), self.tgt]


class TinyModel:
    """Implements ConditionalScorer, Generator and TokenEncoder."""

    def __init__(self, vocab: Sequence[str], dim: int = 16, seed: int = 0,
                 max_src_len: int = 64, init_scale: float = 0.3):
        vocab = list(vocab)
        if BOS not in vocab or EOS not in vocab:
            raise ValueError(f"vocabulary must contain the sentinels {BOS!r} and {EOS!r}")
        if len(set(vocab)) != len(vocab):
            raise ValueError("vocabulary entries must be unique")
        if dim < 2:
            raise ValueError("dim must be at least 2")
        self.vocab = vocab
        self.index = {t: i for i, t in enumerate(vocab)}
        self.dim = dim
        self.seed = seed
        self.max_src_len = max_src_len
        self.bos, self.eos = self.index[BOS], self.index[EOS]
        self._att_scale = 1.0 / np.sqrt(dim)

        V, d, L = len(vocab), dim, max_src_len
        rng = np.random.default_rng(seed)
        sc = init_scale
        self.params = {
            "E": rng.normal(0, sc, (V, d)),
            "A1": rng.normal(0, sc, (d, d)),
            "A2": rng.normal(0, sc, (d, d)),
            "bh": np.zeros(d),
            "S": rng.normal(0, sc, (V, d)),
            "R": rng.normal(0, sc, (V, d)),
            "P": rng.normal(0, sc, (L, d)),
            "Wq": np.zeros((d, d)),  # uniform attention at init; avoids early collapse
            "Wo": rng.normal(0, sc, (V, 2 * d)),
            "bo": np.zeros(V),
        }
        if self.num_parameters() >= MAX_PARAMS:
            raise ValueError(f"{self.num_parameters()} parameters exceeds the tiny-model budget of {MAX_PARAMS}")

    # -- bookkeeping --------------------------------------------------------

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def set_flat(self, flat: np.ndarray) -> None:
        off = 0
        for k in PARAM_NAMES:
            p = self.params[k]
            self.params[k] = np.asarray(flat[off:off + p.size], dtype=float).reshape(p.shape).copy()
            off += p.size

    @staticmethod
    def flatten(grads: dict) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in PARAM_NAMES])

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self) -> "TinyModel":
        other = object.__new__(TinyModel)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(fh, vocab=np.array(self.vocab, dtype=object),
                     meta=np.array([self.dim, self.seed, self.max_src_len]),
                     **self.params)

    @classmethod
    def load(cls, path) -> "TinyModel":
        with np.load(path, allow_pickle=True) as z:
            dim, seed, max_src_len = (int(x) for x in z["meta"])
            model = cls(list(z["vocab"]), dim=dim, seed=seed, max_src_len=max_src_len)
            for k in PARAM_NAMES:
                model.params[k] = z[k].copy()
        return model

    # -- tokenization -------------------------------------------------------

    def segment(self, text: str):
        return tokenize_with_spans(text)

    def ids(self, text: str) -> np.ndarray:
        toks = [t for t, _ in tokenize_with_spans(text)]
        unknown = [t for t in toks if t not in self.index]
        if unknown:
            raise TokenizationError(unknown)
        return np.array([self.index[t] for t in toks], dtype=np.int64)

    def _src_ids(self, source: str) -> np.ndarray:
        ids = self.ids(source)[: self.max_src_len]
        if len(ids) == 0:
            # attention over an empty source: attend to a lone BOS
            ids = np.array([self.bos])
        return ids

    # -- forward / backward -------------------------------------------------

    def forward_ids(self, src: np.ndarray, tgt: np.ndarray) -> ForwardCache:
        p = self.params
        T = len(tgt)
        prev1 = np.concatenate([[self.bos], tgt[:-1]])[:T].astype(np.int64)
        prev2 = np.concatenate([[self.bos, self.bos], tgt[:-2]])[:T].astype(np.int64)
        H = np.tanh(p["E"][prev1] @ p["A1"].T + p["E"][prev2] @ p["A2"].T + p["bh"])
        Vs = p["S"][src]
        K = p["R"][src] + p["P"][: len(src)]
        Q = H @ p["Wq"].T
        sc = (Q @ K.T) * self._att_scale
        sc -= sc.max(axis=1, keepdims=True)
        att = np.exp(sc)
        att /= att.sum(axis=1, keepdims=True)
        C = att @ Vs
        F = np.concatenate([H, C], axis=1)
        logp = _log_softmax(F @ p["Wo"].T + p["bo"])
        return ForwardCache(src, tgt, prev1, prev2, H, K, Vs, Q, att, F, logp)

    def forward(self, source: str, target: str) -> ForwardCache:
        return self.forward_ids(self._src_ids(source), self.ids(target))

    def token_logprobs(self, source: str, target: str) -> list[float]:
        return self.forward(source, target).gold_logprobs.tolist()

    def backward(self, cache: ForwardCache, dlogp: np.ndarray, grads: dict | None = None) -> dict:
        """Accumulate parameter gradients given dLoss/d(gold log-prob) per position."""
        p = self.params
        g = grads if grads is not None else self.zero_grads()
        d = self.dim
        T = len(cache.tgt)
        dlogp = np.asarray(dlogp, dtype=float)
        if dlogp.shape != (T,):
            raise ValueError(f"expected {T} upstream gradients, got shape {dlogp.shape}")
        probs = np.exp(cache.logp)
        dZ = -probs * dlogp[:, None]
        dZ[np.arange(T), cache.tgt] += dlogp
        g["Wo"] += dZ.T @ cache.F
        g["bo"] += dZ.sum(axis=0)
        dF = dZ @ p["Wo"]
        dH = dF[:, :d].copy()
        dC = dF[:, d:]
        datt = dC @ cache.Vs.T
        dVs = cache.att.T @ dC
        dsc = cache.att * (datt - (datt * cache.att).sum(axis=1, keepdims=True))
        dsc *= self._att_scale
        dQ = dsc @ cache.K
        dK = dsc.T @ cache.Q
        g["Wq"] += dQ.T @ cache.H
        dH += dQ @ p["Wq"]
        np.add.at(g["S"], cache.src, dVs)
        np.add.at(g["R"], cache.src, dK)
        g["P"][: len(cache.src)] += dK
        dpre = dH * (1.0 - cache.H ** 2)
        g["A1"] += dpre.T @ p["E"][cache.prev1]
        g["A2"] += dpre.T @ p["E"][cache.prev2]
        g["bh"] += dpre.sum(axis=0)
        np.add.at(g["E"], cache.prev1, dpre @ p["A1"])
        np.add.at(g["E"], cache.prev2, dpre @ p["A2"])
        return g

    def apply_gradients(self, grads: dict, lr: float) -> None:
        for k, v in grads.items():
            self.params[k] -= lr * v

    # -- generation ---------------------------------------------------------

    def next_token_logprobs(self, src: np.ndarray, prefix: Sequence[int]) -> np.ndarray:
        tgt = np.array(list(prefix) + [self.eos], dtype=np.int64)
        return self.forward_ids(src, tgt).logp[-1]

    def generate(self, source, template="{source}", sampling: SamplingConfig = SamplingConfig()) -> str:
        src = self._src_ids(as_template(template).apply(source))
        rng = np.random.default_rng(sampling.seed)
        out: list[int] = []
        for _ in range(sampling.max_len):
            lp = self.next_token_logprobs(src, out)
            lp[self.bos] = -np.inf
            if sampling.strategy == "greedy":
                nxt = int(np.argmax(lp))
            else:
                nxt = _sample_top_p(np.exp(lp - lp.max()), sampling.p, rng)
            if nxt == self.eos:
                break
            out.append(nxt)
        return " ".join(self.vocab[i] for i in out)

    # -- encoder ------------------------------------------------------------

    def encode(self, text: str):
        seg = self.segment(text)
        ids = self.ids(text)
        return seg, self.params["S"][ids].copy()


def _sample_top_p(weights: np.ndarray, p: float, rng: np.random.Generator) -> int:
    probs = weights / weights.sum()
    order = np.argsort(-probs, kind="stable")
    if p < 1.0:
        cum = np.cumsum(probs[order])
        keep = int(np.searchsorted(cum, p) + 1)
        order = order[:keep]
    sub = probs[order] / probs[order].sum()
    return int(order[rng.choice(len(order), p=sub)])


def vocab_from_texts(texts) -> list[str]:
    """Sentinels followed by every toolkit token in ``texts``, sorted."""
    toks = set()
    for t in texts:
        toks.update(tok for tok, _ in tokenize_with_spans(t))
    toks -= {BOS, EOS}
    return [BOS, EOS] + sorted(toks)


def make_tiny_model(vocab: Sequence[str], dim: int = 16, seed: int = 0, **kw) -> TinyModel:
    return TinyModel(vocab, dim=dim, seed=seed, **kw)
