"""Generation-probability faithfulness scores (BARTScore / T0-Score style).

The score of a hypothesis is the (mean or summed) log-probability a
conditional model assigns to it given the prompted source.  The two modes
differ only in the prompt template: ``"{source}"`` gives BARTScore-style
scoring, an instruction template gives T0-Score-style scoring.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from faithkit.errors import ContractError, FaithkitError
from faithkit.models.interfaces import ValidatedScorer

PLACEHOLDER = "{source}"
IDENTITY_TEMPLATE = PLACEHOLDER
DEFAULT_T0_TEMPLATE = "{source}\n\nSummarize the conversation above."


@dataclass(frozen=True)
class GenProbConfig:
    prompt_template: str = IDENTITY_TEMPLATE
    aggregation: str = "mean"
    prob_floor: float | None = None

    def __post_init__(self):
        if self.prompt_template.count(PLACEHOLDER) != 1:
            raise ValueError(f"prompt template must contain exactly one {PLACEHOLDER} placeholder")
        if self.aggregation not in ("mean", "sum"):
            raise ValueError(f"aggregation must be 'mean' or 'sum', got {self.aggregation!r}")
        if self.prob_floor is not None and not 0.0 < self.prob_floor <= 1.0:
            raise ValueError("prob_floor must lie in (0, 1]")

    def prompt(self, source: str) -> str:
        return self.prompt_template.replace(PLACEHOLDER, source)


BARTSCORE = GenProbConfig()
T0SCORE = GenProbConfig(prompt_template=DEFAULT_T0_TEMPLATE)


@dataclass(frozen=True)
class FaithfulnessScore:
    value: float
    token_count: int


class BatchScoringError(FaithkitError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"pair {index}: {cause}")


def _validated(scorer):
    return scorer if isinstance(scorer, ValidatedScorer) else ValidatedScorer(scorer)


def genprob_score(source: str, hypothesis: str, scorer, cfg: GenProbConfig = BARTSCORE) -> FaithfulnessScore:
    """Log-domain faithfulness of ``hypothesis`` given ``source``; higher is more faithful."""
    scorer = _validated(scorer)
    if not scorer.segment(hypothesis):
        raise ValueError("hypothesis is empty under the scorer's tokenization")
    lps = scorer.token_logprobs(cfg.prompt(source), hypothesis)
    if cfg.prob_floor is not None:
        floor = math.log(cfg.prob_floor)
        lps = [max(x, floor) for x in lps]
    total = math.fsum(lps)
    n = len(lps)
    value = total / n if cfg.aggregation == "mean" else total
    return FaithfulnessScore(value, n)


def genprob_score_batch(pairs: Sequence[tuple[str, str]], scorer, cfg: GenProbConfig = BARTSCORE,
                        workers: int = 1) -> list[FaithfulnessScore]:
    scorer = _validated(scorer)

    def one(i):
        src, hyp = pairs[i]
        try:
            return genprob_score(src, hyp, scorer, cfg)
        except (ValueError, ContractError, KeyError) as exc:
            raise BatchScoringError(i, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(len(pairs))))
    return [one(i) for i in range(len(pairs))]
