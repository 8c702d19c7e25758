"""Desk-scale replication: does unlikelihood training sharpen a scorer's faithfulness ranking?

Three conditions share each run's initial weights: the untrained tiny model,
MLE on reference summaries, and MLE plus unlikelihood on synthetic negatives.
Every held-out summary (reference or negative) is scored with the mean token
log-probability, and the scores are rank-correlated with the 0/1 label.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from faithkit.config import derive_seed
from faithkit.corpus import LabeledSummary, ScoreRecord, render_dialogue, save_scores
from faithkit.genprob import BARTSCORE, genprob_score
from faithkit.metaeval import spearman
from faithkit.models.tiny import TinyModel
from faithkit.training.loop import TrainConfig, train
from faithkit.training.objective import LossConfig, TrainItem
from faithkit.training.synth import synth_corpus, synth_vocab

log = logging.getLogger(__name__)

CONDITIONS = ("untrained", "mle", "unlikelihood")
REPORT_COLUMNS = ("condition", "run", "seed", "rho", "pairwise_acc", "final_loss")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 500
    heldout: int = 100
    seed: int = 0
    num_runs: int = 3
    dim: int = 16
    steps: int = 500
    learning_rate: float = 0.1
    positive_batch: int = 16
    negative_batch: int = 16
    alpha: float = 0.1
    prob_ceiling_eps: float = 1e-6
    neg_types: str = "swapent,maskent,hallu"

    def __post_init__(self):
        if not 0 < self.heldout < self.n:
            raise ValueError("heldout must lie strictly between 0 and n")
        if self.positive_batch < 1 or self.negative_batch < 0:
            raise ValueError("positive_batch must be >= 1 and negative_batch >= 0")

    @classmethod
    def from_mapping(cls, m: dict) -> "ExperimentConfig":
        """Build from string values (a key=value config file); unknown keys are an error."""
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(m) - set(known))
        if unknown:
            raise ValueError(f"unknown experiment keys: {', '.join(unknown)}")
        conv = {"int": int, "float": float, "str": str}
        return cls(**{k: conv[known[k]](v) for k, v in m.items()})

    def mle_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.positive_batch, self.steps, seed=seed,
                           num_runs=1, negative_fraction=0.0, grad_clip=None)

    def ul_train_config(self, seed: int) -> TrainConfig:
        # Batches add negatives on top of the MLE run's positives; scaling the rate
        # by the batch growth keeps the positive updates identical in size.
        size = self.positive_batch + self.negative_batch
        return TrainConfig(self.learning_rate * size / self.positive_batch, size, self.steps, seed=seed,
                           num_runs=1, negative_fraction=self.negative_batch / size, grad_clip=None)


@dataclass(frozen=True)
class RunResult:
    condition: str
    run: int
    seed: int
    rho: float
    pairwise_acc: float
    final_loss: float | None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    scores: list[ScoreRecord]
    traces: dict[str, list[float]]

    def mean(self, condition: str, field: str = "rho") -> float:
        return float(np.mean([getattr(r, field) for r in self.runs if r.condition == condition]))

    def per_run(self, condition: str, field: str = "rho") -> list[float]:
        return [getattr(r, field) for r in sorted(self.runs, key=lambda r: r.run) if r.condition == condition]


def pairwise_accuracy(summaries, values) -> float:
    """Share of negatives scored strictly below their dialogue's reference."""
    ref = {s.dialogue_id: v for s, v in zip(summaries, values) if s.label == "positive"}
    wins = [ref[s.dialogue_id] > v for s, v in zip(summaries, values) if s.label == "negative"]
    if not wins:
        raise ValueError("no negatives to compare")
    return float(np.mean(wins))


def _items(summaries, sources):
    return [TrainItem.build(sources[s.dialogue_id], s.text, s.label, s.negative_indices) for s in summaries]


def run_experiment(cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    corpus = synth_corpus(cfg.n, seed=derive_seed(cfg.seed, "corpus"))
    sources = {d.id: render_dialogue(d) for d in corpus.dialogues}
    train_ids = {d.id for d in corpus.dialogues[: cfg.n - cfg.heldout]}
    types = set(cfg.neg_types.split(","))
    negatives = [s for s in corpus.negatives if s.neg_type in types]

    positives_tr = _items([s for s in corpus.positives if s.dialogue_id in train_ids], sources)
    negatives_tr = _items([s for s in negatives if s.dialogue_id in train_ids], sources)
    evaluation: list[LabeledSummary] = [s for s in corpus.positives + negatives if s.dialogue_id not in train_ids]
    evaluation.sort(key=lambda s: s.id)
    labels = [1.0 if s.label == "positive" else 0.0 for s in evaluation]
    loss_cfg = LossConfig(cfg.alpha, cfg.prob_ceiling_eps)

    runs, scores, traces = [], [], {}
    for r in range(cfg.num_runs):
        seed = derive_seed(cfg.seed, "run", r)
        init = TinyModel(synth_vocab(), dim=cfg.dim, seed=seed)
        models = {"untrained": (init, None)}
        models["mle"] = train(init.copy(), positives_tr, loss_cfg, cfg.mle_train_config(seed))
        models["unlikelihood"] = train(init.copy(), positives_tr + negatives_tr, loss_cfg, cfg.ul_train_config(seed))
        for cond in CONDITIONS:
            model, trace = models[cond]
            values = [genprob_score(sources[s.dialogue_id], s.text, model, BARTSCORE).value for s in evaluation]
            metric = f"genprob-{cond}-run{r}"
            scores.extend(ScoreRecord(s.id, metric, v) for s, v in zip(evaluation, values))
            res = RunResult(cond, r, seed, spearman(values, labels), pairwise_accuracy(evaluation, values),
                            trace[-1] if trace else None)
            runs.append(res)
            if trace:
                traces[metric] = trace
            log.info("run %d %-12s rho=%.4f pairwise=%.3f", r, cond, res.rho, res.pairwise_acc)
    return ExperimentResult(cfg, runs, scores, traces)


def _fmt(v):
    if v is None:
        return ""
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_outputs(result: ExperimentResult, out_dir) -> dict[str, Path]:
    """Write scores.jsonl, report.tsv, traces.jsonl and config.json; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / name for k, name in
             (("scores", "scores.jsonl"), ("report", "report.tsv"), ("traces", "traces.jsonl"), ("config", "config.json"))}
    save_scores(result.scores, paths["scores"])
    rows = ["\t".join(REPORT_COLUMNS)]
    for r in result.runs:
        rows.append("\t".join(_fmt(getattr(r, c)) for c in REPORT_COLUMNS))
    for cond in CONDITIONS:
        rows.append("\t".join([cond, "mean", "", _fmt(result.mean(cond)), _fmt(result.mean(cond, "pairwise_acc")), ""]))
    paths["report"].write_text("\n".join(rows) + "\n", encoding="utf-8")
    with paths["traces"].open("w", encoding="utf-8") as fh:
        for name in sorted(result.traces):
            for step, loss in enumerate(result.traces[name]):
                fh.write(json.dumps({"run": name, "step": step, "loss": round(loss, 10)}) + "\n")
    paths["config"].write_text(json.dumps(asdict(result.config), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
