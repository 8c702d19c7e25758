"""Dialogues, labeled summaries, human judgments and score records.

All corpora are UTF-8 JSON-lines files, one record per line::

    dialogues.jsonl  {"id", "turns": [{"speaker", "text"}, ...]}
    summaries.jsonl  {"id", "dialogue_id", "system", "text", "label",
                      "neg_type"?, "negative_indices"?}
    judgments.jsonl  {"summary_id", "faithfulness"}
    scores.jsonl     {"summary_id", "metric", "value"}
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from faithkit.errors import DataError
from faithkit.lexical import tokenize

LABELS = ("positive", "negative")
NEG_TYPES = ("swapent", "maskent", "hallu")
FAITHFULNESS_RANGE = (1.0, 10.0)


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.id:
            raise DataError("dialogue id must be nonempty")
        for k, t in enumerate(self.turns):
            if not t.speaker or not t.text:
                raise DataError(f"dialogue {self.id!r} turn {k} has an empty speaker or utterance")

    @classmethod
    def from_pairs(cls, id: str, pairs: Iterable[tuple[str, str]]) -> "Dialogue":
        return cls(id, tuple(Turn(s, u) for s, u in pairs))


@dataclass(frozen=True)
class LabeledSummary:
    id: str
    dialogue_id: str
    system: str
    text: str
    label: str = "positive"
    neg_type: str | None = None
    negative_indices: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "negative_indices", frozenset(self.negative_indices))
        if not self.id:
            raise DataError("summary id must be nonempty")
        if self.label not in LABELS:
            raise DataError(f"summary {self.id!r}: label must be one of {LABELS}, got {self.label!r}")
        if self.label == "positive":
            if self.negative_indices or self.neg_type is not None:
                raise DataError(f"summary {self.id!r}: positive summaries carry no neg_type or negative_indices")
        else:
            if self.neg_type not in NEG_TYPES:
                raise DataError(f"summary {self.id!r}: negative summaries need neg_type in {NEG_TYPES}")
            n_tok = len(tokenize(self.text))
            bad = [i for i in self.negative_indices if not 0 <= i < n_tok]
            if bad:
                raise DataError(f"summary {self.id!r}: negative indices {sorted(bad)} out of range for {n_tok} tokens")


@dataclass(frozen=True)
class HumanJudgment:
    summary_id: str
    faithfulness: float

    def __post_init__(self):
        lo, hi = FAITHFULNESS_RANGE
        if not self.summary_id:
            raise DataError("judgment summary_id must be nonempty")
        if not (lo <= self.faithfulness <= hi):
            raise DataError(f"faithfulness {self.faithfulness} for {self.summary_id!r} outside [{lo:g}, {hi:g}]")


@dataclass(frozen=True)
class ScoreRecord:
    summary_id: str
    metric: str
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DataError(f"non-finite score {self.value} for {self.summary_id!r} ({self.metric})")


def render_dialogue(d: Dialogue) -> str:
    """Flatten a dialogue to ``Speaker: utterance`` lines."""
    return "\n".join(f"{t.speaker}: {t.text}" for t in d.turns)


# -- (de)serialization ------------------------------------------------------

def _dialogue_from_json(obj) -> Dialogue:
    turns = obj["turns"]
    if not isinstance(turns, list):
        raise TypeError("turns must be a list")
    return Dialogue(_str(obj["id"]), tuple(Turn(_str(t["speaker"]), _str(t["text"])) for t in turns))


def _dialogue_to_json(d: Dialogue) -> dict:
    return {"id": d.id, "turns": [{"speaker": t.speaker, "text": t.text} for t in d.turns]}


def _summary_from_json(obj) -> LabeledSummary:
    indices = obj.get("negative_indices") or []
    if not all(isinstance(i, int) and not isinstance(i, bool) for i in indices):
        raise TypeError("negative_indices must be integers")
    return LabeledSummary(
        id=_str(obj["id"]),
        dialogue_id=_str(obj["dialogue_id"]),
        system=_str(obj["system"]),
        text=_str(obj["text"]),
        label=obj["label"],
        neg_type=obj.get("neg_type"),
        negative_indices=frozenset(indices),
    )


def _summary_to_json(s: LabeledSummary) -> dict:
    out = {"id": s.id, "dialogue_id": s.dialogue_id, "system": s.system, "text": s.text, "label": s.label}
    if s.neg_type is not None:
        out["neg_type"] = s.neg_type
    if s.label == "negative":
        out["negative_indices"] = sorted(s.negative_indices)
    return out


def _judgment_from_json(obj) -> HumanJudgment:
    return HumanJudgment(_str(obj["summary_id"]), _num(obj["faithfulness"]))


def _judgment_to_json(j: HumanJudgment) -> dict:
    return {"summary_id": j.summary_id, "faithfulness": j.faithfulness}


def _score_from_json(obj) -> ScoreRecord:
    return ScoreRecord(_str(obj["summary_id"]), _str(obj["metric"]), _num(obj["value"]))


def _score_to_json(r: ScoreRecord) -> dict:
    return {"summary_id": r.summary_id, "metric": r.metric, "value": r.value}


def _str(x) -> str:
    if not isinstance(x, str):
        raise TypeError(f"expected a string, got {type(x).__name__}")
    return x


def _num(x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"expected a number, got {type(x).__name__}")
    return float(x)


def _read_jsonl(path, parse: Callable, key: Callable | None) -> list:
    path = Path(path)
    out, seen = [], {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise TypeError("record must be a JSON object")
                rec = parse(obj)
            except DataError as exc:
                raise DataError(str(exc), path, lineno) from exc
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"malformed record ({type(exc).__name__}: {exc})", path, lineno) from exc
            if key is not None:
                k = key(rec)
                if k in seen:
                    raise DataError(f"duplicate id {k!r} (first seen on line {seen[k]})", path, lineno)
                seen[k] = lineno
            out.append(rec)
    return out


def _write_jsonl(records: Iterable, path, dump: Callable) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(dump(r), ensure_ascii=False) + "\n")


def load_dialogues(path) -> list[Dialogue]:
    return _read_jsonl(path, _dialogue_from_json, key=lambda d: d.id)


def load_summaries(path) -> list[LabeledSummary]:
    return _read_jsonl(path, _summary_from_json, key=lambda s: s.id)


def load_judgments(path) -> list[HumanJudgment]:
    return _read_jsonl(path, _judgment_from_json, key=lambda j: j.summary_id)


def load_scores(path) -> list[ScoreRecord]:
    return _read_jsonl(path, _score_from_json, key=None)


def save_dialogues(dialogues: Iterable[Dialogue], path) -> None:
    _write_jsonl(dialogues, path, _dialogue_to_json)


def save_summaries(summaries: Iterable[LabeledSummary], path) -> None:
    _write_jsonl(summaries, path, _summary_to_json)


def save_judgments(judgments: Iterable[HumanJudgment], path) -> None:
    _write_jsonl(judgments, path, _judgment_to_json)


def save_scores(records: Iterable[ScoreRecord], path) -> None:
    _write_jsonl(records, path, _score_to_json)


def check_references(summaries: Sequence[LabeledSummary], dialogues: Sequence[Dialogue]) -> None:
    """Raise DataError naming every summary whose dialogue_id does not resolve."""
    known = {d.id for d in dialogues}
    missing = [(s.id, s.dialogue_id) for s in summaries if s.dialogue_id not in known]
    if missing:
        shown = ", ".join(f"{sid}->{did}" for sid, did in missing[:10])
        raise DataError(f"{len(missing)} summaries reference unknown dialogues: {shown}")


def iter_by_dialogue(summaries: Iterable[LabeledSummary]) -> Iterator[tuple[str, list[LabeledSummary]]]:
    groups: dict[str, list[LabeledSummary]] = {}
    for s in summaries:
        groups.setdefault(s.dialogue_id, []).append(s)
    yield from groups.items()
