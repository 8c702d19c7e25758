"""``faithkit`` command line: one subcommand per procedure.

Exit status is 0 on success, 1 on a usage error and 2 on bad data or a
backend contract violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

from faithkit import __version__
from faithkit.config import derive_seed, read_config, read_prompt_templates
from faithkit.corpus import (
    ScoreRecord,
    check_references,
    load_dialogues,
    load_judgments,
    load_scores,
    load_summaries,
    render_dialogue,
    save_scores,
    save_summaries,
)
from faithkit.errors import DataError, FaithkitError
from faithkit.fakeref import DEFAULT_PROMPTS, generate_pseudo_reference
from faithkit.genprob import BARTSCORE, DEFAULT_T0_TEMPLATE, GenProbConfig, genprob_score_batch
from faithkit.lexical import rouge_l, rouge_n, tokenize
from faithkit.metaeval import GROUPINGS, evaluate_metric, join_scores, scatter_plot, write_report_json, write_report_tsv
from faithkit.models import (
    CopyScorer,
    GazetteerTagger,
    HashEncoder,
    LexicalAligner,
    PoolInfiller,
    SamplingConfig,
    ScorerAligner,
    TinyModel,
    TurnGenerator,
    vocab_from_texts,
)
from faithkit.negatives import NEG_TYPES, NegativeFactory
from faithkit.similarity import bertscore, ctc_consistency
from faithkit.training.experiment import ExperimentConfig, run_experiment, write_outputs
from faithkit.training.loop import TrainConfig, train
from faithkit.training.objective import LossConfig, TrainItem

log = logging.getLogger("faithkit")

METRICS = ("rouge-1", "rouge-2", "rouge-3", "rouge-l", "bertscore", "ctc", "bartscore", "t0score")
BACKENDS = ("stub", "tiny")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- backends ---------------------------------------------------------------

def _cache_dir() -> Path | None:
    root = os.environ.get("FAITHKIT_CACHE")
    return Path(root) if root else None


def _tiny_model(args, texts) -> TinyModel:
    """Load ``--model`` or build a fresh seeded model over the vocabulary of ``texts``.

    Fresh models are cached under ``$FAITHKIT_CACHE`` keyed by vocabulary, size and seed.
    """
    if getattr(args, "model", None):
        return TinyModel.load(args.model)
    vocab = vocab_from_texts(texts)
    seed = derive_seed(args.seed, "tiny-init")
    cache = _cache_dir()
    path = None
    if cache is not None:
        key = hashlib.sha256(json.dumps([vocab, args.dim, seed]).encode("utf-8")).hexdigest()[:16]
        path = cache / f"tiny-{key}.npz"
        if path.exists():
            log.info("loading cached tiny model %s", path)
            return TinyModel.load(path)
    model = TinyModel(vocab, dim=args.dim, seed=seed)
    if path is not None:
        model.save(path)
    return model


def _corpus_texts(dialogues, summaries=(), extra=()):
    texts = [render_dialogue(d) for d in dialogues]
    texts += [s.text for s in summaries]
    texts += [t.replace("{source}", " ") for t in extra]
    return texts


# -- subcommands ------------------------------------------------------------

def _pick_reference(summaries, dialogues, mode):
    sources = {d.id: render_dialogue(d) for d in dialogues}
    refs = {}
    if mode == "auto":
        for s in summaries:
            if s.system == "reference" and s.label == "positive":
                refs.setdefault(s.dialogue_id, s.text)
    return {s.id: refs.get(s.dialogue_id, sources[s.dialogue_id]) for s in summaries}


def cmd_score(args) -> int:
    dialogues = load_dialogues(args.dialogues)
    summaries = load_summaries(args.summaries)
    check_references(summaries, dialogues)
    sources = {d.id: render_dialogue(d) for d in dialogues}
    metric = args.metric
    if metric in ("bartscore", "t0score"):
        template = args.prompt or (DEFAULT_T0_TEMPLATE if metric == "t0score" else BARTSCORE.prompt_template)
        cfg = GenProbConfig(prompt_template=template, aggregation=args.aggregation)
        if args.backend == "tiny":
            scorer = _tiny_model(args, _corpus_texts(dialogues, summaries, [template]))
        else:
            scorer = CopyScorer()
        pairs = [(sources[s.dialogue_id], s.text) for s in summaries]
        values = [r.value for r in genprob_score_batch(pairs, scorer, cfg, workers=args.workers)]
    else:
        if metric.startswith("rouge") or metric == "bertscore":
            refs = _pick_reference(summaries, dialogues, args.reference)
        if metric == "bertscore":
            encoder = (_tiny_model(args, _corpus_texts(dialogues, summaries)) if args.backend == "tiny"
                       else HashEncoder(dim=args.dim))
            fn = lambda s: bertscore(s.text, refs[s.id], encoder).f1
        elif metric == "ctc":
            aligner = (ScorerAligner(_tiny_model(args, _corpus_texts(dialogues, summaries)))
                       if args.backend == "tiny" else LexicalAligner())
            fn = lambda s: ctc_consistency(sources[s.dialogue_id], s.text, aligner)
        elif metric == "rouge-l":
            fn = lambda s: rouge_l(tokenize(s.text), tokenize(refs[s.id])).f1
        else:
            n = int(metric.split("-")[1])
            fn = lambda s: rouge_n(tokenize(s.text), tokenize(refs[s.id]), n).f1
        if args.workers > 1:
            with ThreadPoolExecutor(max_workers=args.workers) as pool:
                values = list(pool.map(fn, summaries))
        else:
            values = [fn(s) for s in summaries]
    save_scores([ScoreRecord(s.id, metric, v) for s, v in zip(summaries, values)], args.out)
    log.info("wrote %d %s scores to %s", len(values), metric, args.out)
    return 0


def _read_gazetteer(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        surface, sep, etype = line.rpartition("\t")
        if not sep or not surface or not etype:
            raise DataError("expected 'surface<TAB>type'", path=str(path), line=n)
        out[surface] = etype
    return out


def cmd_negatives(args) -> int:
    dialogues = load_dialogues(args.dialogues)
    refs = [s for s in load_summaries(args.summaries) if s.label == "positive"]
    check_references(refs, dialogues)
    by_id = {d.id: d for d in dialogues}
    if args.gazetteer:
        gazetteer = _read_gazetteer(args.gazetteer)
    else:
        from faithkit.training.synth import GAZETTEER as gazetteer
    types = tuple(args.types.split(","))
    unknown = [t for t in types if t not in NEG_TYPES]
    if unknown:
        raise UsageError(f"unknown negative types {unknown}; choose from {', '.join(NEG_TYPES)}")
    generator = None
    if "hallu" in types:
        generator = _tiny_model(args, _corpus_texts(dialogues, refs))
    factory = NegativeFactory(tagger=GazetteerTagger(gazetteer),
                              infiller=PoolInfiller(sorted(gazetteer), seed=derive_seed(args.seed, "infill")),
                              generator=generator, types=types, max_len=args.max_len)
    out = []
    base = derive_seed(args.seed, "negatives")
    for k, ref in enumerate(refs):
        out.extend(factory.for_reference(ref, by_id[ref.dialogue_id], seed=base + k))
    save_summaries(out, args.out)
    log.info("accepted per type: %s", json.dumps(factory.accepted, sort_keys=True))
    return 0


def cmd_fakerefs(args) -> int:
    dialogues = load_dialogues(args.dialogues)
    prompts = read_prompt_templates(args.prompts) if args.prompts else list(DEFAULT_PROMPTS)
    if args.backend == "tiny":
        generator = _tiny_model(args, _corpus_texts(dialogues, extra=[p.text for p in prompts]))
    else:
        generator = TurnGenerator([p.id for p in prompts])
    sampling = SamplingConfig(strategy="greedy", seed=derive_seed(args.seed, "fakerefs"), max_len=args.max_len)
    out, chosen = [], {}
    for d in dialogues:
        ref = generate_pseudo_reference(d, generator, prompts, sampling)
        out.append(ref.to_summary(d.id))
        chosen[ref.chosen_prompt] = chosen.get(ref.chosen_prompt, 0) + 1
    save_summaries(out, args.out)
    log.info("chosen prompts: %s", json.dumps(chosen, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    dialogues = load_dialogues(args.dialogues)
    summaries = load_summaries(args.summaries)
    check_references(summaries, dialogues)
    sources = {d.id: render_dialogue(d) for d in dialogues}
    model = _tiny_model(args, _corpus_texts(dialogues, summaries))
    items = [TrainItem.build(sources[s.dialogue_id], s.text, s.label, s.negative_indices) for s in summaries]
    train_cfg = TrainConfig(args.learning_rate, args.batch_size, args.steps, seed=derive_seed(args.seed, "train"),
                            negative_fraction=args.negative_fraction, grad_clip=args.grad_clip)
    model, trace = train(model, items, LossConfig(args.alpha), train_cfg)
    model.save(args.out)
    if args.trace:
        Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
        with open(args.trace, "w", encoding="utf-8") as fh:
            for step, loss in enumerate(trace):
                fh.write(json.dumps({"step": step, "loss": round(loss, 10)}) + "\n")
    log.info("loss %.4f -> %.4f over %d steps", trace[0], trace[-1], len(trace))
    return 0


def cmd_metaeval(args) -> int:
    scores = load_scores(args.scores)
    judgments = load_judgments(args.judgments)
    systems = None
    if args.summaries:
        systems = {s.id: s.system for s in load_summaries(args.summaries)}
    if args.grouping == "per_system_mean" and systems is None:
        raise UsageError("--grouping per_system_mean needs --summaries")
    metrics = [args.metric] if args.metric else sorted({s.metric for s in scores})
    reports = [evaluate_metric(scores, judgments, args.grouping, systems, m, args.bootstrap, args.ci_level,
                               derive_seed(args.seed, "bootstrap", m)) for m in metrics]
    write_report_tsv(reports, args.out)
    if args.json:
        write_report_json(reports, args.json)
    if args.plot:
        plot_dir = Path(args.plot)
        plot_dir.mkdir(parents=True, exist_ok=True)
        for m in metrics:
            _, series = join_scores(scores, judgments, m)
            scatter_plot(series, m, plot_dir / f"{m}.png")
    for r in reports:
        log.info("%s %s rho=%.4f n=%d", r.metric, r.grouping, r.rho, r.n)
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_mapping({f.name: getattr(args, f.name) for f in fields(ExperimentConfig)})
    result = run_experiment(cfg)
    paths = write_outputs(result, args.out)
    for cond in ("untrained", "mle", "unlikelihood"):
        log.info("%-12s mean rho %.4f  pairwise %.3f", cond, result.mean(cond), result.mean(cond, "pairwise_acc"))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return 0


# -- parser -----------------------------------------------------------------

def _common(p, backend=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    if backend:
        p.add_argument("--backend", default="stub", choices=BACKENDS)
        p.add_argument("--model", help="tiny-model checkpoint (.npz); default is a fresh seeded model")
        p.add_argument("--dim", type=int, default=16)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="faithkit", description="Faithfulness metrics, negatives and unlikelihood training.")
    parser.add_argument("--version", action="version", version=f"faithkit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("score", help="score summaries with one metric")
    _common(p)
    p.add_argument("--metric", required=True, choices=METRICS)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reference", default="auto", choices=("auto", "source"),
                   help="reference for rouge/bertscore: the dialogue's reference summary, else the source")
    p.add_argument("--prompt", help="prompt template for bartscore/t0score (must contain {source})")
    p.add_argument("--aggregation", default="mean", choices=("mean", "sum"))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("negatives", help="generate swapent/maskent/hallu negatives for reference summaries")
    _common(p)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--types", default=",".join(NEG_TYPES))
    p.add_argument("--gazetteer", help="TSV of surface<TAB>entity type; default is the synthetic gazetteer")
    p.add_argument("--max-len", type=int, default=32)
    p.set_defaults(func=cmd_negatives)

    p = sub.add_parser("fakerefs", help="pseudo-references from prompted generation")
    _common(p)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prompts", help="prompt file, one 'name = template' per line")
    p.add_argument("--max-len", type=int, default=32)
    p.set_defaults(func=cmd_fakerefs)

    p = sub.add_parser("train", help="train the tiny model with MLE (+ unlikelihood on negatives)")
    _common(p)
    p.add_argument("--dialogues", required=True)
    p.add_argument("--summaries", required=True, help="positives and negatives with negative_indices")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--trace", help="per-step loss records (jsonl)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--steps", type=int, default=TrainConfig.steps)
    p.add_argument("--negative-fraction", type=float, default=None)
    p.add_argument("--grad-clip", type=float, default=TrainConfig.grad_clip)
    p.set_defaults(func=cmd_train, backend="tiny")

    p = sub.add_parser("metaeval", help="Spearman correlation of metric scores with human judgments")
    _common(p, backend=False)
    p.add_argument("--scores", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--out", required=True, help="report TSV")
    p.add_argument("--summaries", help="needed for per_system_mean grouping")
    p.add_argument("--metric", help="default: every metric in the scores file")
    p.add_argument("--grouping", default="pooled", choices=GROUPINGS)
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for a CI (0 = none)")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--json", help="also write the report as JSON")
    p.add_argument("--plot", help="directory for per-metric scatter plots")
    p.set_defaults(func=cmd_metaeval)

    p = sub.add_parser("experiment", help="synthetic untrained / MLE / unlikelihood comparison")
    _common(p, backend=False)
    p.add_argument("--out", required=True, help="output directory")
    for f in fields(ExperimentConfig):
        if f.name == "seed":
            continue
        typ = {"int": int, "float": float, "str": str}[f.type]
        p.add_argument("--" + f.name.replace("_", "-"), type=typ, default=f.default)
    p.set_defaults(func=cmd_experiment)
    return parser


def _apply_config(parser, argv):
    """Re-parse with ``--config`` values installed as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = {k.replace("-", "_"): v for k, v in read_config(args.config).items()}
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in sub._actions}
    unknown = sorted(k for k in cfg if k not in dests or k in ("config", "func", "help"))
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    defaults = {}
    for k, v in cfg.items():
        action = dests[k]
        if action.type is not None:
            try:
                v = action.type(v)
            except ValueError as exc:
                raise UsageError(f"config key {k}: {exc}") from None
        if action.choices is not None and v not in action.choices:
            raise UsageError(f"config key {k}: {v!r} not in {sorted(action.choices)}")
        defaults[k] = v
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(sorted(
                parser._subparsers._group_actions[0].choices)))
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FaithkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True, default=str))
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FaithkitError, ValueError, KeyError, OSError) as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
