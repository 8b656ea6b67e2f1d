"""Command-line pipeline.

Subcommands read and write fixed paths under ``--workdir``::

    synth            data/{train,val,test}.jsonl, raw/{posts,labels}.csv
    ingest           data/<out>.jsonl from a posts + labels CSV pair
    train-tokenizer  model/vocab.json
    train            model/checkpoint.json, model/history.csv
    attribute        attr/attributions.csv, attr/meta.json
    build-lexicon    lexicon/lexicon.jsonl, lexicon/tfidf.json
    score            predictions/<dataset>.csv
    eval             report/report.csv, report/report.txt
    report           report/report.html

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus
from .attribution import (
    EncoderClassifier,
    IgConfig,
    TokenizedDocument,
    attribute_corpus,
    read_attributions,
    write_attributions,
)
from .evaluation import EvalDocument, evaluate_protocol, report_csv, report_text
from .lexicon import GROUPINGS, Lexicon, LexiconError, aggregate_records
from .model import load_checkpoint, save_checkpoint
from .report import ProvenanceError, render_report
from .scorer import SCHEMES, LexiconScorer, TfidfModel, classify, fit_tfidf, write_predictions
from .tokenizer import BpeVocab, encode, train_bpe
from .training import TrainConfig, config_dict, train

logger = logging.getLogger("attrlex")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Workdir:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, *parts: str, make: bool = False) -> Path:
        p = self.root.joinpath(*parts)
        if make:
            p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def require(self, *parts: str, what: str | None = None) -> Path:
        p = self.path(*parts)
        if not p.exists():
            raise corpus.DataError(f"missing {what or p.name} ({p}); run the producing step first")
        return p

    def dataset(self, name: str) -> list[corpus.LabeledDocument]:
        return corpus.read_documents(self.require("data", f"{name}.jsonl", what=f"dataset {name!r}"))

    def vocab(self) -> BpeVocab:
        return BpeVocab.load(self.require("model", "vocab.json", what="tokenizer"))


def _numeric(label: corpus.RiskLabel) -> int | None:
    return None if label is corpus.RiskLabel.NONE else label.numeric()


def _file_id(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, wd: Workdir) -> None:
    ratios = [float(x) for x in args.split.split(",")]
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) <= 0:
        raise UsageError("--split needs three non-negative ratios, e.g. 8,1,1")
    spec = corpus.SynthSpec(
        docs_per_class=args.docs_per_class,
        n_classes=args.classes,
        signal_rate=args.signal_rate,
        shared_fraction=args.shared_fraction,
        split_fractions=tuple(r / sum(ratios) for r in ratios),
        users_per_class=args.users_per_class,
        control_users=args.control_users,
    )
    train_docs, val_docs, test_docs = corpus.generate_synthetic_corpus(spec, args.seed)
    for name, docs in (("train", train_docs), ("val", val_docs), ("test", test_docs)):
        corpus.write_documents(wd.path("data", f"{name}.jsonl", make=True), docs)
    posts, labels = corpus.generate_synthetic_posts(spec, args.seed + 1)
    corpus.write_posts(wd.path("raw", "posts.csv", make=True), posts)
    corpus.write_labels(wd.path("raw", "labels.csv"), labels)
    logger.info("synth: %d/%d/%d documents, %d raw posts", len(train_docs), len(val_docs), len(test_docs), len(posts))


def cmd_ingest(args, wd: Workdir) -> None:
    posts = Path(args.posts) if args.posts else wd.require("raw", "posts.csv", what="posts CSV")
    labels = Path(args.labels) if args.labels else wd.require("raw", "labels.csv", what="labels CSV")
    for p in (posts, labels):
        if not p.exists():
            raise corpus.DataError(f"missing input {p}")
    joined = corpus.load_and_join(posts, labels)
    if args.mode == "longitudinal":
        docs = corpus.build_longitudinal_dataset(joined, include_control=args.include_control, split=args.split)
    else:
        docs = corpus.build_post_dataset(joined, args.subreddit, include_control=args.include_control, split=args.split)
    out = args.out or args.mode
    corpus.write_documents(wd.path("data", f"{out}.jsonl", make=True), docs)
    logger.info("ingest: %d %s documents -> data/%s.jsonl", len(docs), args.mode, out)


def cmd_train_tokenizer(args, wd: Workdir) -> None:
    docs = wd.dataset("train")
    vocab = train_bpe([d.text for d in docs], args.vocab_size)
    wd.path("model", "vocab.json", make=True)
    vocab.save(wd.path("model", "vocab.json"))
    logger.info("tokenizer: %d tokens", vocab.size)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
        checkpoint_every=args.checkpoint_every,
        seed=args.seed,
        window=args.window,
        stride=args.stride,
        d_model=args.d_model,
        d_hidden=args.d_hidden,
        aggregation=args.aggregation,
    )


def _labeled_ids(vocab, docs):
    docs = [d for d in docs if d.label is not corpus.RiskLabel.NONE]
    seqs = [encode(vocab, d.text).ids for d in docs]
    return seqs, [d.label.numeric() for d in docs]


def cmd_train(args, wd: Workdir) -> None:
    vocab = wd.vocab()
    config = _train_config(args)
    tr_seqs, tr_labels = _labeled_ids(vocab, wd.dataset("train"))
    va_seqs, va_labels = _labeled_ids(vocab, wd.dataset("val"))
    result = train(tr_seqs, tr_labels, va_seqs, va_labels, vocab.n_ids, vocab.pad_id, config)
    meta = {
        "seed": config.seed,
        "train_config": config_dict(config),
        "vocab_id": _file_id(wd.path("model", "vocab.json")),
        "best_step": result.best_step,
        "val_accuracy": result.best_val_accuracy,
    }
    save_checkpoint(wd.path("model", "checkpoint.json", make=True), result.params, meta)
    lines = ["step,val_accuracy"] + [f"{s},{a!r}" for s, a in result.history]
    _write_text(wd.path("model", "history.csv"), "\n".join(lines) + "\n")
    logger.info("train: best step %d, val accuracy %.4f", result.best_step, result.best_val_accuracy)


def _load_model(wd: Workdir):
    path = wd.require("model", "checkpoint.json", what="model checkpoint")
    params, meta = load_checkpoint(path)
    return params, meta, _file_id(path)


def _ig_config(args) -> IgConfig:
    return IgConfig(steps=args.steps, baseline=args.baseline, target_rule=args.target, rule=args.quadrature)


def cmd_attribute(args, wd: Workdir) -> None:
    vocab = wd.vocab()
    params, meta, ckpt_id = _load_model(wd)
    tc = meta.get("train_config", {})
    window, stride = tc.get("window", args.window), tc.get("stride", args.stride)
    ig = _ig_config(args)
    docs = [
        TokenizedDocument(d.doc_id, encode(vocab, d.text).ids, _numeric(d.label)) for d in wd.dataset(args.dataset)
    ]
    model = EncoderClassifier(params, vocab.pad_id)
    records = attribute_corpus(model, docs, ig, window, stride, workers=args.workers)
    n = write_attributions(wd.path("attr", "attributions.csv", make=True), records)
    provenance = {
        "checkpoint": ckpt_id,
        "dataset": args.dataset,
        "ig": {"steps": ig.steps, "baseline": ig.baseline, "target_rule": ig.target_rule, "output": ig.output, "rule": ig.rule},
        "n_labels": int(params.wc.shape[1]),
    }
    _write_text(wd.path("attr", "meta.json"), json.dumps(provenance, sort_keys=True, indent=1) + "\n")
    logger.info("attribute: %d records from %d documents", n, len(docs))


def _attr_meta(wd: Workdir) -> dict:
    return json.loads(wd.require("attr", "meta.json", what="attribution metadata").read_text(encoding="utf-8"))


def cmd_build_lexicon(args, wd: Workdir) -> None:
    meta = _attr_meta(wd)
    dump = wd.require("attr", "attributions.csv", what="attribution dump")
    lex = aggregate_records(read_attributions(dump), meta["n_labels"], args.grouping, meta)
    lex.save(wd.path("lexicon", "lexicon.jsonl", make=True))
    vocab = wd.vocab()
    tfidf = fit_tfidf(encode(vocab, d.text).ids for d in wd.dataset("train"))
    _write_text(wd.path("lexicon", "tfidf.json"), json.dumps(tfidf.to_json(), separators=(",", ":")) + "\n")
    logger.info("build-lexicon: %d tokens, %d samples", len(lex), lex.total_count)


def _load_lexicon(wd: Workdir) -> tuple[Lexicon, TfidfModel]:
    lex = Lexicon.load(wd.require("lexicon", "lexicon.jsonl", what="lexicon"))
    tfidf = TfidfModel.from_json(json.loads(wd.require("lexicon", "tfidf.json", what="tfidf model").read_text()))
    return lex, tfidf


def cmd_score(args, wd: Workdir) -> None:
    lex, tfidf = _load_lexicon(wd)
    vocab = wd.vocab()
    scorer = LexiconScorer(lex, vocab.n_ids, args.mode, tfidf)
    rows = []
    for d in wd.dataset(args.dataset):
        ids = encode(vocab, d.text).ids
        scores = scorer.score(ids, args.tfidf)
        rows.append((d.doc_id, _numeric(d.label), classify(scores), scores))
    write_predictions(wd.path("predictions", f"{args.dataset}.csv", make=True), rows, args.scheme, lex.n_labels)
    logger.info("score: %d documents", len(rows))


def cmd_eval(args, wd: Workdir) -> None:
    lex, tfidf = _load_lexicon(wd)
    vocab = wd.vocab()
    datasets = {}
    for name in args.datasets.split(","):
        path = wd.path("data", f"{name}.jsonl")
        if not path.exists():
            if name == args.datasets.split(",")[0]:
                raise corpus.DataError(f"missing dataset {name!r} ({path})")
            logger.warning("eval: dataset %s not found, skipped", name)
            continue
        datasets[name] = [
            EvalDocument(d.doc_id, encode(vocab, d.text).ids, _numeric(d.label)) for d in corpus.read_documents(path)
        ]
    rows = evaluate_protocol(lex, tfidf, datasets, vocab.n_ids, SCHEMES, timing_runs=5 if args.timing else 0)
    _write_text(wd.path("report", "report.csv"), report_csv(rows))
    _write_text(wd.path("report", "report.txt"), report_text(rows))
    logger.info("eval: %d rows", len(rows))


def cmd_report(args, wd: Workdir) -> None:
    lex, _ = _load_lexicon(wd)
    meta = _attr_meta(wd)
    vocab = wd.vocab()
    records = list(read_attributions(wd.require("attr", "attributions.csv", what="attribution dump")))
    docs = wd.dataset(meta["dataset"])
    wanted = sorted({r.doc_id for r in records})[: args.max_docs]
    texts = {d.doc_id: d.text for d in docs if d.doc_id in set(wanted)}
    offsets = {k: encode(vocab, t).offsets for k, t in texts.items()}
    html = render_report(records, lex, texts, vocab, offsets, meta, top_k=args.top_k, bins=args.bins, max_docs=args.max_docs)
    _write_text(wd.path("report", "report.html"), html)
    logger.info("report: %d documents, top %d tokens", len(texts), args.top_k)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--workdir", default="work")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value file whose keys are long flag names")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="attrlex", description="Attribution-lexicon screening pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--docs-per-class", type=int, default=500)
    p.add_argument("--signal-rate", type=float, default=0.5)
    p.add_argument("--shared-fraction", type=float, default=0.5)
    p.add_argument("--split", default="8,1,1", help="train,val,test ratios")
    p.add_argument("--users-per-class", type=int, default=20)
    p.add_argument("--control-users", type=int, default=20)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="join posts and labels CSVs into a dataset")
    p.add_argument("--posts")
    p.add_argument("--labels")
    p.add_argument("--mode", choices=["post", "longitudinal"], default="longitudinal")
    p.add_argument("--subreddit", default=None)
    p.add_argument("--include-control", action="store_true")
    p.add_argument("--split", default="test", choices=corpus.SPLITS)
    p.add_argument("--out", default=None, help="dataset name (default: the mode)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-tokenizer", parents=[common], help="train the BPE tokenizer")
    p.add_argument("--vocab-size", type=int, default=2000)
    p.set_defaults(func=cmd_train_tokenizer)

    p = sub.add_parser("train", parents=[common], help="train the classifier")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--checkpoint-every", type=int, default=10)
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--stride", type=int, default=256)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--d-hidden", type=int, default=128)
    p.add_argument("--aggregation", choices=["mean", "max"], default="mean")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attribute", parents=[common], help="integrated-gradients attributions")
    p.add_argument("--dataset", default="train")
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--baseline", choices=["pad", "zero"], default="pad")
    p.add_argument("--target", choices=["predicted", "ground-truth", "all-labels"], default="predicted")
    p.add_argument("--quadrature", choices=["midpoint", "right"], default="midpoint")
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--stride", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("build-lexicon", parents=[common], help="aggregate attributions into a lexicon")
    p.add_argument("--grouping", choices=GROUPINGS, default="ground-truth")
    p.set_defaults(func=cmd_build_lexicon)

    p = sub.add_parser("score", parents=[common], help="classify a dataset with the lexicon")
    p.add_argument("--dataset", default="test")
    p.add_argument("--mode", choices=["mean", "median"], default="mean")
    p.add_argument("--tfidf", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--scheme", choices=SCHEMES, default="four-class")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="run the evaluation protocol")
    p.add_argument("--datasets", default="test,longitudinal", help="comma-separated dataset names")
    p.add_argument("--timing", action="store_true", help="fill wall_ms (breaks byte-identical reruns)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="render the HTML report")
    p.add_argument("--top-k", type=int, default=8)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--max-docs", type=int, default=10)
    p.set_defaults(func=cmd_report)
    return parser


def read_config(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("_", "-")] = value
    return values


def _parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        if not Path(args.config).exists():
            raise UsageError(f"config file {args.config} not found")
        extra = []
        for key, value in read_config(args.config).items():
            flag = f"--{key}"
            # command-line flags win over the config file
            if any(a == flag or a.startswith(flag + "=") for a in argv):
                continue
            if value.lower() in ("true", "yes"):
                extra.append(flag)
            elif value.lower() in ("false", "no"):
                extra.append(f"--no-{key}")
            else:
                extra += [flag, value]
        args = parser.parse_args([argv[0]] + extra + argv[1:])
    return args


def run_command(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args, Workdir(args.workdir))
    except UsageError as exc:
        print(f"attrlex {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (corpus.DataError, LexiconError, ProvenanceError, ValueError, KeyError, OSError) as exc:
        print(f"attrlex {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
