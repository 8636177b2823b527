"""Batch command line: convert, train, tag, eval, gradcheck.

Flag resolution order is CLI flag, then JSON config file (--config, same
field names as RunConfig), then built-in default. Required-flag validation
runs before any file is opened. All outputs go through write-to-temp plus
rename, and identical inputs with the same seed produce byte-identical
output files (training reports therefore carry no wall-clock timings).
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass

from .baseline import BaselineProblem, BaselineTrainOptions, tag_baseline, train_baseline
from .checks import SUITE_TOLERANCE, format_suite, gradient_suite
from .corpus import filter_orphans, from_tags, read_cupt, to_tags, write_cupt
from .embed import load_vec_file, sniff_vec_dim
from .errors import DataError, UsageError
from .evaluation import evaluate, format_report, report_to_dict, seen_unseen
from .serialize import atomic_write_text, load_model, save_model
from .tagger import (
    TaggerConfig,
    TaggerModel,
    build_for_corpus,
    predict_corpus,
    train as train_tagger,
)

VARIANTS = ("neural", "baseline-standard", "baseline-turian")
DEFAULTS = {
    "head": "crf",
    "filter": True,
    "seed": 1,
    "variant": "neural",
}


@dataclass(frozen=True)
class RunConfig:
    """One resolved invocation. Field names double as the JSON config-file
    vocabulary."""

    subcommand: str
    input: str | None = None
    output: str | None = None
    train: str | None = None
    dev: str | None = None
    gold: str | None = None
    pred: str | None = None
    model: str | None = None
    embeddings: str | None = None
    head: str = "crf"
    filter: bool = True
    seed: int = 1
    epochs: int | None = None
    batch_size: int | None = None
    variant: str = "neural"
    report: str | None = None

    def require(self, *fields: str):
        missing = [f for f in fields if getattr(self, f) is None]
        if missing:
            flags = ", ".join("--" + f.replace("_", "-") for f in missing)
            raise UsageError(f"{self.subcommand} requires {flags}")

    def validate(self):
        if self.subcommand == "convert":
            self.require("input", "output")
        elif self.subcommand == "train":
            self.require("train", "model")
            if self.variant != "baseline-standard":
                self.require("embeddings")
        elif self.subcommand == "tag":
            self.require("model", "input", "output")
        elif self.subcommand == "eval":
            self.require("gold", "pred", "report")
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown variant {self.variant!r}")
        if self.head not in ("softmax", "crf"):
            raise UsageError(f"unknown head {self.head!r}")
        if self.epochs is not None and self.epochs < 1:
            raise UsageError("epochs must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise UsageError("batch size must be positive")


_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)} - {"subcommand"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mwetag",
        description="Multiword-expression tagging: corpus conversion, "
        "training, tagging, evaluation, gradient checks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of RunConfig fields used "
                       "as defaults for flags not given on the command line")

    p = sub.add_parser("convert", help="cupt to one label per line")
    common(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--filter", action="store_true", default=None,
                   help="drop orphan continuations before writing")

    p = sub.add_parser("train", help="fit a model and write it to disk")
    common(p)
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--embeddings")
    p.add_argument("--model")
    p.add_argument("--head", choices=["softmax", "crf"])
    p.add_argument("--variant", choices=list(VARIANTS))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--report", help="where to write the training report "
                   "(default: MODEL.train.json)")

    p = sub.add_parser("tag", help="annotate a corpus with a trained model")
    common(p)
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--embeddings")
    p.add_argument("--no-filter", action="store_false", dest="filter",
                   default=None, help="keep orphan continuations as "
                   "single-token expressions")

    p = sub.add_parser("eval", help="score predictions against gold")
    common(p)
    p.add_argument("--gold")
    p.add_argument("--pred")
    p.add_argument("--train", help="training corpus enabling the "
                   "seen/unseen split")
    p.add_argument("--report")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    common(p)
    p.add_argument("--seed", type=int)
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise UsageError(
            f"config file {path}: unknown fields {sorted(unknown)}"
        )
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    """CLI flag, else config-file value, else built-in default."""
    overrides = _load_config_file(args.config) if getattr(args, "config", None) else {}
    values = {"subcommand": args.subcommand}
    for name in _FIELD_NAMES:
        given = getattr(args, name, None)
        if given is not None:
            values[name] = given
        elif name in overrides:
            values[name] = overrides[name]
        elif name in DEFAULTS:
            values[name] = DEFAULTS[name]
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    config.validate()
    return config


# ---------------------------------------------------------------------------
# subcommand bodies


def _read_corpus(path: str):
    return read_cupt(path)


def _load_table(path: str):
    return load_vec_file(path, sniff_vec_dim(path))


def _cmd_convert(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg.input)
    blocks = []
    for sentence in corpus:
        tags = to_tags(sentence)
        if cfg.filter:
            tags = filter_orphans(tags)
        blocks.append("\n".join(tags) + "\n\n")
    atomic_write_text(cfg.output, "".join(blocks))
    return 0


def _train_report_tagger(report) -> dict:
    # wall-clock timings stay out of the file so identical runs match bytewise
    return {
        "losses": report.losses,
        "dev_token_accuracy": report.dev_token_accuracy,
        "dev_mwe_f1": report.dev_mwe_f1,
        "selected_epoch": report.selected_epoch,
    }


def _dump_json(path: str, payload: dict):
    atomic_write_text(
        path, json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    )


def _cmd_train(cfg: RunConfig) -> int:
    train_corpus = _read_corpus(cfg.train)
    report_path = cfg.report or cfg.model + ".train.json"
    if cfg.variant == "neural":
        table = _load_table(cfg.embeddings)
        dev_corpus = _read_corpus(cfg.dev) if cfg.dev else None
        tagger_config = TaggerConfig(
            head=cfg.head,
            seed=cfg.seed,
            epochs=cfg.epochs if cfg.epochs is not None else TaggerConfig().epochs,
            batch_size=cfg.batch_size
            if cfg.batch_size is not None
            else TaggerConfig().batch_size,
        )
        model = build_for_corpus(tagger_config, train_corpus, embeddings=table)
        best, report = train_tagger(model, train_corpus, dev_corpus)
        save_model(best, cfg.model)
        _dump_json(report_path, _train_report_tagger(report))
        return 0

    variant = cfg.variant.removeprefix("baseline-")
    table = _load_table(cfg.embeddings) if variant == "turian" else None
    options = BaselineTrainOptions(
        max_iterations=cfg.epochs
        if cfg.epochs is not None
        else BaselineTrainOptions().max_iterations,
        seed=cfg.seed,
    )
    model = train_baseline(train_corpus, variant=variant, table=table,
                           options=options)
    problem = BaselineProblem(train_corpus, variant, model.sigma, table,
                              tag_vocab=model.tag_vocab)
    objective, grad = problem.loss_and_grad(problem.pack_model(model))
    save_model(model, cfg.model)
    _dump_json(report_path, {
        "variant": cfg.variant,
        "final_objective": objective,
        "grad_max_norm": float(abs(grad).max()),
        "feature_count": len(model.feature_index),
    })
    return 0


def _cmd_tag(cfg: RunConfig) -> int:
    table = _load_table(cfg.embeddings) if cfg.embeddings else None
    model = load_model(cfg.model, embeddings=table)
    corpus = _read_corpus(cfg.input)
    if isinstance(model, TaggerModel):
        if model.config.embedding_mode == "pretrained" and table is None:
            raise DataError(
                "this model looks words up in a pretrained table; "
                "pass --embeddings with the vectors used for training"
            )
        predicted = predict_corpus(model, corpus, apply_filter=cfg.filter)
    else:
        if model.variant == "turian" and table is None:
            raise DataError(
                "turian baseline needs --embeddings at tagging time"
            )
        predicted = []
        for sentence in corpus:
            tags = tag_baseline(model, sentence, table=table)
            predicted.append(from_tags(tags, sentence, apply_filter=cfg.filter))
    atomic_write_text(cfg.output, write_cupt(predicted))
    return 0


def _cmd_eval(cfg: RunConfig) -> int:
    gold = _read_corpus(cfg.gold)
    pred = _read_corpus(cfg.pred)
    report = evaluate(gold, pred)
    payload = {"overall": report_to_dict(report)}
    print(format_report(report, "overall"))
    if cfg.train:
        train_corpus = _read_corpus(cfg.train)
        partition, seen_report, unseen_report = seen_unseen(train_corpus, gold, pred)
        payload["seen_fraction"] = partition.seen_fraction
        payload["seen"] = report_to_dict(seen_report)
        payload["unseen"] = report_to_dict(unseen_report)
        print()
        print(format_report(seen_report, "seen"))
        print()
        print(format_report(unseen_report, "unseen"))
    _dump_json(cfg.report, payload)
    return 0


def _cmd_gradcheck(cfg: RunConfig) -> int:
    results = gradient_suite(seed=cfg.seed)
    print(format_suite(results))
    if all(err < SUITE_TOLERANCE for err in results.values()):
        return 0
    print("error: gradient check exceeded tolerance", file=sys.stderr)
    return 2


_COMMANDS = {
    "convert": _cmd_convert,
    "train": _cmd_train,
    "tag": _cmd_tag,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = resolve(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[cfg.subcommand](cfg)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
