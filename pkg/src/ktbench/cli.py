"""Command-line entry point.

Subcommands: ingest, filter, split, export-prompts, train, evaluate, run,
replay-capture. Exit codes: 0 success, 1 config error, 2 data error, 3 at
least one model row failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bkt, logreg
from .dataset import (
    ColumnMap,
    SplitSpec,
    apply_split,
    filter_degenerate_students,
    load_interactions,
    read_split_file,
    write_interactions,
)
from .errors import ConfigError, DataError, KtbenchError, ModelError
from .harness import (
    ExperimentConfig,
    ModelSpec,
    emit_table,
    has_model_errors,
    run_experiment,
)
from .llm import RecordingBackend, export_finetune_corpus
from .llm.backends import save_replay_records
from .neural import load_dkt, load_sakt, save_dkt, save_sakt
from .neural.dkt import DktConfig, fit_dkt
from .neural.sakt import SaktConfig, fit_sakt

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_MODEL = 3


def _columns_from_args(args) -> ColumnMap:
    kwargs = {}
    if args.columns:
        try:
            kwargs = json.loads(args.columns)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--columns is not valid JSON: {exc}") from exc
    try:
        return ColumnMap(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad column mapping: {exc}") from exc


def _load(args):
    return load_interactions(args.dataset, _columns_from_args(args))


def cmd_ingest(args) -> int:
    ds = _load(args)
    print(f"name={ds.name}")
    print(f"users={len(ds.sequences)}")
    print(f"records={ds.n_records}")
    print(f"items={len(ds.item_vocab)}")
    print(f"skills={len(ds.skill_vocab)}")
    return EXIT_OK


def cmd_filter(args) -> int:
    ds = _load(args)
    filtered, report = filter_degenerate_students(ds)
    for line in report.log_lines():
        print(line)
    if args.out:
        write_interactions(filtered, args.out)
        print(f"wrote {filtered.n_records} records to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = _load(args)
    filtered, _ = filter_degenerate_students(ds)
    spec = SplitSpec.seeded(args.train_fraction, args.seed)
    train, test = apply_split(filtered, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train_users.txt").write_text("\n".join(train.user_ids()) + "\n", encoding="utf-8")
    (out / "test_users.txt").write_text("\n".join(test.user_ids()) + "\n", encoding="utf-8")
    print(f"train_users={len(train.sequences)}")
    print(f"test_users={len(test.sequences)}")
    return EXIT_OK


def _maybe_split_train(args, ds):
    if args.train_users:
        spec = SplitSpec.external(read_split_file(args.train_users), read_split_file(args.test_users))
        train, _ = apply_split(ds, spec)
        return train
    return ds


def cmd_export_prompts(args) -> int:
    ds = _load(args)
    filtered, _ = filter_degenerate_students(ds)
    part = _maybe_split_train(args, filtered)
    count = export_finetune_corpus(part, args.template, args.out)
    print(f"examples={count}")
    print(f"corpus={args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load(args)
    filtered, _ = filter_degenerate_students(ds)
    train = _maybe_split_train(args, filtered)
    if args.model == "bkt":
        model = bkt.fit_bkt(train, bkt.EmConfig(seed=args.seed))
        bkt.save_bkt(model, args.out)
    elif args.model == "best-lr":
        model = logreg.fit_best_lr(train, logreg.LrConfig(seed=args.seed))
        logreg.save_lr(model, args.out)
    elif args.model == "dkt":
        save_dkt(fit_dkt(train, DktConfig(seed=args.seed)), args.out)
    elif args.model == "sakt":
        save_sakt(fit_sakt(train, SaktConfig(seed=args.seed)), args.out)
    else:
        raise ConfigError(f"--model must be bkt, best-lr, dkt, or sakt, not {args.model!r}")
    print(f"model={args.model}")
    print(f"saved={args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .harness import evaluate_predictor

    ds = _load(args)
    filtered, _ = filter_degenerate_students(ds)
    spec = SplitSpec.external(read_split_file(args.train_users), read_split_file(args.test_users))
    _, test = apply_split(filtered, spec)

    class _Wrapped:
        def __init__(self, fn):
            self.fn = fn

        def predict_sequence(self, seq):
            return self.fn(seq)

    if args.model == "bkt":
        model = bkt.load_bkt(args.model_file)
        predictor = _Wrapped(lambda seq: bkt.bkt_predict_sequence(model, seq))
    elif args.model == "best-lr":
        model = logreg.load_lr(args.model_file)
        predictor = _Wrapped(lambda seq: logreg.lr_predict_sequence(model, seq))
    elif args.model == "dkt":
        from .neural import dkt_predict_sequence

        model = load_dkt(args.model_file)
        predictor = _Wrapped(lambda seq: dkt_predict_sequence(model, seq))
    elif args.model == "sakt":
        from .neural import sakt_predict_sequence

        model = load_sakt(args.model_file)
        predictor = _Wrapped(lambda seq: sakt_predict_sequence(model, seq))
    else:
        raise ConfigError(f"--model must be bkt, best-lr, dkt, or sakt, not {args.model!r}")

    report = evaluate_predictor(predictor, test)
    print(report.to_json())
    return EXIT_OK


def _overridden_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config)
    if args.dataset:
        cfg = _replace(cfg, dataset_path=args.dataset)
    if args.models:
        families = [m.strip() for m in args.models.split(",") if m.strip()]
        cfg = _replace(cfg, models=tuple(ModelSpec(family=f) for f in families))
    if args.seed is not None:
        cfg = _replace(cfg, seed=args.seed)
    if args.out:
        cfg = _replace(cfg, out_dir=args.out)
    if args.backend:
        from .harness import BackendSpec

        cfg = _replace(cfg, backend=BackendSpec(kind=args.backend, options=cfg.backend.options))
    return cfg


def _replace(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    import dataclasses

    return dataclasses.replace(cfg, **kwargs)


def cmd_run(args) -> int:
    cfg = _overridden_config(args)
    table = run_experiment(cfg)
    print(emit_table(table, "markdown"))
    if cfg.out_dir:
        print(f"outputs written to {cfg.out_dir}")
    return EXIT_MODEL if has_model_errors(table) else EXIT_OK


def cmd_replay_capture(args) -> int:
    cfg = _overridden_config(args)
    recorders: list[RecordingBackend] = []

    def wrap(backend):
        recorder = RecordingBackend(backend)
        recorders.append(recorder)
        return recorder

    table = run_experiment(cfg, backend_wrapper=wrap)
    records = [rec for r in recorders for rec in r.records]
    save_replay_records(records, args.replay_out)
    print(emit_table(table, "markdown"))
    print(f"captured {len(records)} responses to {args.replay_out}")
    return EXIT_MODEL if has_model_errors(table) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ktbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_args(p):
        p.add_argument("--dataset", required=True, help="interaction log path")
        p.add_argument("--columns", help="JSON column mapping overrides")

    p = sub.add_parser("ingest", help="load a log and print its dimensions")
    add_dataset_args(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("filter", help="drop degenerate students, report the rate")
    add_dataset_args(p)
    p.add_argument("--out", help="write the filtered log here")
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("split", help="write seeded train/test user lists")
    add_dataset_args(p)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for the user lists")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("export-prompts", help="write a fine-tune corpus")
    add_dataset_args(p)
    p.add_argument("--template", choices=("minimal", "extended"), default="minimal")
    p.add_argument("--train-users", help="optional split file; export train half only")
    p.add_argument("--test-users", help="paired test split file")
    p.add_argument("--out", required=True, help="corpus path (.jsonl)")
    p.set_defaults(fn=cmd_export_prompts)

    p = sub.add_parser("train", help="fit one serializable model")
    add_dataset_args(p)
    p.add_argument("--model", required=True, choices=("bkt", "best-lr", "dkt", "sakt"))
    p.add_argument("--train-users")
    p.add_argument("--test-users")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a test split")
    add_dataset_args(p)
    p.add_argument("--model", required=True, choices=("bkt", "best-lr", "dkt", "sakt"))
    p.add_argument("--model-file", required=True)
    p.add_argument("--train-users", required=True)
    p.add_argument("--test-users", required=True)
    p.set_defaults(fn=cmd_evaluate)

    def add_run_args(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--dataset", help="override the dataset path")
        p.add_argument("--models", help="override: comma-separated families")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--backend", choices=("mock", "replay", "http"))

    p = sub.add_parser("run", help="end-to-end experiment from a config file")
    add_run_args(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("replay-capture", help="run and record LLM responses for replay")
    add_run_args(p)
    p.add_argument("--replay-out", required=True, help="replay file to write")
    p.set_defaults(fn=cmd_replay_capture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, KtbenchError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
