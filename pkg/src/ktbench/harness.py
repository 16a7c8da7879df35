"""Experiment runner: ingest, filter, split, fit, predict, evaluate, report.

Every configured model is fit on the train half and then predicts each test
interaction strictly before its label is consumed. Failures are isolated per
model (a broken row never aborts the others) and runs are deterministic given
the seed and a mock or replay backend.
"""

from __future__ import annotations

import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import baselines, bkt, logreg
from .baselines import Prediction
from .dataset import (
    ColumnMap,
    Dataset,
    FilterReport,
    SplitSpec,
    apply_split,
    filter_degenerate_students,
    load_interactions,
    read_split_file,
)
from .errors import ConfigError, KtbenchError
from .features import iter_history_features
from .llm import (
    HttpBackend,
    HttpBackendConfig,
    LlmBackend,
    MockBackend,
    ReplayBackend,
    predict_llm_batch,
)
from .metrics import MetricReport, metric_report
from .neural import (
    DktConfig,
    SaktConfig,
    dkt_predict_sequence,
    fit_dkt,
    fit_sakt,
    sakt_predict_sequence,
)

TABLE_COLUMNS = ("AUC", "F1", "RMSE", "Acc", "Bal Acc", "Precision", "Recall")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict = field(default_factory=dict)
    label: str | None = None


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "mock"  # mock | replay | http
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    models: tuple[ModelSpec, ...]
    split: SplitSpec
    columns: ColumnMap = field(default_factory=ColumnMap)
    dataset_name: str | None = None
    backend: BackendSpec = field(default_factory=BackendSpec)
    seed: int = 0
    out_dir: str | None = None
    abort_on_model_error: bool = False

    @staticmethod
    def from_dict(d: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        base = Path(base_dir)

        def resolve(p: str) -> str:
            path = Path(p)
            return str(path if path.is_absolute() else base / path)

        try:
            ds = d["dataset"]
            split_d = d["split"]
            models_d = d["models"]
        except KeyError as exc:
            raise ConfigError(f"config missing section {exc}") from exc
        if not models_d:
            raise ConfigError("config lists no models")

        columns = ColumnMap(**ds.get("columns", {}))
        if split_d.get("mode") == "external":
            split = SplitSpec.external(
                read_split_file(resolve(split_d["train_file"])),
                read_split_file(resolve(split_d["test_file"])),
            )
        elif split_d.get("mode") == "seeded":
            split = SplitSpec.seeded(split_d["train_fraction"], split_d["seed"])
        else:
            raise ConfigError(f"unknown split mode {split_d.get('mode')!r}")

        backend_d = d.get("backend", {"kind": "mock"})
        options = {k: v for k, v in backend_d.items() if k != "kind"}
        if backend_d.get("kind") == "replay" and "path" in options:
            options["path"] = resolve(options["path"])
        backend = BackendSpec(kind=backend_d.get("kind", "mock"), options=options)

        models = tuple(
            ModelSpec(family=m["family"], params=m.get("params", {}), label=m.get("label"))
            for m in models_d
        )
        return ExperimentConfig(
            dataset_path=resolve(ds["path"]),
            dataset_name=ds.get("name"),
            columns=columns,
            split=split,
            models=models,
            backend=backend,
            seed=d.get("seed", 0),
            out_dir=resolve(d["out_dir"]) if d.get("out_dir") else None,
            abort_on_model_error=d.get("abort_on_model_error", False),
        )

    @staticmethod
    def from_json_file(path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return ExperimentConfig.from_dict(d, base_dir=path.parent)


def config_hash(cfg: ExperimentConfig) -> str:
    d = {
        "dataset_path": cfg.dataset_path,
        "dataset_name": cfg.dataset_name,
        "columns": vars(cfg.columns).copy(),
        "split": {
            "mode": cfg.split.mode,
            "train_user_ids": sorted(cfg.split.train_user_ids) if cfg.split.train_user_ids else None,
            "test_user_ids": sorted(cfg.split.test_user_ids) if cfg.split.test_user_ids else None,
            "train_fraction": cfg.split.train_fraction,
            "seed": cfg.split.seed,
        },
        "models": [
            {"family": m.family, "params": m.params, "label": m.label} for m in cfg.models
        ],
        "backend": {"kind": cfg.backend.kind, "options": cfg.backend.options},
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "abort_on_model_error": cfg.abort_on_model_error,
    }
    body = json.dumps(d, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def build_backend(spec: BackendSpec) -> LlmBackend:
    if spec.kind == "mock":
        return MockBackend(**spec.options)
    if spec.kind == "replay":
        if "path" not in spec.options:
            raise ConfigError("replay backend needs a 'path' option")
        return ReplayBackend(spec.options["path"])
    if spec.kind == "http":
        try:
            return HttpBackend(HttpBackendConfig(**spec.options))
        except TypeError as exc:
            raise ConfigError(f"bad http backend options: {exc}") from exc
    raise ConfigError(f"unknown backend kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# model adapters: fit on train, then predict sequence-by-sequence


class SequencePredictor:
    """Fitted model able to score one student sequence step by step.

    predict_sequence returns one entry per record; None marks a per-point
    failure (only the LLM pathway produces those).
    """

    def predict_sequence(self, seq) -> list[Prediction | None]:
        raise NotImplementedError


class _MeanPredictor(SequencePredictor):
    def __init__(self, train: Dataset):
        self.model = baselines.fit_mean(train)

    def predict_sequence(self, seq):
        constant = baselines.predict_mean(self.model)
        return [constant] * len(seq)


class _NapPredictor(SequencePredictor):
    def __init__(self, train: Dataset, per_skill: bool):
        self.fallback = baselines.fit_mean(train)
        self.per_skill = per_skill

    def predict_sequence(self, seq):
        fn = baselines.predict_nap_skills if self.per_skill else baselines.predict_nap
        return [fn(f, self.fallback) for f in iter_history_features(seq)]


class _BktPredictor(SequencePredictor):
    def __init__(self, train: Dataset, config: bkt.EmConfig):
        self.model = bkt.fit_bkt(train, config)

    def predict_sequence(self, seq):
        return bkt.bkt_predict_sequence(self.model, seq)


class _LrPredictor(SequencePredictor):
    def __init__(self, train: Dataset, config: logreg.LrConfig):
        self.model = logreg.fit_best_lr(train, config)

    def predict_sequence(self, seq):
        return logreg.lr_predict_sequence(self.model, seq)


class _DktPredictor(SequencePredictor):
    def __init__(self, train: Dataset, config: DktConfig):
        self.model = fit_dkt(train, config)

    def predict_sequence(self, seq):
        return dkt_predict_sequence(self.model, seq)


class _SaktPredictor(SequencePredictor):
    def __init__(self, train: Dataset, config: SaktConfig):
        self.model = fit_sakt(train, config)

    def predict_sequence(self, seq):
        return sakt_predict_sequence(self.model, seq)


class _LlmPredictor(SequencePredictor):
    def __init__(self, backend: LlmBackend, params: dict):
        self.backend = backend
        self.mode = params["mode"]
        self.template = params["template"]
        self.split_ids = params["split_ids"]
        self.max_retries = params["max_retries"]
        self.backoff_s = params["backoff_s"]
        self.max_in_flight = params["max_in_flight"]

    def predict_sequence(self, seq):
        preds, _ = predict_llm_batch(
            self.backend,
            self.mode,
            list(iter_history_features(seq)),
            template=self.template,
            split_ids=self.split_ids,
            max_retries=self.max_retries,
            backoff_s=self.backoff_s,
            max_in_flight=self.max_in_flight,
        )
        return preds


def _display(spec: ModelSpec) -> tuple[str, str]:
    """(family column, model column) as they appear in the results table."""
    if spec.label:
        custom = spec.label
    else:
        custom = None
    if spec.family == "mean":
        return ("Naive Baselines", custom or "Mean")
    if spec.family == "nap":
        return ("Naive Baselines", custom or "NaP")
    if spec.family == "nap-skills":
        return ("Naive Baselines", custom or "NaP Skills")
    if spec.family == "bkt":
        return ("Markov Model", custom or "BKT")
    if spec.family == "best-lr":
        return ("Logistic Regression", custom or "Best-LR")
    if spec.family == "dkt":
        return ("DL: RNN", custom or "DKT")
    if spec.family == "sakt":
        return ("DL: Transformer", custom or "SAKT")
    if spec.family == "llm":
        mode = spec.params.get("mode", "finetuned-completion")
        if mode == "zero-shot-chat":
            return ("LLM", custom or "0-Shot")
        template = spec.params.get("template", "minimal")
        return ("LLM", custom or ("FT Ext" if template == "extended" else "FT Min"))
    raise ConfigError(f"unknown model family {spec.family!r}")


def _pick(params: dict, allowed: dict) -> dict:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown model parameters: {sorted(unknown)}")
    return {**allowed, **params}


def build_predictor(
    spec: ModelSpec,
    train: Dataset,
    seed: int,
    backend_factory: Callable[[], LlmBackend],
) -> SequencePredictor:
    p = dict(spec.params)
    if spec.family == "mean":
        _pick(p, {})
        return _MeanPredictor(train)
    if spec.family == "nap":
        _pick(p, {})
        return _NapPredictor(train, per_skill=False)
    if spec.family == "nap-skills":
        _pick(p, {})
        return _NapPredictor(train, per_skill=True)
    if spec.family == "bkt":
        defaults = {
            "max_iters": 100, "tol": 1e-6, "restarts": 3,
            "seed": seed, "min_obs": 10, "time_budget_s": None,
        }
        return _BktPredictor(train, bkt.EmConfig(**_pick(p, defaults)))
    if spec.family == "best-lr":
        defaults = {
            "l2": 1e-4, "seed": seed, "full_batch_max_rows": 1_000_000,
            "max_iters": 500, "grad_tol": 1e-6, "minibatch_size": 512,
            "minibatch_epochs": 20, "minibatch_step": 0.1, "time_budget_s": None,
        }
        return _LrPredictor(train, logreg.LrConfig(**_pick(p, defaults)))
    if spec.family == "dkt":
        defaults = {
            "hidden_size": 100, "max_seq_len": 200, "epochs": 20, "batch_size": 32,
            "learning_rate": 1e-3, "seed": seed, "clip_norm": 5.0, "time_budget_s": None,
        }
        return _DktPredictor(train, DktConfig(**_pick(p, defaults)))
    if spec.family == "sakt":
        defaults = {
            "embed_dim": 64, "num_heads": 4, "window": 200, "epochs": 20, "batch_size": 32,
            "learning_rate": 1e-3, "seed": seed, "clip_norm": 5.0, "time_budget_s": None,
        }
        return _SaktPredictor(train, SaktConfig(**_pick(p, defaults)))
    if spec.family == "llm":
        defaults = {
            "mode": "finetuned-completion", "template": "minimal", "split_ids": True,
            "max_retries": 3, "backoff_s": 1.0, "max_in_flight": 4,
        }
        return _LlmPredictor(backend_factory(), _pick(p, defaults))
    raise ConfigError(f"unknown model family {spec.family!r}")


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ResultRow:
    family: str
    model: str
    report: MetricReport | None
    error: str | None
    seconds: float


@dataclass(frozen=True)
class ResultsTable:
    dataset: str
    rows: tuple[ResultRow, ...]
    seed: int
    config_digest: str
    filter_report: FilterReport | None = None


def evaluate_predictor(predictor: SequencePredictor, test: Dataset) -> MetricReport:
    """Score every test interaction in dataset order; failures are counted."""
    labels: list[int] = []
    preds: list[Prediction] = []
    failures = 0
    for seq in test.sequences:
        seq_preds = predictor.predict_sequence(seq)
        if len(seq_preds) != len(seq):
            raise KtbenchError(
                f"predictor returned {len(seq_preds)} predictions for {len(seq)} records"
            )
        for record, pred in zip(seq.records, seq_preds):
            if pred is None:
                failures += 1
            else:
                labels.append(record.correct)
                preds.append(pred)
    return metric_report(labels, preds, failures=failures)


def run_experiment(
    cfg: ExperimentConfig,
    backend_wrapper: Callable[[LlmBackend], LlmBackend] | None = None,
) -> ResultsTable:
    """End-to-end run; per-model errors are recorded in their rows.

    backend_wrapper lets callers interpose on the LLM backend (the
    replay-capture command wraps it in a recorder).
    """
    for spec in cfg.models:  # unknown families are config errors, not row errors
        _display(spec)
    full = load_interactions(cfg.dataset_path, cfg.columns, name=cfg.dataset_name)
    filtered, freport = filter_degenerate_students(full)
    train, test = apply_split(filtered, cfg.split)

    def backend_factory() -> LlmBackend:
        backend = build_backend(cfg.backend)
        return backend_wrapper(backend) if backend_wrapper else backend

    rows: list[ResultRow] = []
    for spec in cfg.models:
        family, name = _display(spec)
        t0 = time.monotonic()
        try:
            predictor = build_predictor(spec, train, cfg.seed, backend_factory)
            report = evaluate_predictor(predictor, test)
            rows.append(ResultRow(family, name, report, None, time.monotonic() - t0))
        except KtbenchError as exc:
            if cfg.abort_on_model_error:
                raise
            rows.append(ResultRow(family, name, None, str(exc), time.monotonic() - t0))

    table = ResultsTable(
        dataset=filtered.name,
        rows=tuple(rows),
        seed=cfg.seed,
        config_digest=config_hash(cfg),
        filter_report=freport,
    )
    if cfg.out_dir:
        write_outputs(table, cfg.out_dir)
    return table


def _metric_values(r: MetricReport) -> tuple[float, ...]:
    return (r.auc, r.f1, r.rmse, r.accuracy, r.balanced_accuracy, r.precision, r.recall)


def emit_table(table: ResultsTable, fmt: str = "markdown") -> str:
    """Markdown rounds to 2 decimals; csv keeps full precision and re-parses."""
    if fmt == "markdown":
        out = io.StringIO()
        out.write(f"Results for {table.dataset}\n\n")
        out.write("| Family | Model | " + " | ".join(TABLE_COLUMNS) + " |\n")
        out.write("|" + "---|" * (2 + len(TABLE_COLUMNS)) + "\n")
        for row in table.rows:
            if row.report is None:
                cells = ["—"] * len(TABLE_COLUMNS)
            else:
                cells = [f"{v:.2f}" for v in _metric_values(row.report)]
            out.write(f"| {row.family} | {row.model} | " + " | ".join(cells) + " |\n")
        return out.getvalue()
    if fmt == "csv":
        out = io.StringIO()
        headers = ["family", "model", "auc", "f1", "rmse", "accuracy",
                   "balanced_accuracy", "precision", "recall", "n_points", "failure_count"]
        out.write(",".join(headers) + "\n")
        for row in table.rows:
            if row.report is None:
                cells = [row.family, row.model] + [""] * 9
            else:
                r = row.report
                cells = [row.family, row.model] + [repr(v) for v in _metric_values(r)] + [
                    str(r.n_points), str(r.failure_count),
                ]
            out.write(",".join(cells) + "\n")
        return out.getvalue()
    raise ConfigError(f"unknown table format {fmt!r}")


def parse_table_csv(text: str) -> list[dict]:
    import csv as _csv

    rows = []
    for rec in _csv.DictReader(io.StringIO(text)):
        parsed: dict = dict(rec)
        for key in ("auc", "f1", "rmse", "accuracy", "balanced_accuracy", "precision", "recall"):
            parsed[key] = float(rec[key]) if rec[key] else None
        for key in ("n_points", "failure_count"):
            parsed[key] = int(rec[key]) if rec[key] else None
        rows.append(parsed)
    return rows


def write_outputs(table: ResultsTable, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.md").write_text(emit_table(table, "markdown"), encoding="utf-8")
    (out / "results.csv").write_text(emit_table(table, "csv"), encoding="utf-8")
    log_lines = [f"dataset={table.dataset}", f"seed={table.seed}", f"config_hash={table.config_digest}"]
    if table.filter_report is not None:
        log_lines.extend(table.filter_report.log_lines())
    for row in table.rows:
        status = "ok" if row.report is not None else f"error: {row.error}"
        log_lines.append(f"model={row.model} seconds={row.seconds:.3f} status={status}")
    (out / "run.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    reports = out / "reports"
    reports.mkdir(exist_ok=True)
    used: dict[str, int] = {}
    for row in table.rows:
        if row.report is not None:
            safe = row.model.lower().replace(" ", "-").replace("/", "-")
            used[safe] = used.get(safe, 0) + 1
            if used[safe] > 1:
                safe = f"{safe}-{used[safe]}"
            (reports / f"{safe}.json").write_text(row.report.to_json(), encoding="utf-8")


def has_model_errors(table: ResultsTable) -> bool:
    return any(row.report is None for row in table.rows)
