"""Seeded multi-run experiments comparing unfiltered and LAMC-filtered models.

One run ``r`` uses seed ``base_seed + r`` for the split, the single-positive
projection, the initialisation and the shuffling. Every learning rate in the
grid is trained, the one with the best validation average precision is kept,
thresholds are calibrated on the calibration split and the test split is
scored three ways:

``<loss>``
    raw model scores
``<loss>+lamc``
    only the retained (accepted) label predictions of each instance
``<loss>+lamc-masked``
    all labels, rejected scores replaced by 0
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .calibrate import (
    ThresholdVector,
    calibrate_scores,
    filter_predictions,
    masked_scores,
    score_matrix,
)
from .data import (
    MultiLabelDataset,
    SplitSpec,
    generate_synthetic,
    load_dataset,
    project_single_positive,
    split,
)
from .exceptions import (
    ConfigurationError,
    ExperimentError,
    LamcError,
    NonFiniteLossError,
    UndefinedMetricError,
)
from .metrics import METRIC_NAMES, average_precision, evaluate
from .nn import AdamState, LossKind, init_mlp, train

logger = logging.getLogger(__name__)

__all__ = [
    "SyntheticSpec",
    "ExperimentConfig",
    "EvalReport",
    "SweepReport",
    "load_config",
    "write_config",
    "evaluate_lamc",
    "run_experiment",
    "sweep_calibration_size",
    "emit_report",
    "load_report",
    "format_table",
]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 2000
    d: int = 20
    k: int = 10
    cardinality: float = 3.0
    noise: float = 0.3

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        """From ``"n,d,k,card,noise"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 5:
            raise ConfigurationError(f"synthetic spec needs n,d,k,card,noise, got {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
        except ValueError:
            raise ConfigurationError(f"bad synthetic spec {text!r}") from None

    def __str__(self):
        return f"{self.n},{self.d},{self.k},{self.cardinality!r},{self.noise!r}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on. Defaults follow the published protocol."""

    dataset: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    split: tuple = (0.7, 0.1, 0.1, 0.1)
    loss: str = "wan"
    gamma: Optional[float] = None
    lr_grid: tuple = (1e-4, 1e-3, 1e-2)
    epochs: int = 25
    batch_size: int = 16
    alpha: float = 0.5
    cal_per_label: Optional[int] = 10
    n_runs: int = 5
    seed: int = 0
    hidden_dim: int = 128
    activation: str = "relu"
    # "same-split": baseline and LAMC share the 4-way split.
    # "paper": the unfiltered baseline is trained on its own 80/10/10 split.
    protocol: str = "same-split"
    baselines: tuple = ()
    force_accept_all: bool = False
    out: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        object.__setattr__(self, "lr_grid", tuple(float(v) for v in self.lr_grid))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigurationError("give exactly one of dataset and synthetic")
        if not self.lr_grid:
            raise ConfigurationError("lr_grid must not be empty")
        if self.n_runs < 1:
            raise ConfigurationError("n_runs must be at least 1")
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_dim < 1:
            raise ConfigurationError("epochs, batch_size and hidden_dim must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.cal_per_label is not None and self.cal_per_label < 1:
            raise ConfigurationError("cal_per_label must be at least 1 (or None for all)")
        if self.protocol not in ("same-split", "paper"):
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        if len(self.split) != 4 or self.split[1] <= 0:
            raise ConfigurationError("split needs four fractions with a nonzero calibration part")
        SplitSpec(*self.split)
        for tag in (self.loss,) + self.baselines:
            LossKind(tag)

    @property
    def methods(self) -> list:
        lamc = f"{self.loss}+lamc"
        return [self.loss, lamc, lamc + "-masked"] + list(self.baselines)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synthetic"] = None if self.synthetic is None else str(self.synthetic)
        d["split"] = list(self.split)
        d["lr_grid"] = list(self.lr_grid)
        d["baselines"] = list(self.baselines)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("synthetic"), str):
            d["synthetic"] = SyntheticSpec.parse(d["synthetic"])
        return cls(**d)


# --------------------------------------------------------------------------
# Config files: flat "key = value" text
# --------------------------------------------------------------------------


def _parse_optional_int(v):
    return None if v.lower() in ("all", "none") else int(v)


def _parse_list(v, conv):
    return tuple(conv(x) for x in v.split(",") if x.strip())


def _parse_bool(v):
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


_CONVERTERS = {
    "dataset": str,
    "synthetic": SyntheticSpec.parse,
    "split": lambda v: _parse_list(v, float),
    "loss": str,
    "gamma": lambda v: None if v.lower() == "none" else float(v),
    "lr_grid": lambda v: _parse_list(v, float),
    "epochs": int,
    "batch_size": int,
    "alpha": float,
    "cal_per_label": _parse_optional_int,
    "n_runs": int,
    "seed": int,
    "hidden_dim": int,
    "activation": str,
    "protocol": str,
    "baselines": lambda v: _parse_list(v, str.strip),
    "force_accept_all": _parse_bool,
    "out": str,
}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as e:
            raise ConfigurationError(f"config line {lineno}: {e}") from None
    return values


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a config file; keyword overrides that are not None win."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "dataset" in overrides and overrides["dataset"] is not None:
        values.pop("synthetic", None)
    elif "synthetic" in overrides and overrides["synthetic"] is not None:
        values.pop("dataset", None)
    return ExperimentConfig.from_dict(values)


def write_config(cfg: ExperimentConfig, path) -> None:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            if key in ("cal_per_label",):
                lines.append(f"{key} = all")
            elif key == "gamma":
                lines.append(f"{key} = none")
            continue
        if isinstance(value, list):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def _mean_std(values) -> dict:
    """Mean and population std; None for both if any run left the metric undefined."""
    if any(v is None for v in values):
        return {"mean": None, "std": None}
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(np.mean(a)), "std": float(np.std(a))}


def _summarise(per_run: list, methods: Sequence[str]) -> dict:
    return {
        m: {name: _mean_std([r[m][name] for r in per_run]) for name in METRIC_NAMES}
        for m in methods
    }


@dataclass
class EvalReport:
    """Per-run metrics, their mean and (population) std over runs, and the config.

    ``runs[r]`` holds ``seed``, ``learning_rate`` per trained method,
    ``metrics`` per method (MetricValues as dicts), ``thresholds`` (one record
    per class), ``n_dropped`` and ``diagnostics`` (aborted learning rates).
    """

    config: dict
    methods: list
    runs: list
    summary: dict

    def metric(self, method: str, name: str = "average_precision") -> float:
        return self.summary[method][name]["mean"]

    def to_dict(self) -> dict:
        return {
            "kind": "experiment",
            "config": self.config,
            "methods": self.methods,
            "runs": self.runs,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["config"], d["methods"], d["runs"], d["summary"])


@dataclass
class SweepReport:
    """Calibration-size sweep. ``caps`` holds ints or ``"all"``.

    ``table`` rows are ``(cap, method, metric, mean, std)``. ``notes`` maps a
    cap to the runs in which some class had fewer positives than the cap.
    """

    config: dict
    caps: list
    methods: list
    runs: list
    table: list
    notes: dict = field(default_factory=dict)

    def metric(self, cap, method: str, name: str = "average_precision") -> float:
        for c, m, metric, mean, _ in self.table:
            if c == cap and m == method and metric == name:
                return mean
        raise KeyError((cap, method, name))

    def to_dict(self) -> dict:
        return {
            "kind": "sweep",
            "config": self.config,
            "caps": self.caps,
            "methods": self.methods,
            "runs": self.runs,
            "table": [list(row) for row in self.table],
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(
            d["config"], d["caps"], d["methods"], d["runs"],
            [tuple(row) for row in d["table"]], d.get("notes", {}),
        )


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


def _load_data(cfg: ExperimentConfig) -> MultiLabelDataset:
    if cfg.dataset is not None:
        return load_dataset(cfg.dataset)
    s = cfg.synthetic
    return generate_synthetic(s.n, s.d, s.k, s.cardinality, s.noise, seed=cfg.seed)


def _select_lr(cfg, loss: LossKind, train_split, val, seed, run):
    """Train every learning rate of the grid, keep the best on validation AP."""
    view = project_single_positive(train_split, seed)
    diagnostics = []
    best = None
    for lr in cfg.lr_grid:
        model = init_mlp(
            view.base.n_features, view.base.n_labels, cfg.hidden_dim, cfg.activation, seed
        )
        try:
            model, trace = train(
                model, view, loss, AdamState(lr), cfg.epochs, cfg.batch_size, seed
            )
            ap = average_precision(score_matrix(model, val.features), val.labels)
        except (NonFiniteLossError, UndefinedMetricError) as e:
            diagnostics.append({"loss": loss.tag, "learning_rate": lr, "error": str(e)})
            logger.warning("run %d, lr %g: %s", run, lr, e)
            continue
        if not math.isfinite(ap):
            diagnostics.append({"loss": loss.tag, "learning_rate": lr, "error": "validation AP not finite"})
            continue
        if best is None or ap > best[0]:
            best = (ap, lr, model)
    if best is None:
        raise ExperimentError(
            run, "train",
            f"every learning rate in {list(cfg.lr_grid)} aborted: "
            + "; ".join(d["error"] for d in diagnostics),
        )
    return best[2], best[1], view.n_dropped, diagnostics


def evaluate_lamc(
    scorer,
    cal: MultiLabelDataset,
    test: MultiLabelDataset,
    alpha: float,
    per_label_cap: Optional[int],
    seed: int,
    force_accept_all: bool = False,
    cal_scores=None,
    test_scores=None,
):
    """Calibrate ``scorer`` on ``cal`` and score ``test`` raw, retained and masked.

    ``scorer`` is anything callable on an N x d matrix returning N x K scores;
    precomputed score matrices may be passed instead. Returns
    ``(thresholds, {"raw": ..., "lamc": ..., "masked": ...})`` of MetricValues.
    """
    if cal_scores is None:
        cal_scores = score_matrix(scorer, cal.features)
    if test_scores is None:
        test_scores = score_matrix(scorer, test.features)
    if force_accept_all:
        th = ThresholdVector.accepting_all(cal.n_labels, alpha)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            th = calibrate_scores(
                cal_scores, cal.labels, alpha, per_label_cap, seed, cal.label_names
            )
    fp = filter_predictions(th, test_scores)
    return th, {
        "raw": evaluate(test_scores, test.labels, strict=False),
        "lamc": evaluate(test_scores, test.labels, mask=fp.accepted, strict=False),
        "masked": evaluate(masked_scores(fp), test.labels, strict=False),
    }


@dataclass
class _TrainedRun:
    run: int
    seed: int
    splits: object
    model: object
    learning_rate: dict
    n_dropped: int
    diagnostics: list
    baseline_metrics: dict


def _train_run(cfg: ExperimentConfig, ds: MultiLabelDataset, run: int) -> _TrainedRun:
    seed = cfg.seed + run
    stage = "split"
    try:
        splits = split(ds, SplitSpec(*cfg.split, seed=seed))
        stage = "train"
        model, lr, n_dropped, diags = _select_lr(
            cfg, LossKind(cfg.loss, cfg.gamma), splits.train, splits.val, seed, run
        )
        lrs = {cfg.loss: lr}
        baseline_metrics = {}
        if cfg.protocol == "paper":
            stage = "paper-protocol split"
            b_splits = split(ds, SplitSpec(cfg.split[0] + cfg.split[1], 0.0, *cfg.split[2:], seed=seed))
            stage = "paper-protocol train"
            b_model, b_lr, _, b_diags = _select_lr(
                cfg, LossKind(cfg.loss, cfg.gamma), b_splits.train, b_splits.val, seed, run
            )
            diags += b_diags
            lrs[cfg.loss] = b_lr
            lrs[f"{cfg.loss}+lamc"] = lr
            stage = "evaluate"
            baseline_metrics[cfg.loss] = evaluate(
                score_matrix(b_model, b_splits.test.features), b_splits.test.labels, strict=False
            )
        for tag in cfg.baselines:
            stage = f"train baseline {tag}"
            b_model, b_lr, _, b_diags = _select_lr(
                cfg, LossKind(tag), splits.train, splits.val, seed, run
            )
            diags += b_diags
            lrs[tag] = b_lr
            stage = "evaluate"
            baseline_metrics[tag] = evaluate(
                score_matrix(b_model, splits.test.features), splits.test.labels, strict=False
            )
    except ExperimentError:
        raise
    except (LamcError, FloatingPointError, ValueError) as e:
        raise ExperimentError(run, stage, str(e)) from e
    return _TrainedRun(run, seed, splits, model, lrs, n_dropped, diags, baseline_metrics)


def _lamc_metrics(cfg, tr: _TrainedRun, cap, force_accept_all, cal_scores, test_scores):
    try:
        th, res = evaluate_lamc(
            tr.model, tr.splits.cal, tr.splits.test, cfg.alpha, cap, tr.seed,
            force_accept_all, cal_scores, test_scores,
        )
    except (LamcError, ValueError) as e:
        raise ExperimentError(tr.run, "calibrate/evaluate", str(e)) from e
    lamc = f"{cfg.loss}+lamc"
    metrics = {
        cfg.loss: res["raw"],
        lamc: res["lamc"],
        lamc + "-masked": res["masked"],
    }
    metrics.update(tr.baseline_metrics)
    return th, metrics


def run_experiment(cfg: ExperimentConfig, dataset: Optional[MultiLabelDataset] = None) -> EvalReport:
    """Run ``cfg.n_runs`` seeded runs and aggregate them.

    ``dataset`` overrides the one named by the config (useful for in-memory
    data). Raises ExperimentError naming the run and stage on failure.
    """
    ds = dataset if dataset is not None else _load_data(cfg)
    runs, per_run = [], []
    for r in range(cfg.n_runs):
        tr = _train_run(cfg, ds, r)
        cal_scores = score_matrix(tr.model, tr.splits.cal.features)
        test_scores = score_matrix(tr.model, tr.splits.test.features)
        th, metrics = _lamc_metrics(
            cfg, tr, cfg.cal_per_label, cfg.force_accept_all, cal_scores, test_scores
        )
        per_run.append({m: v.as_dict() for m, v in metrics.items()})
        runs.append({
            "run": r,
            "seed": tr.seed,
            "learning_rate": tr.learning_rate,
            "n_dropped": tr.n_dropped,
            "diagnostics": tr.diagnostics,
            "metrics": per_run[-1],
            "thresholds": th.records(),
        })
        logger.info("run %d done: %s", r, {m: v.average_precision for m, v in metrics.items()})
    return EvalReport(cfg.to_dict(), cfg.methods, runs, _summarise(per_run, cfg.methods))


def _cap_key(cap):
    return "all" if cap is None else int(cap)


def sweep_calibration_size(
    cfg: ExperimentConfig,
    caps: Sequence[Union[int, str, None]],
    dataset: Optional[MultiLabelDataset] = None,
) -> SweepReport:
    """Re-calibrate the same trained models with different per-label caps.

    ``caps`` entries are positive ints or ``"all"``/None. A cap larger than
    the positives available for a class uses all of them and is noted.
    """
    if not caps:
        raise ConfigurationError("caps must not be empty")
    norm = []
    for c in caps:
        if c is None or (isinstance(c, str) and c.lower() == "all"):
            norm.append(None)
        else:
            c = int(c)
            if c < 1:
                raise ConfigurationError(f"caps must be at least 1, got {c}")
            norm.append(c)
    ds = dataset if dataset is not None else _load_data(cfg)
    lamc = f"{cfg.loss}+lamc"
    methods = [cfg.loss, lamc, lamc + "-masked"]

    trained = [_train_run(cfg, ds, r) for r in range(cfg.n_runs)]
    scores = [
        (score_matrix(t.model, t.splits.cal.features), score_matrix(t.model, t.splits.test.features))
        for t in trained
    ]
    runs, table, notes = [], [], {}
    for cap in norm:
        key = _cap_key(cap)
        per_run = []
        for tr, (cs, ts) in zip(trained, scores):
            th, metrics = _lamc_metrics(cfg, tr, cap, cfg.force_accept_all, cs, ts)
            per_run.append({m: metrics[m].as_dict() for m in methods})
            available = tr.splits.cal.labels.sum(axis=0)
            if cap is not None and (available < cap).any():
                short = [int(i) for i in np.flatnonzero(available < cap)]
                notes.setdefault(str(key), []).append({"run": tr.run, "classes_below_cap": short})
            runs.append({"cap": key, "run": tr.run, "metrics": per_run[-1],
                         "per_class_n": th.per_class_n.tolist()})
        summary = _summarise(per_run, methods)
        for m in methods:
            for name in METRIC_NAMES:
                table.append((key, m, name, summary[m][name]["mean"], summary[m][name]["std"]))
    return SweepReport(cfg.to_dict(), [_cap_key(c) for c in norm], methods, runs, table, notes)


# --------------------------------------------------------------------------
# Emission
# --------------------------------------------------------------------------


_SHORT = {"average_precision": "AP", "coverage_error": "Coverage", "ranking_loss": "RankLoss"}


def _pm(mean, std):
    if mean is None:
        return "n/a"
    return f"{mean:.3f} ± {std:.3f}"


def format_table(report: Union[EvalReport, SweepReport]) -> str:
    """Human-readable mean ± std table, three decimals."""
    if isinstance(report, EvalReport):
        head = ["method"] + [_SHORT[m] for m in METRIC_NAMES]
        rows = [
            [m] + [_pm(**report.summary[m][name]) for name in METRIC_NAMES]
            for m in report.methods
        ]
    else:
        head = ["cap", "method"] + [_SHORT[m] for m in METRIC_NAMES]
        cells = {(c, m, name): (mean, std) for c, m, name, mean, std in report.table}
        rows = [
            [str(c), m] + [_pm(*cells[(c, m, name)]) for name in METRIC_NAMES]
            for c in report.caps
            for m in report.methods
        ]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]

    def fmt(r):
        return "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()

    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]) + "\n"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def emit_report(report: Union[EvalReport, SweepReport], directory) -> list:
    """Write the JSON report and the text table; sweeps also get ``sweep.tsv``.

    The TSV has columns ``cap metric mean std`` with one row per (cap, metric)
    for the LAMC method. Returns the written paths.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        stem = "report" if isinstance(report, EvalReport) else "sweep"
        paths = [directory / f"{stem}.json", directory / f"{stem}.txt"]
        paths[0].write_text(_dump(report.to_dict()), encoding="utf-8")
        paths[1].write_text(format_table(report), encoding="utf-8")
        if isinstance(report, SweepReport):
            lamc = report.methods[1]
            lines = ["cap\tmetric\tmean\tstd"]
            for cap, m, name, mean, std in report.table:
                if m == lamc:
                    lines.append(f"{cap}\t{name}\t{mean!r}\t{std!r}")
            paths.append(directory / "sweep.tsv")
            paths[2].write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise OSError(e.errno, f"cannot write report: {e.strerror}", e.filename) from e
    return paths


def load_report(path) -> Union[EvalReport, SweepReport]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport.from_dict(d) if d.get("kind") == "experiment" else SweepReport.from_dict(d)
