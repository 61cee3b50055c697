"""Experiment grid: algorithms x division scenarios, with tables and diagnostics.

A single cell runs normalize -> embed -> divide -> init -> train -> predict ->
metrics -> diagnostics and is fully determined by its inputs, so a grid can
be executed serially or in worker processes with identical output.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .data import (DEFAULT_LAGS, SeriesDataset, SplitSpec, embed_lags, fit_normalizer,
                   get_scenario, plan_division)
from .diagnostics import autocorrelation, error_histogram, response_table
from .errors import ConfigError, DataError, NarError, TrainingDivergence
from .metrics import MetricsBundle, compute_metrics, efficiency
from .model import DEFAULT_HIDDEN, init_network, predict_targets
from .training import ALGORITHMS, TrainConfig, TrainReport, train

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CRITERIA = ("composite", "min_test_mse", "max_accuracy", "max_r")
# per-algorithm table, then the cross-algorithm comparison table
TABLE_COLUMNS = ("mse", "r", "mae", "mape", "accuracy", "efficiency")
COMPARISON_COLUMNS = ("r", "mse", "mae", "mape", "accuracy", "efficiency")
_HEADINGS = {"mse": "MSE", "r": "R", "mae": "MAE", "mape": "MAPE",
             "accuracy": "Accuracy", "efficiency": "Efficiency"}
ALGORITHM_NAMES = {"LM": "Levenberg-Marquardt", "BR": "Bayesian Regularization",
                   "SCG": "Scaled Conjugate Gradient"}


@dataclass(frozen=True)
class PipelineOptions:
    lags: int = DEFAULT_LAGS
    hidden: int = DEFAULT_HIDDEN
    division: str = "random-interleaved"
    normalization: str = "full-series"
    init_scheme: str = "uniform-small"
    histogram_bins: int = 20
    acf_max_lag: int = 20

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ScenarioArtifacts:
    """In-memory by-products of one cell; not part of the serialized row."""

    report: TrainReport
    plan: object
    regression: object
    predictions: np.ndarray
    histogram: object
    acf: object
    response: list


@dataclass
class ScenarioResult:
    """One grid cell. ``n_total`` counts the divided samples (series length minus lags)."""

    algorithm: str
    scenario: str
    seed: int
    n_total: int
    counts: tuple = (0, 0, 0)
    metrics: Dict[str, MetricsBundle] = field(default_factory=dict)
    stop_reason: Optional[str] = None
    epochs_run: int = 0
    best_epoch: int = 0
    error: Optional[str] = None
    artifacts: Optional[ScenarioArtifacts] = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def efficiency(self) -> float:
        return efficiency(self.n_total, self.counts[0])

    def row(self) -> dict:
        """Test-set view: MSE, R, MAE, MAPE, Accuracy, Efficiency."""
        if not self.ok:
            return {k: None for k in TABLE_COLUMNS}
        m = self.metrics["test"]
        return {"mse": m.mse, "r": m.r, "mae": m.mae, "mape": m.mape_percent,
                "accuracy": m.accuracy_percent, "efficiency": self.efficiency}

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "scenario": self.scenario,
            "seed": self.seed,
            "n_total": self.n_total,
            "counts": {"train": self.counts[0], "val": self.counts[1], "test": self.counts[2]},
            "test": self.row(),
            "metrics": {k: m.to_dict() for k, m in self.metrics.items()},
            "stop_reason": self.stop_reason,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d):
        c = d["counts"]
        return cls(
            algorithm=d["algorithm"], scenario=d["scenario"], seed=d["seed"],
            n_total=d["n_total"], counts=(c["train"], c["val"], c["test"]),
            metrics={k: MetricsBundle.from_dict(m) for k, m in d["metrics"].items()},
            stop_reason=d["stop_reason"], epochs_run=d["epochs_run"],
            best_epoch=d["best_epoch"], error=d["error"])


@dataclass
class RunManifest:
    """Everything needed to regenerate a grid bit-for-bit."""

    dataset: dict
    master_seed: int
    config: dict
    options: dict
    algorithms: List[str]
    scenarios: List[str]
    tool_version: str = __version__
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def to_dict(self):
        return asdict(self)


def _seeds(seed: int):
    plan_seed, init_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(plan_seed), int(init_seed)


def derive_seed(master_seed: int, algorithm_index: int, scenario_index: int) -> int:
    """Per-cell seed; injective in (algorithm_index, scenario_index) below 1000."""
    return int(master_seed) * 1_000_000 + 1000 * algorithm_index + scenario_index


def _with_context(exc, ctx):
    if isinstance(exc, TrainingDivergence):
        return TrainingDivergence(exc.epoch, f"{ctx}: non-finite loss")
    return type(exc)(f"{ctx}: {exc}")


def run_scenario(dataset: SeriesDataset, algorithm: str, scenario, config: Optional[TrainConfig] = None,
                 seed: int = 0, options: PipelineOptions = PipelineOptions()) -> ScenarioResult:
    """Run one (algorithm, division scenario) cell and score it on every split."""
    spec: SplitSpec = get_scenario(scenario)
    name = spec.name or "custom"
    algorithm = algorithm.upper()
    try:
        base = config.to_dict() if config is not None else {}
        cfg = TrainConfig.from_dict({**base, "algorithm": algorithm})
        plan_seed, init_seed = _seeds(seed)
        d = options.lags
        plan = plan_division(dataset.n - d, spec, options.division, plan_seed)
        norm = fit_normalizer(dataset.values, options.normalization, plan.train_idx, d)
        reg = embed_lags(dataset, d, norm)
        net = init_network(d, options.hidden, init_seed, options.init_scheme, norm)
        report = train(net, reg, plan, cfg)
        pred = predict_targets(report.final_network, reg, np.arange(reg.n_targets))
        splits = {"train": plan.train_idx, "val": plan.val_idx, "test": plan.test_idx}
        metrics = {k: compute_metrics(reg.raw_targets[i], pred[i]) for k, i in splits.items()}
        errors = reg.raw_targets - pred
        hist = error_histogram({k: errors[i] for k, i in splits.items()}, options.histogram_bins)
        test_err = errors[plan.test_idx]  # plan indices are sorted, i.e. time order
        acf = autocorrelation(test_err, min(options.acf_max_lag, test_err.size - 1))
        response = response_table(reg.times, reg.raw_targets, pred, plan.labels())
    except NarError as exc:
        raise _with_context(exc, f"{name}/{algorithm}") from exc
    return ScenarioResult(
        algorithm=algorithm, scenario=name, seed=int(seed), n_total=reg.n_targets,
        counts=plan.counts, metrics=metrics, stop_reason=report.stop_reason,
        epochs_run=report.epochs_run, best_epoch=report.best_epoch,
        artifacts=ScenarioArtifacts(report, plan, reg, pred, hist, acf, response))


def _cell(args):
    dataset, algorithm, scenario, config, seed, options, keep = args
    try:
        res = run_scenario(dataset, algorithm, scenario, config, seed, options)
    except (NarError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("cell %s/%s failed: %s", scenario, algorithm, exc)
        spec = get_scenario(scenario)
        return ScenarioResult(algorithm.upper(), spec.name or "custom", int(seed),
                              max(dataset.n - options.lags, 0),
                              error=f"{type(exc).__name__}: {exc}")
    if not keep:
        res.artifacts = None
    return res


def run_matrix(dataset: SeriesDataset, algorithms: Sequence[str] = ALGORITHMS,
               scenarios: Sequence = tuple(range(1, 8)), config: Optional[TrainConfig] = None,
               master_seed: int = 0, options: PipelineOptions = PipelineOptions(),
               workers: int = 1, keep_artifacts: bool = False) -> List[ScenarioResult]:
    """One row per (algorithm, scenario), algorithm-major.

    Cell seeds come from :func:`derive_seed` on the list positions. A failing
    cell yields a row with ``error`` set instead of aborting the grid.
    """
    if not algorithms or not scenarios:
        raise ConfigError("need at least one algorithm and one scenario")
    jobs = [(dataset, a, s, config, derive_seed(master_seed, ai, si), options, keep_artifacts)
            for ai, a in enumerate(algorithms) for si, s in enumerate(scenarios)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_cell, jobs))
    return [_cell(j) for j in jobs]


def _selection_key(criterion):
    if criterion == "min_test_mse":
        return lambda r: r.row()["mse"]
    if criterion == "max_accuracy":
        return lambda r: -r.row()["accuracy"]
    if criterion == "max_r":
        return lambda r: -r.row()["r"]
    if criterion == "composite":
        return lambda r: (r.row()["mse"], -r.row()["r"], -r.row()["efficiency"])
    raise ConfigError(f"unknown selection criterion {criterion!r}")


def select_best(results: Sequence[ScenarioResult], criterion: str = "composite") -> Dict[str, ScenarioResult]:
    """Best successful row per algorithm under ``criterion``.

    ``composite`` ranks by lowest test MSE, then highest r, then highest
    efficiency. Ties beyond that keep the earliest row.
    """
    key = _selection_key(criterion)
    best: Dict[str, ScenarioResult] = {}
    for r in results:
        if not r.ok:
            continue
        if r.algorithm not in best or key(r) < key(best[r.algorithm]):
            best[r.algorithm] = r
    return best


def validate_rows(results: Sequence[ScenarioResult]) -> None:
    """Re-check accuracy = 100 - MAPE and efficiency = n_total / n_train on every row."""
    for r in results:
        if not r.ok:
            continue
        row = r.row()
        if row["accuracy"] != 100.0 - row["mape"]:
            raise DataError(f"{r.scenario}/{r.algorithm}: accuracy is not 100 - MAPE")
        if row["efficiency"] != r.n_total / r.counts[0]:
            raise DataError(f"{r.scenario}/{r.algorithm}: efficiency inconsistent with counts")


def _fmt(col, value):
    if value is None:
        return "n/a"
    if col in ("mape", "accuracy"):
        return f"{value:.2f}%"
    if col == "r":
        return f"{value:.4f}"
    return f"{value:.2f}"


def to_markdown(results: Sequence[ScenarioResult], criterion: str = "composite") -> str:
    out = []
    algos = list(dict.fromkeys(r.algorithm for r in results))
    for a in algos:
        out.append(f"### {ALGORITHM_NAMES.get(a, a)} testing data results\n")
        out.append("| Scenario | " + " | ".join(_HEADINGS[c] for c in TABLE_COLUMNS) + " |")
        out.append("|---" * (len(TABLE_COLUMNS) + 1) + "|")
        for r in results:
            if r.algorithm == a:
                row = r.row()
                out.append(f"| {r.scenario} | " + " | ".join(_fmt(c, row[c]) for c in TABLE_COLUMNS) + " |")
        out.append("")
    best = select_best(results, criterion)
    if best:
        out.append(f"### Comparison of best scenarios ({criterion})\n")
        out.append("| Algorithm | " + " | ".join(_HEADINGS[c] for c in COMPARISON_COLUMNS) + " |")
        out.append("|---" * (len(COMPARISON_COLUMNS) + 1) + "|")
        for a in algos:
            if a in best:
                r = best[a]
                row = r.row()
                out.append(f"| {ALGORITHM_NAMES.get(a, a)} ({r.scenario}) | "
                           + " | ".join(_fmt(c, row[c]) for c in COMPARISON_COLUMNS) + " |")
        out.append("")
    return "\n".join(out)


CSV_FIELDS = ("algorithm", "scenario", "train_count", "val_count", "test_count",
              *TABLE_COLUMNS, "stop_reason", "epochs_run", "best_epoch", "seed", "error")


def to_csv(results: Sequence[ScenarioResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in results:
        row = r.row()
        w.writerow([r.algorithm, r.scenario, *r.counts,
                    *("" if row[c] is None else repr(float(row[c])) for c in TABLE_COLUMNS),
                    r.stop_reason or "", r.epochs_run, r.best_epoch, r.seed, r.error or ""])
    return buf.getvalue()


def to_json(results: Sequence[ScenarioResult], manifest: Optional[RunManifest] = None,
            criterion: str = "composite") -> str:
    best = select_best(results, criterion)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": None if manifest is None else manifest.to_dict(),
        "results": [r.to_dict() for r in results],
        "best": {"criterion": criterion,
                 "rows": {a: {"scenario": r.scenario} for a, r in best.items()}},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def emit_report(results, fmt: str = "json", path=None, manifest: Optional[RunManifest] = None,
                criterion: str = "composite") -> str:
    """Render results as ``csv``, ``json`` or ``markdown``; write to ``path`` if given."""
    if isinstance(results, ScenarioResult):
        results = [results]
    validate_rows(results)
    if fmt == "csv":
        text = to_csv(results)
    elif fmt == "json":
        text = to_json(results, manifest, criterion)
    elif fmt in ("markdown", "md"):
        text = to_markdown(results, criterion)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(path):
    """Parse a JSON report back into ``(manifest_dict, results)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported report schema {doc.get('schema_version')!r}")
    return doc.get("manifest"), [ScenarioResult.from_dict(r) for r in doc["results"]]


def strip_timestamp(json_text: str) -> str:
    """JSON report text with the manifest timestamp blanked, for reproducibility checks."""
    doc = json.loads(json_text)
    if doc.get("manifest"):
        doc["manifest"]["timestamp"] = ""
    return json.dumps(doc, indent=2, sort_keys=True)


def write_artifacts(result: ScenarioResult, outdir) -> Dict[str, Path]:
    """Write network snapshot, training report and diagnostics CSVs for one cell."""
    from .diagnostics import write_response_csv
    from .model import save_network

    if result.artifacts is None:
        raise ConfigError("result carries no artifacts (run with keep_artifacts=True)")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = f"{result.algorithm.lower()}_{result.scenario}"
    a = result.artifacts
    paths = {
        "network": outdir / f"{stem}_network.json",
        "train_report": outdir / f"{stem}_train_report.json",
        "histogram": outdir / f"{stem}_histogram.csv",
        "acf": outdir / f"{stem}_acf.csv",
        "response": outdir / f"{stem}_response.csv",
    }
    save_network(a.report.final_network, paths["network"])
    paths["train_report"].write_text(a.report.to_json(indent=2))
    a.histogram.to_csv(paths["histogram"])
    a.acf.to_csv(paths["acf"])
    write_response_csv(a.response, paths["response"])
    return paths
