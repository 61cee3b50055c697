"""Error histogram, residual autocorrelation and time-series response tables.

Everything here returns plain data (arrays / row lists) with CSV writers for
external plotting; nothing is rendered.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple

import numpy as np

from .errors import DataError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True, eq=False)
class ErrorHistogram:
    bin_edges: np.ndarray
    counts: Dict[str, np.ndarray]
    zero_error_bin_index: int

    @property
    def total(self) -> np.ndarray:
        return sum(self.counts.values())

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def to_csv(self, path) -> None:
        names = list(self.counts)
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "left_edge", "right_edge", "center", *names, "total"])
            total = self.total
            for k in range(len(self.bin_edges) - 1):
                lo, hi = self.bin_edges[k], self.bin_edges[k + 1]
                w.writerow([k, repr(float(lo)), repr(float(hi)), repr(float((lo + hi) / 2)),
                            *(int(self.counts[n][k]) for n in names), int(total[k])])


def error_histogram(errors_by_split: Dict[str, np.ndarray], bins: int = 20) -> ErrorHistogram:
    """Bin target-minus-output errors over their full span, counted per split.

    Bins are uniform over ``[min, max]`` and the last bin includes its right
    edge. If every error is identical, a single bin of width one centred on
    that value is used instead.
    """
    if bins < 1:
        raise DataError("bins must be >= 1")
    parts = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in errors_by_split.items()}
    pooled = np.concatenate(list(parts.values())) if parts else np.empty(0)
    if pooled.size == 0:
        raise DataError("error_histogram needs at least one error value")
    if not np.all(np.isfinite(pooled)):
        raise DataError("errors must be finite")
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        edges = np.array([lo - 0.5, hi + 0.5])
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts = {k: np.histogram(v, bins=edges)[0] for k, v in parts.items()}
    centers = 0.5 * (edges[:-1] + edges[1:])
    return ErrorHistogram(edges, counts, int(np.argmin(np.abs(centers))))


class AcfResult(NamedTuple):
    lags: np.ndarray
    values: np.ndarray
    confidence: float
    n: int

    def inside_band(self) -> np.ndarray:
        """Whether each lag lies within the +/- confidence band."""
        return np.abs(self.values) <= self.confidence

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "value", "lower_limit", "upper_limit"])
            for k, c in zip(self.lags, self.values):
                w.writerow([int(k), repr(float(c)), repr(-self.confidence), repr(self.confidence)])


def autocorrelation(errors, max_lag: int = 20, demean: bool = False) -> AcfResult:
    """Biased autocovariance ``c_k = (1/N) sum_t e_t e_{t+k}`` for ``k = 0 ... max_lag``.

    Without ``demean`` the lag-0 value is exactly the mean squared error. The
    95% band is ``1.96 * c_0 / sqrt(N)``. Errors must already be in time order.
    """
    e = np.asarray(errors, dtype=float).reshape(-1)
    n = e.size
    if max_lag < 0 or max_lag >= n:
        raise DataError(f"max_lag={max_lag} must lie in [0, {n - 1}]")
    if not np.all(np.isfinite(e)):
        raise DataError("errors must be finite")
    if demean:
        e = e - e.mean()
    values = np.array([float(e[: n - k] @ e[k:]) / n for k in range(max_lag + 1)])
    return AcfResult(np.arange(max_lag + 1), values, float(1.96 * values[0] / math.sqrt(n)), n)


class ResponseRow(NamedTuple):
    time: float
    target: float
    output: float
    error: float
    split: str


def response_table(timestamps, targets, outputs, split_labels) -> List[ResponseRow]:
    t = np.asarray(timestamps, dtype=float).reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    o = np.asarray(outputs, dtype=float).reshape(-1)
    labels = list(split_labels)
    if not (t.size == y.size == o.size == len(labels)):
        raise DataError("response_table inputs differ in length")
    order = np.argsort(t, kind="stable")
    return [ResponseRow(float(t[i]), float(y[i]), float(o[i]), float(y[i] - o[i]), str(labels[i]))
            for i in order]


def write_response_csv(rows: List[ResponseRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ResponseRow._fields)
        for r in rows:
            w.writerow([repr(r.time), repr(r.target), repr(r.output), repr(r.error), r.split])
