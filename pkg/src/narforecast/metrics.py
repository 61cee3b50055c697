"""Forecast accuracy metrics in original units, plus the data-reduction efficiency ratio."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError


def _pair(targets, predictions):
    y = np.asarray(targets, dtype=float).reshape(-1)
    yhat = np.asarray(predictions, dtype=float).reshape(-1)
    if y.size != yhat.size:
        raise DataError(f"length mismatch: {y.size} targets vs {yhat.size} predictions")
    if y.size == 0:
        raise DataError("metrics need at least one sample")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise DataError("metrics need finite inputs")
    return y, yhat


def mse(targets, predictions) -> float:
    y, yhat = _pair(targets, predictions)
    r = y - yhat
    return float(r @ r) / y.size


def mae(targets, predictions) -> float:
    y, yhat = _pair(targets, predictions)
    return float(np.sum(np.abs(y - yhat))) / y.size


def mape(targets, predictions) -> float:
    """Mean absolute percentage error, in percent."""
    y, yhat = _pair(targets, predictions)
    zero = np.flatnonzero(y == 0)
    if zero.size:
        raise DataError(f"MAPE undefined: target at index {int(zero[0])} is zero")
    return float(np.sum(np.abs((y - yhat) / y))) / y.size * 100.0


def r_value(targets, predictions):
    """Return ``(r, r_squared, rss, tss)``.

    ``r`` is the Pearson correlation of targets and predictions (0 when the
    predictions are constant); ``r_squared = 1 - rss/tss``.
    """
    y, yhat = _pair(targets, predictions)
    if y.size < 2:
        raise DataError("r_value needs at least two samples")
    dy = y - y.mean()
    tss = float(dy @ dy)
    if tss == 0:
        raise DataError("r_value undefined for constant targets")
    res = y - yhat
    rss = float(res @ res)
    dp = yhat - yhat.mean()
    spp = float(dp @ dp)
    r = 0.0 if spp == 0 else float(dy @ dp) / math.sqrt(tss * spp)
    r = min(1.0, max(-1.0, r))
    return r, 1.0 - rss / tss, rss, tss


def accuracy(mape_percent: float) -> float:
    if mape_percent < 0:
        raise DataError("MAPE cannot be negative")
    return 100.0 - mape_percent


def efficiency(n_total: int, n_train: int) -> float:
    """Total points over training points: the data-reduction factor."""
    if n_train < 1:
        raise DataError("efficiency needs at least one training point")
    if n_train > n_total:
        raise DataError(f"training count {n_train} exceeds total {n_total}")
    return n_total / n_train


@dataclass(frozen=True)
class MetricsBundle:
    mse: float
    mae: float
    mape_percent: float
    r: float
    r_squared: float
    rss: float
    tss: float
    accuracy_percent: float
    sample_count: int

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def compute_metrics(targets, predictions) -> MetricsBundle:
    y, yhat = _pair(targets, predictions)
    r, r2, rss, tss = r_value(y, yhat)
    m = mape(y, yhat)
    return MetricsBundle(
        mse=rss / y.size,
        mae=mae(y, yhat),
        mape_percent=m,
        r=r,
        r_squared=r2,
        rss=rss,
        tss=tss,
        accuracy_percent=accuracy(m),
        sample_count=int(y.size),
    )
