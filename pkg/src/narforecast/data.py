"""Series loading, synthesis, normalization, lag embedding and data division.

Index conventions used throughout the package:

* a series holds ``n`` raw values ``values[0] ... values[n-1]``;
* lag embedding with ``d`` delays produces ``n - d`` regression rows, row ``i``
  predicting ``values[i + d]`` from ``values[i + d - 1], ..., values[i]``
  (most recent lag first);
* a :class:`DivisionPlan` partitions the *row* indices ``0 ... n - d - 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_LAGS = 2
#: Targets kept back beyond the lag window so three non-empty splits exist.
SPLIT_MARGIN = 30
MIN_POINTS = DEFAULT_LAGS + SPLIT_MARGIN

DIVISION_METHODS = ("random-interleaved", "contiguous-block")
NORMALIZATION_POLICIES = ("full-series", "train-only")


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SeriesDataset:
    """A univariate series, e.g. heart rate in beats per minute.

    ``timestamps`` are optional and, when present, in seconds and strictly
    increasing.
    """

    values: np.ndarray
    timestamps: Optional[np.ndarray] = None
    source_label: str = ""
    min_points: int = MIN_POINTS

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise DataError("series values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DataError(f"non-finite value at position {bad}")
        if values.size < self.min_points:
            raise DataError(
                f"too few points: {values.size} < {self.min_points} required")
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            ts = _frozen(self.timestamps)
            if ts.shape != values.shape:
                raise DataError("timestamps and values differ in length")
            if np.any(np.diff(ts) <= 0):
                raise DataError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    def times(self) -> np.ndarray:
        """Timestamps if present, otherwise the sample positions."""
        if self.timestamps is not None:
            return self.timestamps
        return np.arange(self.n, dtype=float)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions of one division scenario."""

    train_frac: float
    val_frac: float
    test_frac: float
    name: str = ""

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not (0.0 < f < 1.0) for f in fracs):
            raise ConfigError(f"split fractions must lie in (0, 1): {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise ConfigError(f"split fractions must sum to 1: {fracs}")


SCENARIOS = {
    f"scenario{k}": SplitSpec(tr, va, va, f"scenario{k}")
    for k, (tr, va) in enumerate(
        [(0.9, 0.05), (0.8, 0.1), (0.7, 0.15), (0.6, 0.2),
         (0.5, 0.25), (0.4, 0.3), (0.3, 0.35)], start=1)
}


def get_scenario(key: Union[str, int, SplitSpec]) -> SplitSpec:
    """Look up a preset by number (``7``), name (``"scenario7"``) or pass through."""
    if isinstance(key, SplitSpec):
        return key
    name = f"scenario{key}" if str(key).isdigit() else str(key)
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {key!r}") from None


@dataclass(frozen=True, eq=False)
class DivisionPlan:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    method: str
    seed: int

    @property
    def counts(self):
        return (self.train_idx.size, self.val_idx.size, self.test_idx.size)

    @property
    def n_targets(self):
        return sum(self.counts)

    def labels(self) -> np.ndarray:
        """Per-row split label (``"train"``, ``"val"`` or ``"test"``)."""
        out = np.empty(self.n_targets, dtype=object)
        out[self.train_idx] = "train"
        out[self.val_idx] = "val"
        out[self.test_idx] = "test"
        return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_counts(n_targets: int, spec: SplitSpec):
    """Round train, round validation, give the remainder to test."""
    n_train = _round_half_up(spec.train_frac * n_targets)
    n_val = _round_half_up(spec.val_frac * n_targets)
    n_test = n_targets - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise DataError(
            f"{spec.name or 'split'} on {n_targets} targets leaves an empty "
            f"set: counts ({n_train}, {n_val}, {n_test})")
    return n_train, n_val, n_test


def plan_division(n_targets: int, spec: SplitSpec,
                  method: str = "random-interleaved", seed: int = 0) -> DivisionPlan:
    """Partition the target indices ``0 ... n_targets - 1`` into three sets.

    ``random-interleaved`` cuts a seeded uniform permutation into the three
    counts; ``contiguous-block`` keeps time order (train, then val, then test).
    Index arrays are returned sorted.
    """
    if n_targets < 3:
        raise DataError(f"need at least 3 targets to divide, got {n_targets}")
    if method not in DIVISION_METHODS:
        raise ConfigError(f"unknown division method {method!r}")
    n_train, n_val, _ = split_counts(n_targets, spec)
    if method == "random-interleaved":
        order = np.random.default_rng(seed).permutation(n_targets)
    else:
        order = np.arange(n_targets)
    cut1, cut2 = n_train, n_train + n_val
    return DivisionPlan(
        train_idx=np.sort(order[:cut1]),
        val_idx=np.sort(order[cut1:cut2]),
        test_idx=np.sort(order[cut2:]),
        method=method,
        seed=int(seed),
    )


@dataclass(frozen=True)
class Normalizer:
    """Linear map of ``[x_min, x_max]`` onto ``[-1, 1]``."""

    x_min: float
    x_max: float

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise DataError("normalizer bounds must be finite")
        if not self.x_min < self.x_max:
            raise DataError(
                f"normalizer needs x_min < x_max, got {self.x_min}, {self.x_max}")

    @property
    def half_range(self) -> float:
        """Original-unit size of one normalized unit."""
        return (self.x_max - self.x_min) / 2.0

    def apply(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.x_min) / (self.x_max - self.x_min) - 1.0

    def invert(self, y):
        return (np.asarray(y, dtype=float) + 1.0) * self.half_range + self.x_min

    def to_dict(self):
        return {"x_min": float(self.x_min), "x_max": float(self.x_max)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["x_min"]), float(d["x_max"]))


def fit_normalizer(values, policy: str = "full-series",
                   train_idx=None, lags: int = DEFAULT_LAGS) -> Normalizer:
    """Fit a :class:`Normalizer` to a series.

    With ``policy="train-only"`` only the training *targets* are used, i.e.
    ``values[train_idx + lags]`` where ``train_idx`` are row indices of a
    :class:`DivisionPlan`.
    """
    values = np.asarray(values, dtype=float)
    if policy == "train-only":
        if train_idx is None:
            raise ConfigError("train-only normalization needs train_idx")
        values = values[np.asarray(train_idx, dtype=int) + lags]
    elif policy != "full-series":
        raise ConfigError(f"unknown normalization policy {policy!r}")
    if values.size < 2 or np.min(values) == np.max(values):
        raise DataError("cannot normalize a constant series")
    return Normalizer(float(np.min(values)), float(np.max(values)))


@dataclass(frozen=True, eq=False)
class RegressionSet:
    """Lag-embedded open-loop regression problem.

    ``inputs[i]`` holds the normalized values at series positions
    ``i + d - 1, ..., i`` and ``targets[i]`` the normalized value at ``i + d``.
    ``raw_targets`` and ``times`` keep the target in original units and its
    timestamp (or position).
    """

    inputs: np.ndarray
    targets: np.ndarray
    raw_targets: np.ndarray
    times: np.ndarray
    d: int
    normalizer: Normalizer
    n_series: int = field(default=0)

    @property
    def n_targets(self) -> int:
        return self.targets.size


def embed_lags(series: SeriesDataset, d: int, normalizer: Normalizer) -> RegressionSet:
    n = series.n
    if not (1 <= d <= n - SPLIT_MARGIN):
        raise DataError(f"lag count d={d} out of range [1, {n - SPLIT_MARGIN}]")
    scaled = normalizer.apply(series.values)
    windows = np.lib.stride_tricks.sliding_window_view(scaled, d)[: n - d]
    return RegressionSet(
        inputs=_frozen(windows[:, ::-1]),
        targets=_frozen(scaled[d:]),
        raw_targets=_frozen(series.values[d:]),
        times=_frozen(series.times()[d:]),
        d=d,
        normalizer=normalizer,
        n_series=n,
    )


def _parse_float(cell: str, row: int, what: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}: cannot parse {what} {cell!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: non-finite {what} {cell!r}")
    return value


def _column_index(header, column, role):
    if isinstance(column, int):
        return column
    if header is None or column not in header:
        raise DataError(f"{role} column {column!r} not found in header")
    return header.index(column)


def load_series(path: Union[str, Path], column: Union[int, str] = 0,
                timestamp_column: Union[int, str, None] = None,
                min_points: int = MIN_POINTS) -> SeriesDataset:
    """Read one numeric column of a CSV file.

    A header row is optional. It is required when columns are given by name
    and otherwise detected by the first row failing to parse. Error messages
    use 1-based file row numbers; blank lines are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"too few points: {path} is empty")

    header = None
    by_name = isinstance(column, str) or isinstance(timestamp_column, str)
    first = [c.strip() for c in rows[0][1]]
    if by_name:
        header = first
    else:
        try:
            float(first[column])
        except (ValueError, IndexError):
            header = first
    if header is not None:
        rows = rows[1:]
    col = _column_index(header, column, "value")
    tcol = None if timestamp_column is None else _column_index(header, timestamp_column, "timestamp")

    values, stamps = [], []
    for lineno, row in rows:
        if col >= len(row):
            raise DataError(f"row {lineno}: missing value column {column!r}")
        values.append(_parse_float(row[col].strip(), lineno, "value"))
        if tcol is not None:
            if tcol >= len(row):
                raise DataError(f"row {lineno}: missing timestamp column {timestamp_column!r}")
            stamps.append(_parse_float(row[tcol].strip(), lineno, "timestamp"))

    if len(values) < min_points:
        raise DataError(f"too few points: {len(values)} < {min_points} required")
    return SeriesDataset(
        np.array(values),
        np.array(stamps) if tcol is not None else None,
        source_label=str(path),
        min_points=min_points,
    )


def save_series(series: SeriesDataset, path: Union[str, Path]) -> None:
    """Write a series as ``time,value`` CSV with a header."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "value"])
        for t, v in zip(series.times(), series.values):
            writer.writerow([repr(float(t)), repr(float(v))])


@dataclass(frozen=True)
class SyntheticProfile:
    """Parameters of the synthetic heart-rate generator.

    ``drift_period`` is in samples; ``noise_std`` is the marginal standard
    deviation of the AR(1) noise.
    """

    baseline_bpm: float = 75.0
    drift_amplitude: float = 6.0
    drift_period: float = 900.0
    noise_std: float = 1.5
    ar_coef: float = 0.8
    min_bpm: float = 20.0
    sample_interval: float = 1.0

    def to_dict(self):
        return dict(self.__dict__)


def generate_synthetic(n: int = 6312, seed: int = 0,
                       profile: SyntheticProfile = SyntheticProfile()) -> SeriesDataset:
    """Baseline plus sinusoidal drift plus stationary AR(1) noise, clamped positive."""
    if n < MIN_POINTS:
        raise DataError(f"too few points: {n} < {MIN_POINTS} required")
    if profile.noise_std < 0:
        raise ConfigError("noise_std must be non-negative")
    if not -1.0 < profile.ar_coef < 1.0:
        raise ConfigError("ar_coef must lie in (-1, 1)")
    t = np.arange(n, dtype=float)
    drift = profile.drift_amplitude * np.sin(2.0 * np.pi * t / profile.drift_period)
    noise = np.zeros(n)
    if profile.noise_std > 0:
        rng = np.random.default_rng(seed)
        shocks = rng.standard_normal(n)
        phi = profile.ar_coef
        innov = profile.noise_std * math.sqrt(1.0 - phi * phi)
        noise[0] = profile.noise_std * shocks[0]
        for k in range(1, n):
            noise[k] = phi * noise[k - 1] + innov * shocks[k]
    values = np.maximum(profile.baseline_bpm + drift + noise, profile.min_bpm)
    label = (f"synthetic(n={n}, seed={seed}, baseline={profile.baseline_bpm}, "
             f"drift={profile.drift_amplitude}, noise={profile.noise_std})")
    return SeriesDataset(values, t * profile.sample_interval, source_label=label)


def ar1_series(n: int, coef: float = 0.9, intercept: float = 5.0,
               start: float = 100.0) -> SeriesDataset:
    """Noiseless ``y[t] = coef * y[t-1] + intercept`` started at ``start``."""
    values = np.empty(n)
    values[0] = start
    for k in range(1, n):
        values[k] = coef * values[k - 1] + intercept
    return SeriesDataset(values, source_label=f"ar1(n={n}, coef={coef}, intercept={intercept}, start={start})")
