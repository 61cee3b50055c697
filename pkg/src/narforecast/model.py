"""One-hidden-layer NAR network: ``d`` lags -> ``h`` tanh units -> linear output.

Weights are exchanged with the trainers as a flat vector with layout::

    [input_weights (h x d, row-major), input_bias (h), output_weights (h), output_bias]

so ``P = h*d + 2*h + 1``. Errors follow ``e = target - output`` and the
Jacobian is ``J = de/dw``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Normalizer, RegressionSet
from .errors import ConfigError, DataError

LAYOUT_VERSION = 1
DEFAULT_HIDDEN = 10
INIT_SCHEMES = ("uniform-small", "nguyen-widrow")


def n_params(d: int, h: int) -> int:
    return h * d + 2 * h + 1


@dataclass(frozen=True, eq=False)
class NarNetwork:
    d: int
    h: int
    input_weights: np.ndarray
    input_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: float
    normalizer: Optional[Normalizer] = None

    @property
    def n_params(self) -> int:
        return n_params(self.d, self.h)

    def with_normalizer(self, normalizer):
        return replace(self, normalizer=normalizer)

    def equals(self, other) -> bool:
        """Bit-for-bit equality of architecture, weights and normalizer."""
        return (self.d == other.d and self.h == other.h
                and np.array_equal(flatten(self), flatten(other))
                and self.normalizer == other.normalizer)

    def to_dict(self):
        return {
            "layout_version": LAYOUT_VERSION,
            "d": self.d,
            "h": self.h,
            "weights": flatten(self).tolist(),
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("layout_version") != LAYOUT_VERSION:
            raise DataError(f"unsupported network layout {doc.get('layout_version')!r}")
        norm = doc.get("normalizer")
        return unflatten(np.array(doc["weights"], dtype=float), int(doc["d"]), int(doc["h"]),
                         None if norm is None else Normalizer.from_dict(norm))


def save_network(net: NarNetwork, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=2))


def load_network(path) -> NarNetwork:
    return NarNetwork.from_dict(json.loads(Path(path).read_text()))


def flatten(net: NarNetwork) -> np.ndarray:
    return np.concatenate([
        np.ravel(net.input_weights),
        net.input_bias,
        net.output_weights,
        [net.output_bias],
    ]).astype(float)


def unflatten(w, d: int, h: int, normalizer: Optional[Normalizer] = None) -> NarNetwork:
    w = np.asarray(w, dtype=float)
    if w.shape != (n_params(d, h),):
        raise ConfigError(
            f"weight vector has shape {w.shape}, expected ({n_params(d, h)},) for d={d}, h={h}")
    hd = h * d
    return NarNetwork(
        d=d,
        h=h,
        input_weights=w[:hd].reshape(h, d).copy(),
        input_bias=w[hd:hd + h].copy(),
        output_weights=w[hd + h:hd + 2 * h].copy(),
        output_bias=float(w[-1]),
        normalizer=normalizer,
    )


def init_network(d: int, h: int = DEFAULT_HIDDEN, seed: int = 0,
                 scheme: str = "uniform-small",
                 normalizer: Optional[Normalizer] = None) -> NarNetwork:
    """Random initial network.

    ``uniform-small`` draws every weight from U[-0.5, 0.5]. ``nguyen-widrow``
    gives each hidden row a random direction with norm ``0.7 * h**(1/d)`` and
    spreads the biases over the same interval, so the active regions of the
    tanh units tile the normalized input range [-1, 1]; output weights are
    U[-0.5, 0.5] and the output bias starts at zero.
    """
    if d < 1 or h < 1:
        raise ConfigError(f"need d >= 1 and h >= 1, got d={d}, h={h}")
    rng = np.random.default_rng(seed)
    if scheme == "uniform-small":
        w = rng.uniform(-0.5, 0.5, n_params(d, h))
        return unflatten(w, d, h, normalizer)
    if scheme != "nguyen-widrow":
        raise ConfigError(f"unknown init scheme {scheme!r}")
    beta = 0.7 * h ** (1.0 / d)
    rows = rng.uniform(-1.0, 1.0, (h, d))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    rows = beta * rows / norms
    if h > 1:
        bias = beta * np.linspace(-1.0, 1.0, h) * np.sign(rows[:, 0] + (rows[:, 0] == 0))
    else:
        bias = np.zeros(1)
    out_w = rng.uniform(-0.5, 0.5, h)
    return NarNetwork(d, h, rows, bias, out_w, 0.0, normalizer)


def _split(w, d, h):
    hd = h * d
    return (w[:hd].reshape(h, d), w[hd:hd + h], w[hd + h:hd + 2 * h], w[-1])


def evaluate(w, X, d: int, h: int) -> np.ndarray:
    """Network outputs for every row of ``X`` (normalized domain)."""
    W, b, v, c = _split(np.asarray(w, dtype=float), d, h)
    return np.tanh(X @ W.T + b) @ v + c


def forward(net: NarNetwork, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d,):
        raise ConfigError(f"input has shape {x.shape}, expected ({net.d},)")
    return float(evaluate(flatten(net), x[None, :], net.d, net.h)[0])


def residuals(w, X, t, d: int, h: int) -> np.ndarray:
    return t - evaluate(w, X, d, h)


def residuals_and_jacobian(w, X, t, d: int, h: int):
    """Errors ``e = t - y`` and ``J = de/dw`` (one row per sample), by backpropagation."""
    W, b, v, c = _split(np.asarray(w, dtype=float), d, h)
    z = np.tanh(X @ W.T + b)
    e = t - (z @ v + c)
    # de/da_j = -v_j * (1 - z_j^2) for hidden pre-activation a_j
    delta = -(1.0 - z * z) * v
    n = X.shape[0]
    J = np.empty((n, n_params(d, h)))
    hd = h * d
    J[:, :hd] = (delta[:, :, None] * X[:, None, :]).reshape(n, hd)
    J[:, hd:hd + h] = delta
    J[:, hd + h:hd + 2 * h] = -z
    J[:, -1] = -1.0
    return e, J


def sse_gradient(w, X, t, d: int, h: int):
    """``(SSE, dSSE/dw)`` without materialising the Jacobian."""
    W, b, v, c = _split(np.asarray(w, dtype=float), d, h)
    z = np.tanh(X @ W.T + b)
    e = t - (z @ v + c)
    # dSSE/dy = -2e, back through the output and hidden layers
    gy = -2.0 * e
    ga = (gy[:, None] * v) * (1.0 - z * z)
    grad = np.concatenate([
        (ga.T @ X).ravel(),
        ga.sum(axis=0),
        z.T @ gy,
        [gy.sum()],
    ])
    return float(e @ e), grad


def _check_idx(reg: RegressionSet, idx):
    idx = np.asarray(idx, dtype=int).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= reg.n_targets):
        raise DataError(f"target index out of range [0, {reg.n_targets})")
    return idx


def predict_targets(net: NarNetwork, reg: RegressionSet, idx) -> np.ndarray:
    """Open-loop one-step-ahead predictions in original units."""
    idx = _check_idx(reg, idx)
    norm = net.normalizer if net.normalizer is not None else reg.normalizer
    if idx.size == 0:
        return np.empty(0)
    out = evaluate(flatten(net), reg.inputs[idx], net.d, net.h)
    return norm.invert(out)


def errors_and_jacobian(net: NarNetwork, reg: RegressionSet, idx):
    """Normalized-domain errors and Jacobian over the rows ``idx``."""
    idx = _check_idx(reg, idx)
    if idx.size == 0:
        raise DataError("errors_and_jacobian needs at least one sample")
    return residuals_and_jacobian(flatten(net), reg.inputs[idx], reg.targets[idx], net.d, net.h)
