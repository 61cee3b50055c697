"""Levenberg-Marquardt, Bayesian regularization and scaled conjugate gradient trainers.

All three share one epoch loop (:func:`_train_loop`) that evaluates the
train/validation/test MSE after every epoch, applies validation early
stopping and restores the best-validation weights at the end. Trainers work
on the normalized targets; MSE values stored in the history are converted to
original units with the normalizer's scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional

import numpy as np

from .data import DivisionPlan, RegressionSet
from .errors import ConfigError, DataError, TrainingDivergence
from .model import (NarNetwork, evaluate, flatten, residuals_and_jacobian,
                    sse_gradient, unflatten)

ALGORITHMS = ("LM", "BR", "SCG")
STOP_REASONS = ("max_epochs", "min_gradient", "max_val_fail", "mu_max", "converged")


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "LM"
    max_epochs: int = 1000
    max_val_fail: int = 6
    min_gradient: float = 1e-7
    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    sigma0: float = 5e-5
    lambda0: float = 5e-7
    early_stopping: bool = True
    seed: int = 0

    def __post_init__(self):
        algo = str(self.algorithm).upper()
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        object.__setattr__(self, "algorithm", algo)
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.max_val_fail < 1:
            raise ConfigError("max_val_fail must be >= 1")
        if not (0 < self.mu_dec < 1 < self.mu_inc):
            raise ConfigError("need 0 < mu_dec < 1 < mu_inc")
        for name in ("min_gradient", "mu0", "mu_max", "sigma0", "lambda0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.mu0 > self.mu_max:
            raise ConfigError("mu0 must not exceed mu_max")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    test_mse: float
    train_sse: float
    gradient: float
    damping: float
    accepted: bool = True
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    e_w: Optional[float] = None
    e_d: Optional[float] = None
    f_before: Optional[float] = None
    f_after: Optional[float] = None


@dataclass
class TrainReport:
    algorithm: str
    config: TrainConfig
    epochs_run: int
    stop_reason: str
    best_epoch: int
    history: List[EpochRecord]
    final_network: NarNetwork

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.history], dtype=float)

    def to_dict(self):
        return {
            "algorithm": self.algorithm,
            "config": self.config.to_dict(),
            "epochs_run": self.epochs_run,
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
            "history": [asdict(r) for r in self.history],
            "final_network": self.final_network.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), allow_nan=True, **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(
            algorithm=d["algorithm"],
            config=TrainConfig.from_dict(d["config"]),
            epochs_run=d["epochs_run"],
            stop_reason=d["stop_reason"],
            best_epoch=d["best_epoch"],
            history=[EpochRecord(**r) for r in d["history"]],
            final_network=NarNetwork.from_dict(d["final_network"]),
        )


class EarlyStopping:
    """Validation-check counter with best-weight snapshot.

    A check fails when the validation MSE does not strictly improve on the
    best seen so far; ``max_fail`` consecutive failures stop training.
    """

    def __init__(self, max_fail: int = 6):
        self.max_fail = max_fail
        self.best = math.inf
        self.best_epoch = 0
        self.best_weights = None
        self.fails = 0

    def update(self, val_mse: float, weights=None, epoch: int = 0) -> str:
        if not math.isfinite(val_mse):
            raise DataError(f"validation MSE is not finite at epoch {epoch}")
        if val_mse < self.best:
            self.best = val_mse
            self.best_epoch = epoch
            self.best_weights = None if weights is None else np.array(weights, copy=True)
            self.fails = 0
        else:
            self.fails += 1
        return "stop" if self.fails >= self.max_fail else "continue"


def early_stop_update(state: EarlyStopping, val_mse: float, weights=None, epoch: int = 0) -> str:
    return state.update(val_mse, weights, epoch)


# --------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclass
class LMStep:
    w: np.ndarray
    sse: float
    mu: float
    gradient_norm: float
    accepted: bool
    e: np.ndarray
    J: np.ndarray


def _damped_solve(A, g, mu):
    try:
        step = np.linalg.solve(A + mu * np.eye(A.shape[0]), -g)
    except np.linalg.LinAlgError:
        return None
    return step if np.all(np.isfinite(step)) else None


def lm_epoch(residual_fn: Callable, w, mu: float, config: TrainConfig = TrainConfig(),
             current=None) -> LMStep:
    """One LM epoch on ``SSE(w) = e(w) @ e(w)``.

    ``residual_fn(w)`` returns ``(e, J)`` with ``J = de/dw``. The damped
    system ``(J'J + mu I) step = -J'e`` is re-solved with ``mu *= mu_inc``
    until the SSE strictly decreases; ``mu`` then shrinks by ``mu_dec``. If
    ``mu`` passes ``mu_max`` first, the original point is returned with
    ``accepted=False``. ``gradient_norm`` is ``max|2 J'e|`` at the returned
    point.
    """
    w = np.asarray(w, dtype=float)
    e, J = residual_fn(w) if current is None else current
    sse = float(e @ e)
    g = J.T @ e
    A = J.T @ J
    while True:
        step = _damped_solve(A, g, mu)
        if step is not None:
            w_try = w + step
            e_try, J_try = residual_fn(w_try)
            sse_try = float(e_try @ e_try)
            if sse_try < sse:
                grad = float(np.max(np.abs(2.0 * (J_try.T @ e_try))))
                return LMStep(w_try, sse_try, mu * config.mu_dec, grad, True, e_try, J_try)
        mu *= config.mu_inc
        if mu > config.mu_max:
            return LMStep(w, sse, mu, float(np.max(np.abs(2.0 * g))), False, e, J)


# --------------------------------------------------------------------------
# Scaled conjugate gradient


@dataclass
class ScgState:
    """Iterate of Moller's scaled conjugate gradient method."""

    w: np.ndarray
    value: float
    r: np.ndarray  # negative gradient at w
    p: np.ndarray  # search direction
    lam: float
    lam_bar: float = 0.0
    delta: float = 0.0
    success: bool = True
    k: int = 0
    comparison: float = float("nan")


def scg_init(fun: Callable, w0, lambda0: float = 5e-7) -> ScgState:
    w = np.array(w0, dtype=float)
    value, grad = fun(w)
    return ScgState(w=w, value=float(value), r=-grad, p=-grad.copy(), lam=lambda0)


def scg_iteration(state: ScgState, fun: Callable, sigma0: float = 5e-5,
                  restart: Optional[int] = None) -> bool:
    """Advance ``state`` by one iteration in place; return whether the step was accepted.

    ``fun(w)`` returns ``(value, gradient)``. Curvature along ``p`` comes from
    a finite difference of gradients with step ``sigma0 / |p|``. The
    comparison ratio decides acceptance (``> 0``) and rescales ``lam``
    (halved above 0.75, quadrupled below 0.25). The direction restarts at
    steepest descent every ``restart`` iterations (default: dimension).
    """
    s = state
    restart = restart or s.w.size
    pn2 = float(s.p @ s.p)
    if s.success:
        sigma = sigma0 / math.sqrt(pn2)
        _, g_sig = fun(s.w + sigma * s.p)
        s.delta = float(s.p @ (g_sig + s.r)) / sigma
    s.delta += (s.lam - s.lam_bar) * pn2
    if s.delta <= 0:
        s.lam_bar = 2.0 * (s.lam - s.delta / pn2)
        s.delta = -s.delta + s.lam * pn2
        s.lam = s.lam_bar
    mu = float(s.p @ s.r)
    alpha = mu / s.delta
    w_new = s.w + alpha * s.p
    value_new, g_new = fun(w_new)
    comparison = 2.0 * s.delta * (s.value - value_new) / (mu * mu)
    s.comparison = comparison
    s.k += 1
    accepted = comparison > 0
    if accepted:
        r_new = -g_new
        s.w, s.value, s.lam_bar, s.success = w_new, float(value_new), 0.0, True
        if s.k % restart == 0:
            s.p = r_new.copy()
        else:
            beta = (float(r_new @ r_new) - float(r_new @ s.r)) / mu
            s.p = r_new + beta * s.p
        s.r = r_new
        if float(s.p @ s.r) <= 0:
            s.p = s.r.copy()
        if comparison > 0.75:
            s.lam *= 0.5
    else:
        s.lam_bar = s.lam
        s.success = False
    if comparison < 0.25:
        s.lam *= 4.0
    # keep lam strictly positive after long runs of halving
    s.lam = max(s.lam, 1e-300)
    return accepted


def scg_minimize(fun: Callable, w0, max_iter: int = 1000, min_gradient: float = 1e-10,
                 sigma0: float = 5e-5, lambda0: float = 5e-7):
    """Run SCG on an arbitrary smooth objective; returns ``(state, n_iterations)``."""
    state = scg_init(fun, w0, lambda0)
    it = 0
    while it < max_iter and np.max(np.abs(state.r)) >= min_gradient:
        scg_iteration(state, fun, sigma0)
        it += 1
    return state, it


# --------------------------------------------------------------------------
# Shared epoch loop


@dataclass
class _Outcome:
    w: np.ndarray
    sse: float
    gradient: float
    damping: float
    accepted: bool = True
    stop: Optional[str] = None
    extra: dict = field(default_factory=dict)


class _LMStepper:
    def __init__(self, X, t, d, h, config):
        self.fn = lambda w: residuals_and_jacobian(w, X, t, d, h)
        self.config = config
        self.mu = config.mu0
        self.current = None

    def start(self, w):
        self.current = self.fn(w)
        e, J = self.current
        with np.errstate(invalid="ignore", over="ignore"):  # caller checks finiteness
            return float(np.max(np.abs(2.0 * (J.T @ e))))

    def step(self, w):
        out = lm_epoch(self.fn, w, self.mu, self.config, self.current)
        if not out.accepted:
            return _Outcome(w, out.sse, out.gradient_norm, out.mu, False, "mu_max")
        self.mu = out.mu
        self.current = (out.e, out.J)
        stop = "converged" if out.sse == 0.0 else None
        return _Outcome(out.w, out.sse, out.gradient_norm, self.mu, True, stop)


class _BRStepper:
    """LM on ``F = beta*E_D + alpha*E_W`` with evidence updates of alpha and beta.

    ``E_D = SSE/2`` and ``E_W = |w|^2/2``. After each accepted step the
    effective parameter count ``gamma = P - alpha*trace(H^-1)`` with
    ``H = beta*J'J + alpha*I`` gives ``alpha = gamma/(2 E_W)`` and
    ``beta = (N - gamma)/(2 E_D)``. Starting at ``alpha=0, beta=1`` makes the
    first epoch a plain LM epoch.
    """

    def __init__(self, X, t, d, h, config):
        self.fn = lambda w: residuals_and_jacobian(w, X, t, d, h)
        self.config = config
        self.n = X.shape[0]
        self.mu = config.mu0
        self.alpha, self.beta = 0.0, 1.0
        self.current = None

    def objective(self, e, w):
        return self.beta * 0.5 * float(e @ e) + self.alpha * 0.5 * float(w @ w)

    def _grad_norm(self, e, J, w):
        return float(np.max(np.abs(2.0 * (self.beta * (J.T @ e) + self.alpha * w))))

    def start(self, w):
        self.current = self.fn(w)
        return self._grad_norm(*self.current, w)

    def step(self, w):
        cfg = self.config
        e, J = self.current
        P = w.size
        f_before = self.objective(e, w)
        g = self.beta * (J.T @ e) + self.alpha * w
        A = self.beta * (J.T @ J) + self.alpha * np.eye(P)
        mu = self.mu
        while True:
            step = _damped_solve(A, g, mu)
            if step is not None:
                w_try = w + step
                e_try, J_try = self.fn(w_try)
                f_after = self.objective(e_try, w_try)
                if f_after < f_before:
                    break
            mu *= cfg.mu_inc
            if mu > cfg.mu_max:
                return _Outcome(w, float(e @ e), self._grad_norm(e, J, w), mu, False, "mu_max")
        self.mu = mu * cfg.mu_dec
        self.current = (e_try, J_try)
        sse = float(e_try @ e_try)
        e_d = 0.5 * sse
        e_w = 0.5 * float(w_try @ w_try)
        eig = np.clip(np.linalg.eigvalsh(self.beta * (J_try.T @ J_try)), 0.0, None)
        if self.alpha > 0:
            gamma = float(np.sum(eig / (eig + self.alpha)))
        else:
            gamma = float(P)
        gamma = min(max(gamma, 0.0), float(P))
        stop = None
        if e_w > 0:
            self.alpha = gamma / (2.0 * e_w)
        if e_d == 0.0:
            stop = "converged"
        else:
            # keep beta positive when gamma reaches the sample count
            self.beta = max(self.n - gamma, 1e-12 * self.n) / (2.0 * e_d)
        extra = dict(alpha=self.alpha, beta=self.beta, gamma=gamma, e_w=e_w, e_d=e_d,
                     f_before=f_before, f_after=f_after)
        return _Outcome(w_try, sse, self._grad_norm(e_try, J_try, w_try), self.mu, True, stop, extra)


class _SCGStepper:
    def __init__(self, X, t, d, h, config):
        def half_sse(w):
            sse, grad = sse_gradient(w, X, t, d, h)
            return 0.5 * sse, 0.5 * grad

        self.fn = half_sse
        self.config = config
        self.state = None

    def start(self, w):
        self.state = scg_init(self.fn, w, self.config.lambda0)
        return float(np.max(np.abs(2.0 * self.state.r)))

    def step(self, w):
        s = self.state
        accepted = scg_iteration(s, self.fn, self.config.sigma0)
        if not (math.isfinite(s.value) and math.isfinite(s.delta)):
            return _Outcome(s.w, math.nan, math.nan, s.lam, accepted)
        grad = float(np.max(np.abs(2.0 * s.r)))
        stop = "converged" if grad == 0.0 else None
        return _Outcome(s.w.copy(), 2.0 * s.value, grad, s.lam, accepted, stop,
                        dict(comparison=s.comparison))


_STEPPERS = {"LM": _LMStepper, "BR": _BRStepper, "SCG": _SCGStepper}


def _mse(w, X, t, d, h, scale2):
    if X.shape[0] == 0:
        return math.nan
    e = t - evaluate(w, X, d, h)
    return float(e @ e) / e.size * scale2


def train(net: NarNetwork, reg: RegressionSet, plan: DivisionPlan,
          config: TrainConfig = TrainConfig()) -> TrainReport:
    """Train ``net`` on ``plan.train_idx`` and return the best-validation network.

    MSE values in the history are in original units (normalized MSE times
    the squared half-range of ``reg.normalizer``).
    """
    if net.d != reg.d:
        raise ConfigError(f"network expects d={net.d} lags, data has d={reg.d}")
    for name in ("train_idx", "val_idx", "test_idx"):
        idx = getattr(plan, name)
        if idx.size and (idx.min() < 0 or idx.max() >= reg.n_targets):
            raise DataError(f"{name} out of range for {reg.n_targets} targets")
    if plan.train_idx.size == 0:
        raise DataError("empty training set")

    d, h = net.d, net.h
    X, t = reg.inputs, reg.targets
    sets = {k: (X[i], t[i]) for k, i in
            (("train", plan.train_idx), ("val", plan.val_idx), ("test", plan.test_idx))}
    scale2 = reg.normalizer.half_range ** 2
    stepper = _STEPPERS[config.algorithm](*sets["train"], d, h, config)
    have_val = plan.val_idx.size > 0

    w = flatten(net)
    stopper = EarlyStopping(config.max_val_fail)
    history: List[EpochRecord] = []
    grad = stepper.start(w)
    if not math.isfinite(grad):
        raise TrainingDivergence(0, "non-finite gradient")

    stop_reason = None
    if config.max_epochs == 0:
        stop_reason = "max_epochs"
    elif grad < config.min_gradient:
        stop_reason = "min_gradient"
    epoch = 0
    while stop_reason is None:
        out = stepper.step(w)
        if out.stop == "mu_max":
            stop_reason = "mu_max"
            break
        epoch += 1
        if not (math.isfinite(out.sse) and np.all(np.isfinite(out.w))):
            raise TrainingDivergence(epoch)
        w = out.w
        mses = {k: _mse(w, Xs, ts, d, h, scale2) for k, (Xs, ts) in sets.items()}
        history.append(EpochRecord(
            epoch=epoch, train_mse=mses["train"], val_mse=mses["val"],
            test_mse=mses["test"], train_sse=out.sse, gradient=out.gradient,
            damping=out.damping, accepted=out.accepted,
            **{k: v for k, v in out.extra.items() if k != "comparison"}))
        decision = stopper.update(mses["val"], w, epoch) if have_val else "continue"
        if out.stop:
            stop_reason = out.stop
        elif decision == "stop" and config.early_stopping:
            stop_reason = "max_val_fail"
        elif out.gradient < config.min_gradient:
            stop_reason = "min_gradient"
        elif epoch >= config.max_epochs:
            stop_reason = "max_epochs"

    if have_val and stopper.best_weights is not None:
        best_w, best_epoch = stopper.best_weights, stopper.best_epoch
    else:
        best_w, best_epoch = w, epoch
    final = unflatten(best_w, d, h, reg.normalizer)
    return TrainReport(config.algorithm, config, epoch, stop_reason, best_epoch, history, final)


def train_lm(net, reg, plan, config=TrainConfig()):
    return train(net, reg, plan, _with_algorithm(config, "LM"))


def train_br(net, reg, plan, config=TrainConfig(algorithm="BR")):
    return train(net, reg, plan, _with_algorithm(config, "BR"))


def train_scg(net, reg, plan, config=TrainConfig(algorithm="SCG")):
    return train(net, reg, plan, _with_algorithm(config, "SCG"))


def _with_algorithm(config, algorithm):
    if config.algorithm == algorithm:
        return config
    return TrainConfig.from_dict({**config.to_dict(), "algorithm": algorithm})
