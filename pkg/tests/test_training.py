import json

import numpy as np
import pytest

from narforecast.data import (SCENARIOS, SeriesDataset, ar1_series, embed_lags, fit_normalizer,
                              generate_synthetic, plan_division)
from narforecast.errors import ConfigError, TrainingDivergence
from narforecast.model import flatten, init_network, predict_targets, unflatten
from narforecast.training import (EarlyStopping, TrainConfig, TrainReport, early_stop_update,
                                  lm_epoch, scg_init, scg_iteration, scg_minimize, train,
                                  train_br, train_lm, train_scg)


def linear_lsq(rng, m=30, p=6):
    A, b = rng.normal(size=(m, p)), rng.normal(size=m)
    return A, b, (lambda w: (b - A @ w, -A))


def random_quadratic(rng, p, cond=10.0):
    Q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    A = Q @ np.diag(np.geomspace(1.0, cond, p)) @ Q.T
    b = rng.normal(size=p)
    return A, b, (lambda w: (0.5 * w @ A @ w - b @ w, A @ w - b))


# -- config -----------------------------------------------------------------

def test_config_defaults():
    c = TrainConfig()
    assert (c.max_epochs, c.max_val_fail, c.min_gradient) == (1000, 6, 1e-7)
    assert (c.mu0, c.mu_inc, c.mu_dec, c.mu_max) == (1e-3, 10, 0.1, 1e10)
    assert (c.sigma0, c.lambda0) == (5e-5, 5e-7)


@pytest.mark.parametrize("kw", [dict(mu_dec=1.5), dict(mu_inc=0.5), dict(max_val_fail=0),
                                dict(min_gradient=0), dict(algorithm="adam"),
                                dict(max_epochs=-1)])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_config_round_trip():
    c = TrainConfig(algorithm="br", max_epochs=12)
    assert c.algorithm == "BR"
    assert TrainConfig.from_dict(c.to_dict()) == c


# -- early stopping ---------------------------------------------------------

def test_early_stop_never_on_decreasing():
    es = EarlyStopping(6)
    assert all(es.update(v) == "continue" for v in np.linspace(1.0, 0.01, 100))


def test_early_stop_sixth_failure():
    es = EarlyStopping(6)
    decisions = [early_stop_update(es, v, np.array([k]), k)
                 for k, v in enumerate([1.0, 1.2, 1.0, 1.1, 1.3, 1.0], start=1)]
    assert decisions == ["continue"] * 6
    assert early_stop_update(es, 1.05, np.array([7]), 7) == "stop"
    assert es.fails == 6 and es.best_epoch == 1
    np.testing.assert_array_equal(es.best_weights, [1])


def test_early_stop_resets_on_improvement():
    es = EarlyStopping(3)
    for v in (1.0, 2.0, 2.0, 0.5, 2.0, 2.0):
        assert es.update(v) == "continue"
    assert es.update(2.0) == "stop"
    assert es.best == 0.5


# -- lm_epoch ---------------------------------------------------------------

def test_lm_small_mu_is_gauss_newton(rng):
    A, b, fn = linear_lsq(rng)
    step = lm_epoch(fn, rng.normal(size=6), 1e-8)
    oracle = np.linalg.lstsq(A, b, rcond=None)[0]
    assert step.accepted
    np.testing.assert_allclose(step.w, oracle, rtol=0, atol=1e-7)


def test_lm_one_sample_quadratic():
    # e(w) = 3 - 2w, SSE minimised at w = 1.5; Gauss-Newton is exact
    fn = lambda w: (np.array([3.0 - 2.0 * w[0]]), np.array([[-2.0]]))
    step = lm_epoch(fn, np.array([10.0]), 1e-10)
    assert step.w[0] == pytest.approx(1.5, abs=1e-9)


def test_lm_accepted_step_decreases_sse(rng):
    _, _, fn = linear_lsq(rng)
    w0 = rng.normal(size=6)
    e0, _ = fn(w0)
    step = lm_epoch(fn, w0, 1e-3)
    assert step.accepted and step.sse < float(e0 @ e0)
    assert step.mu == pytest.approx(1e-4)


def test_lm_large_mu_is_gradient_direction(rng):
    _, _, fn = linear_lsq(rng)
    w0 = rng.normal(size=6)
    e, J = fn(w0)
    step = lm_epoch(fn, w0, 1e9, TrainConfig(mu_max=1e12))
    d, g = step.w - w0, -(J.T @ e)
    assert d @ g / np.linalg.norm(d) / np.linalg.norm(g) > 0.999


def test_lm_mu_max_when_no_descent():
    # Jacobian with the wrong sign: every trial step moves uphill
    fn = lambda w: (w.copy(), -np.eye(w.size))
    w0 = np.array([1.0, -2.0])
    step = lm_epoch(fn, w0, 1e-3, TrainConfig(mu_max=1e3))
    assert not step.accepted and step.mu > 1e3
    np.testing.assert_array_equal(step.w, w0)


def test_lm_gradient_norm_definition(rng):
    _, _, fn = linear_lsq(rng)
    step = lm_epoch(fn, rng.normal(size=6), 1e-2)
    e, J = fn(step.w)
    assert step.gradient_norm == pytest.approx(np.max(np.abs(2 * J.T @ e)), rel=1e-12)


# -- SCG --------------------------------------------------------------------

@pytest.mark.parametrize("p", [3, 8, 20, 41])
def test_scg_quadratic_converges(rng, p):
    A, b, fun = random_quadratic(rng, p)
    state, it = scg_minimize(fun, np.zeros(p), max_iter=p + 5, min_gradient=1e-6)
    assert np.max(np.abs(state.r)) < 1e-6
    np.testing.assert_allclose(state.w, np.linalg.solve(A, b), atol=1e-5)


def test_scg_rejects_overshoot():
    # Newton-like step on |w|^1.2 from w=1 lands at w=-4 with a larger value
    fun = lambda w: (abs(w[0]) ** 1.2, np.array([1.2 * np.sign(w[0]) * abs(w[0]) ** 0.2]))
    s = scg_init(fun, np.array([1.0]))
    lam0 = s.lam
    accepted = scg_iteration(s, fun)
    assert not accepted and s.comparison < 0
    assert s.w[0] == 1.0
    assert s.lam > lam0


def test_scg_lambda_stays_positive(rng):
    _, _, fun = random_quadratic(rng, 5)
    s = scg_init(fun, np.ones(5))
    for _ in range(200):
        scg_iteration(s, fun)
        assert s.lam > 0


# -- train ------------------------------------------------------------------

@pytest.mark.parametrize("algo", ["LM", "BR", "SCG"])
def test_zero_epochs_returns_initial(small_problem, algo):
    _, reg, plan = small_problem
    net = init_network(2, 10, seed=1)
    rep = train(net, reg, plan, TrainConfig(algorithm=algo, max_epochs=0))
    assert rep.epochs_run == 0 and rep.stop_reason == "max_epochs" and rep.history == []
    np.testing.assert_array_equal(flatten(rep.final_network), flatten(net))


@pytest.mark.parametrize("algo", ["LM", "BR", "SCG"])
def test_train_deterministic(small_problem, algo):
    _, reg, plan = small_problem
    cfg = TrainConfig(algorithm=algo, max_epochs=60)
    a = train(init_network(2, 10, seed=4), reg, plan, cfg)
    b = train(init_network(2, 10, seed=4), reg, plan, cfg)
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("algo", ["LM", "BR", "SCG"])
def test_report_invariants(small_problem, algo):
    _, reg, plan = small_problem
    rep = train(init_network(2, 10, seed=2), reg, plan, TrainConfig(algorithm=algo, max_epochs=150))
    assert len(rep.history) == rep.epochs_run
    assert 1 <= rep.best_epoch <= rep.epochs_run
    val = rep.column("val_mse")
    assert val[rep.best_epoch - 1] == val.min()
    # final network is the best-validation snapshot
    pred = predict_targets(rep.final_network, reg, plan.val_idx)
    mse = np.mean((reg.raw_targets[plan.val_idx] - pred) ** 2)
    assert mse == pytest.approx(val.min(), rel=1e-9)
    assert rep.stop_reason in ("max_epochs", "min_gradient", "max_val_fail", "mu_max", "converged")


def test_lm_sse_strictly_decreasing(small_problem):
    _, reg, plan = small_problem
    rep = train_lm(init_network(2, 10, seed=0), reg, plan, TrainConfig(early_stopping=False, max_epochs=80))
    sse = rep.column("train_sse")
    assert np.all(np.diff(sse) < 0)


def test_scg_sse_non_increasing(small_problem):
    _, reg, plan = small_problem
    rep = train_scg(init_network(2, 10, seed=0), reg, plan,
                    TrainConfig(algorithm="SCG", early_stopping=False, max_epochs=300))
    sse = rep.column("train_sse")
    assert np.all(np.diff(sse) <= 0)
    assert np.all(rep.column("damping") > 0)


def test_br_state_invariants(small_problem):
    _, reg, plan = small_problem
    rep = train_br(init_network(2, 10, seed=0), reg, plan,
                   TrainConfig(algorithm="BR", early_stopping=False, max_epochs=80))
    P = 41
    alpha, beta, gamma = rep.column("alpha"), rep.column("beta"), rep.column("gamma")
    assert np.all(alpha > 0) and np.all(beta > 0)
    assert np.all((gamma >= 0) & (gamma <= P))
    assert np.all(rep.column("f_after") < rep.column("f_before"))


def test_br_first_epoch_is_plain_lm(small_problem):
    _, reg, plan = small_problem
    net = init_network(2, 10, seed=6)
    lm = train(net, reg, plan, TrainConfig(algorithm="LM", max_epochs=1))
    br = train(net, reg, plan, TrainConfig(algorithm="BR", max_epochs=1))
    np.testing.assert_array_equal(flatten(lm.final_network), flatten(br.final_network))
    assert lm.history[0].train_sse == br.history[0].train_sse


def test_br_gamma_noise_below_structure():
    base = generate_synthetic(2000, seed=3)
    reg = embed_lags(base, 2, fit_normalizer(base.values))
    plan = plan_division(reg.n_targets, SCENARIOS["scenario5"], seed=0)
    shuffled = SeriesDataset(np.random.default_rng(0).permutation(base.values))
    reg_noise = embed_lags(shuffled, 2, fit_normalizer(shuffled.values))
    cfg = TrainConfig(algorithm="BR", early_stopping=False, max_epochs=100)
    g_struct = train(init_network(2, 10, seed=0), reg, plan, cfg).column("gamma")[-1]
    g_noise = train(init_network(2, 10, seed=0), reg_noise, plan, cfg).column("gamma")[-1]
    # pinned from one run of each
    assert g_struct == pytest.approx(6.630580495076915, rel=1e-6)
    assert g_noise == pytest.approx(0.7015685692944355, rel=1e-6)
    assert g_noise <= g_struct


@pytest.mark.parametrize("algo", ["LM", "BR", "SCG"])
def test_min_gradient_stop(small_problem, algo):
    _, reg, plan = small_problem
    rep = train(init_network(2, 10, seed=0), reg, plan, TrainConfig(algorithm=algo, min_gradient=1e6))
    assert rep.stop_reason == "min_gradient" and rep.epochs_run == 0


def test_gradient_stop_after_epochs(small_problem):
    _, reg, plan = small_problem
    rep = train(init_network(2, 10, seed=0), reg, plan,
                TrainConfig(min_gradient=5.0, early_stopping=False))
    assert rep.stop_reason == "min_gradient"
    assert rep.history[-1].gradient < 5.0
    assert all(r.gradient >= 5.0 for r in rep.history[:-1])


def test_validation_stop_uses_six_checks(small_problem):
    _, reg, plan = small_problem
    rep = train(init_network(2, 10, seed=0), reg, plan, TrainConfig(max_epochs=1000))
    if rep.stop_reason == "max_val_fail":
        assert rep.epochs_run - rep.best_epoch == 6


def test_non_finite_raises(small_problem):
    _, reg, plan = small_problem
    w = np.zeros(41)
    w[-1] = np.inf
    with pytest.raises(TrainingDivergence, match="epoch 0"):
        train(unflatten(w, 2, 10), reg, plan, TrainConfig())


def test_lm_converges_on_ar1():
    s = ar1_series(2000)
    reg = embed_lags(s, 2, fit_normalizer(s.values))
    plan = plan_division(reg.n_targets, SCENARIOS["scenario7"], seed=1)
    rep = train(init_network(2, 10, seed=1), reg, plan, TrainConfig(max_epochs=200))
    assert rep.history[rep.best_epoch - 1].train_mse < 1e-6


def test_report_json_round_trip(small_problem):
    _, reg, plan = small_problem
    rep = train(init_network(2, 10, seed=0), reg, plan, TrainConfig(algorithm="BR", max_epochs=5))
    back = TrainReport.from_dict(json.loads(rep.to_json()))
    assert back.to_json() == rep.to_json()
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"config", "history", "stop_reason", "best_epoch", "final_network"}
