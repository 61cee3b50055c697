import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narforecast.data import Normalizer, SeriesDataset, embed_lags, fit_normalizer
from narforecast.errors import ConfigError, DataError
from narforecast.model import (NarNetwork, errors_and_jacobian, flatten, forward,
                               init_network, load_network, n_params, predict_targets,
                               residuals, save_network, sse_gradient, unflatten)


def loop_forward(net, x):
    """Straight-line evaluation used as an independent oracle."""
    out = net.output_bias
    for j in range(net.h):
        a = net.input_bias[j]
        for k in range(net.d):
            a += net.input_weights[j, k] * x[k]
        out += net.output_weights[j] * math.tanh(a)
    return out


def central_difference_jacobian(w, X, t, d, h, step=1e-6):
    J = np.empty((X.shape[0], w.size))
    for p in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[p] += step
        wm[p] -= step
        J[:, p] = (residuals(wp, X, t, d, h) - residuals(wm, X, t, d, h)) / (2 * step)
    return J


def column_rel_error(J, F):
    scale = np.maximum(np.max(np.abs(F), axis=0), 1e-12)
    return np.max(np.abs(J - F), axis=0) / scale


# -- init / layout ----------------------------------------------------------

@pytest.mark.parametrize("scheme", ["uniform-small", "nguyen-widrow"])
def test_init_deterministic(scheme):
    a = init_network(2, 10, seed=4, scheme=scheme)
    b = init_network(2, 10, seed=4, scheme=scheme)
    assert a.equals(b)
    assert not np.array_equal(flatten(a), flatten(init_network(2, 10, seed=5, scheme=scheme)))


def test_param_count():
    net = init_network(2, 10)
    assert net.n_params == n_params(2, 10) == 41
    assert flatten(net).size == 41


def test_uniform_small_range():
    w = flatten(init_network(3, 5, seed=0, scheme="uniform-small"))
    assert np.all(np.abs(w) <= 0.5)


def test_nguyen_widrow_row_norms():
    net = init_network(2, 10, seed=0, scheme="nguyen-widrow")
    beta = 0.7 * 10 ** 0.5
    np.testing.assert_allclose(np.linalg.norm(net.input_weights, axis=1), beta)
    assert np.max(np.abs(net.input_bias)) == pytest.approx(beta)


def test_init_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        init_network(0, 3)
    with pytest.raises(ConfigError):
        init_network(2, 3, scheme="xavier")


def test_flatten_layout_and_round_trip():
    net = init_network(3, 4, seed=1)
    w = flatten(net)
    np.testing.assert_array_equal(w[:12], net.input_weights.ravel())
    np.testing.assert_array_equal(w[12:16], net.input_bias)
    np.testing.assert_array_equal(w[16:20], net.output_weights)
    assert w[20] == net.output_bias
    assert unflatten(w, 3, 4).equals(net)


def test_unflatten_wrong_length():
    with pytest.raises(ConfigError):
        unflatten(np.zeros(40), 2, 10)


def test_zero_vector_is_zero_network():
    net = unflatten(np.zeros(41), 2, 10)
    assert not np.any(net.input_weights) and net.output_bias == 0.0
    assert forward(net, [0.3, -0.7]) == 0.0


# -- forward ----------------------------------------------------------------

def test_constant_network():
    w = np.zeros(41)
    w[-1] = 0.37
    assert forward(unflatten(w, 2, 10), [0.9, -0.2]) == 0.37


def test_forward_matches_loop_oracle(rng):
    for _ in range(20):
        d, h = rng.integers(1, 5), rng.integers(1, 8)
        net = unflatten(rng.normal(size=n_params(d, h)), d, h)
        x = rng.uniform(-1, 1, d)
        assert abs(forward(net, x) - loop_forward(net, x)) <= 1e-12


def test_forward_shape_check():
    with pytest.raises(ConfigError):
        forward(init_network(2, 3), [1.0, 2.0, 3.0])


@settings(max_examples=100)
@given(st.integers(0, 10**6), st.floats(-50, 50), st.floats(-50, 50))
def test_forward_output_bound(seed, x1, x2):
    r = np.random.default_rng(seed)
    net = unflatten(r.normal(scale=3, size=41), 2, 10)
    bound = abs(net.output_bias) + np.sum(np.abs(net.output_weights))
    assert abs(forward(net, [x1, x2])) <= bound + 1e-12


# -- predict_targets --------------------------------------------------------

def _linear_series():
    values = 60.0 + 0.05 * np.arange(200)
    ds = SeriesDataset(values)
    norm = fit_normalizer(values)
    return ds, norm, embed_lags(ds, 2, norm)


def test_predict_empty_index():
    _, _, reg = _linear_series()
    assert predict_targets(init_network(2, 3), reg, []).size == 0


def test_predict_perfect_linear_network():
    ds, norm, reg = _linear_series()
    # y[t] = y[t-1] + 0.05, i.e. z[t] = z[t-1] + step in normalized units
    step = 2 * 0.05 / (norm.x_max - norm.x_min)
    eps = 1e-5
    net = NarNetwork(2, 1, np.array([[eps, 0.0]]), np.zeros(1), np.array([1 / eps]), step, norm)
    idx = np.arange(reg.n_targets)
    np.testing.assert_allclose(predict_targets(net, reg, idx), reg.raw_targets, rtol=0, atol=1e-8)


def test_predict_zero_network_gives_midpoint():
    _, norm, reg = _linear_series()
    net = unflatten(np.zeros(41), 2, 10, norm)
    pred = predict_targets(net, reg, [0, 5, 9])
    np.testing.assert_allclose(pred, (norm.x_min + norm.x_max) / 2)


def test_predict_index_out_of_range():
    _, norm, reg = _linear_series()
    with pytest.raises(DataError):
        predict_targets(init_network(2, 3, normalizer=norm), reg, [reg.n_targets])


# -- Jacobian ---------------------------------------------------------------

def test_output_bias_column_is_minus_one(small_problem):
    _, reg, plan = small_problem
    _, J = errors_and_jacobian(init_network(2, 10, seed=2), reg, plan.train_idx)
    assert np.all(J[:, -1] == -1.0)


def test_jacobian_matches_central_differences(rng):
    for _ in range(10):
        d, h, n = rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 21)
        w = rng.normal(size=n_params(d, h))
        X, t = rng.uniform(-1, 1, (n, d)), rng.uniform(-1, 1, n)
        from narforecast.model import residuals_and_jacobian
        e, J = residuals_and_jacobian(w, X, t, d, h)
        F = central_difference_jacobian(w, X, t, d, h)
        assert np.max(column_rel_error(J, F)) < 1e-5
        np.testing.assert_array_equal(e, residuals(w, X, t, d, h))


def test_half_sse_gradient_is_jacobian_transpose_error(rng):
    from narforecast.model import residuals_and_jacobian
    for _ in range(10):
        d, h, n = rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 40)
        w = rng.normal(size=n_params(d, h))
        X, t = rng.uniform(-1, 1, (n, d)), rng.uniform(-1, 1, n)
        e, J = residuals_and_jacobian(w, X, t, d, h)
        sse, grad = sse_gradient(w, X, t, d, h)
        assert sse == pytest.approx(float(e @ e), rel=1e-14)
        # J = de/dw, so d(SSE/2)/dw = J'e (= -J_y'e for J_y = dy/dw)
        np.testing.assert_allclose(0.5 * grad, J.T @ e, rtol=0, atol=1e-10)


def test_errors_and_jacobian_requires_samples(small_problem):
    _, reg, _ = small_problem
    with pytest.raises(DataError):
        errors_and_jacobian(init_network(2, 3), reg, [])


# -- snapshots --------------------------------------------------------------

def test_network_json_round_trip(tmp_path):
    net = init_network(2, 10, seed=8, normalizer=Normalizer(48.5, 101.25))
    save_network(net, tmp_path / "net.json")
    doc = json.loads((tmp_path / "net.json").read_text())
    assert doc["layout_version"] == 1 and doc["d"] == 2 and doc["h"] == 10
    assert load_network(tmp_path / "net.json").equals(net)


def test_network_json_rejects_unknown_layout(tmp_path):
    doc = init_network(2, 3).to_dict()
    doc["layout_version"] = 99
    with pytest.raises(DataError):
        NarNetwork.from_dict(doc)
