import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings, strategies as st

from rstc.history import DelayedSignal
from rstc.predictor import (DisturbanceBounds, Predictor, input_cell_weights, predict_full,
                            predict_observed, prediction_error_bounds)

DT = 0.01


def _forward(M, x, cells, r):
    """Exact propagation over ZOH input cells with constant r (scipy oracle)."""
    n = M.n
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = M.A
    aug[:n, n] = M.B[:, 0]
    aug[:n, n + 1] = M.D[:, 0]
    step = sl.expm(aug * DT)
    z = np.concatenate((x, [0.0, r]))
    for u in cells:
        z[n] = u
        z = step @ z
    return z[:n]


def _history(values, tau):
    sig = DelayedSignal(DT, max(tau, DT))
    for v in values:
        sig.push(v)
    return sig


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.01, 0.2, 0.4, 0.8]))
def test_prediction_exact_for_constant_disturbance(mats, seed, tau):
    rng = np.random.default_rng(seed)
    d = round(tau / DT)
    x = rng.normal(size=mats.n)
    u = rng.normal(size=d)
    r = float(rng.normal())
    hist = _history(u, tau)
    # the oldest pending input (pushed first) is applied first
    ref = _forward(mats, x, u, r)
    got = predict_full(x, hist, r, mats, tau).x_p
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_zero_delay_is_identity(mats):
    x = np.arange(mats.n, dtype=float)
    got = predict_full(x, DelayedSignal(DT, DT), 3.0, mats, 0.0)
    np.testing.assert_allclose(got.x_p, x, atol=1e-14)
    assert got.horizon == 0.0


def test_equilibrium_stays_put(mats):
    hist = _history(np.zeros(40), 0.4)
    assert np.array_equal(predict_full(np.zeros(mats.n), hist, 0.0, mats, 0.4).x_p,
                          np.zeros(mats.n))


def test_observed_equals_full_when_estimate_exact(mats, rng):
    x = rng.normal(size=mats.n)
    hist = _history(rng.normal(size=40), 0.4)
    a = predict_full(x, hist, 0.7, mats, 0.4).x_p
    b = predict_observed(x, hist, 0.7, mats, 0.4).x_p
    np.testing.assert_array_equal(a, b)


def test_cell_weights_sum_to_full_integral(mats):
    G = input_cell_weights(mats.A, mats.B, DT, 40)
    # sum_m e^{A m dt} int_0^dt e^{As} B ds = int_0^{0.4} e^{As} B ds
    ref = np.zeros(mats.n)
    s = np.linspace(0, 0.4, 4001)
    vals = np.stack([sl.expm(mats.A * si) @ mats.B[:, 0] for si in s])
    ref = np.trapezoid(vals, s, axis=0)
    np.testing.assert_allclose(G.sum(axis=0), ref, atol=1e-7)


def test_disturbance_only_moves_cav_gap(mats):
    hist = _history(np.zeros(40), 0.4)
    got = predict_full(np.zeros(mats.n), hist, 2.0, mats, 0.4).x_p
    expected = np.zeros(mats.n)
    expected[0] = 0.8  # D tau r, since e^{A s} D = D
    np.testing.assert_allclose(got, expected, atol=1e-13)


def test_short_history_rejected(mats):
    with pytest.raises(ValueError):
        Predictor(mats, 0.4, DT).predict(np.zeros(mats.n), DelayedSignal(DT, 0.1), 0.0)


def test_error_bounds():
    lo, hi = prediction_error_bounds(DisturbanceBounds(-5, 5), 0.4)
    assert lo == pytest.approx(-0.4) and hi == pytest.approx(0.4)
    lo, hi = prediction_error_bounds(DisturbanceBounds(-3, 1), 1.0)
    assert (lo, hi) == (pytest.approx(-1.5), pytest.approx(0.5))
    with pytest.raises(ValueError):
        DisturbanceBounds(1.0, 2.0)
    with pytest.raises(ValueError):
        prediction_error_bounds(DisturbanceBounds(), -0.1)


def test_off_grid_delay(mats):
    with pytest.raises(ValueError):
        Predictor(mats, 0.405, DT)
