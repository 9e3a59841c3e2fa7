import numpy as np
import pytest
from hypothesis import given, strategies as st

from rstc.history import DelayedSignal, grid_steps, trapezoid_weights, weighted_integral


def test_grid_steps():
    assert grid_steps(0.4, 0.01) == 40
    assert grid_steps(0.0, 0.01) == 0
    with pytest.raises(ValueError, match="integer multiple"):
        grid_steps(0.4, 0.013)
    with pytest.raises(ValueError):
        grid_steps(0.4, 0.0)


def test_sample_lookback():
    sig = DelayedSignal(0.1, 0.5, fill=-1.0)
    for k in range(3):
        sig.push(float(k))
    assert sig.sample(0) == 2.0
    assert sig.sample(2) == 0.0
    assert sig.sample(3) == -1.0  # pre-filled history
    with pytest.raises(IndexError):
        sig.sample(sig.n_steps + 1)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.integers(0, 10))
def test_ring_buffer_keeps_latest(values, k):
    sig = DelayedSignal(0.01, 0.1)
    for v in values:
        sig.push(v)
    if k < len(values):
        assert sig.sample(k) == values[-1 - k]
    else:
        assert sig.sample(k) == 0.0


def test_recent_newest_first():
    sig = DelayedSignal(1.0, 4.0)
    for v in (1, 2, 3, 4, 5):
        sig.push(float(v))
    np.testing.assert_array_equal(sig.recent(2), [5, 4, 3])


def test_vector_samples():
    sig = DelayedSignal(0.5, 1.0, shape=(2,))
    sig.push([1.0, 2.0])
    np.testing.assert_array_equal(sig.sample(0), [1.0, 2.0])
    np.testing.assert_array_equal(sig.at(-0.5), [0.0, 0.0])


def test_trapezoid_weights():
    np.testing.assert_allclose(trapezoid_weights(4, 0.5), [0.25, 0.5, 0.5, 0.25])
    assert trapezoid_weights(1, 0.5).tolist() == [0.0]


def test_weighted_integral_exact_for_linear():
    dt = 0.01
    sig = DelayedSignal(dt, 1.0)
    for k in range(101):
        sig.push(3.0 + 2.0 * k * dt)  # value at t = k dt; newest is t = 1
    # integral over [-0.5, 0] in look-back time of 3 + 2(1 + s)
    got = weighted_integral(sig, -0.5, 0.0)
    assert got == pytest.approx(0.5 * 5.0 - 0.25, abs=1e-12)
    with pytest.raises(ValueError):
        weighted_integral(sig, 0.0, -0.5)
