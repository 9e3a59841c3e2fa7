import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rstc.model import (OvmParams, Platoon, build_matrices, linearize_hv, observation_matrices,
                        ovm_accel, ovm_desired_speed, ovm_desired_speed_slope,
                        solve_equilibrium_gap)

P = OvmParams()
# closed form of V(s) = 20 on the cosine branch: cos(pi (s - 5) / 35) = -1/7
S_STAR = 5.0 + 35.0 / math.pi * math.acos(-1.0 / 7.0)  # 24.09701319200465


def test_desired_speed_branches():
    assert ovm_desired_speed(5.0, P) == 0.0
    assert ovm_desired_speed(2.0, P) == 0.0
    assert ovm_desired_speed(40.0, P) == pytest.approx(35.0)
    assert ovm_desired_speed(60.0, P) == 35.0
    assert ovm_desired_speed(22.5, P) == pytest.approx(17.5)


@given(st.floats(-10, 80), st.floats(0, 20))
def test_desired_speed_monotone(s, ds):
    assert ovm_desired_speed(s + ds, P) >= ovm_desired_speed(s, P) - 1e-12


def test_equilibrium_gap_closed_form():
    eq = solve_equilibrium_gap(20.0, P)
    assert eq.s_star == pytest.approx(S_STAR, abs=1e-9)
    assert abs(ovm_desired_speed(eq.s_star, P) - 20.0) <= 1e-10
    assert P.s_st < eq.s_star < P.s_go


@pytest.mark.parametrize("v", [0.0, 35.0, -1.0, 40.0])
def test_equilibrium_gap_rejects_out_of_range(v):
    with pytest.raises(ValueError):
        solve_equilibrium_gap(v, P)


def test_linearization_values():
    c = linearize_hv(solve_equilibrium_gap(20.0, P), P)
    assert c.a1 == pytest.approx(0.3 * math.pi * math.sqrt(48 / 49), abs=1e-10)
    assert c.a2 == pytest.approx(1.5)
    assert c.a3 == pytest.approx(0.9)


def test_linearization_matches_finite_differences():
    eq = solve_equilibrium_gap(20.0, P)
    c = linearize_hv(eq, P)
    h = 1e-5

    def f(s, v_lead, v):
        return ovm_accel(s, v_lead - v, v, P)

    s, v = eq.s_star, 20.0
    d_s = (f(s + h, v, v) - f(s - h, v, v)) / (2 * h)
    d_v = (f(s, v, v + h) - f(s, v, v - h)) / (2 * h)
    d_lead = (f(s, v + h, v) - f(s, v - h, v)) / (2 * h)
    assert abs(d_s - c.a1) <= 1e-6
    assert abs(d_v + c.a2) <= 1e-6
    assert abs(d_lead - c.a3) <= 1e-6


def test_slope_matches_finite_difference():
    for s in (8.0, 15.0, 24.0, 37.0):
        fd = (ovm_desired_speed(s + 1e-6, P) - ovm_desired_speed(s - 1e-6, P)) / 2e-6
        assert ovm_desired_speed_slope(s, P) == pytest.approx(fd, abs=1e-6)


def test_params_validation():
    with pytest.raises(ValueError):
        OvmParams(alpha=0.0)
    with pytest.raises(ValueError):
        OvmParams(s_st=40.0, s_go=5.0)


def test_matrix_structure(mats):
    A, B, D = mats.A, mats.B, mats.D
    assert A.shape == (10, 10)
    np.testing.assert_array_equal(B[:, 0], np.eye(10)[1])
    np.testing.assert_array_equal(D[:, 0], np.eye(10)[0])
    np.testing.assert_allclose(A @ D, 0.0, atol=1e-12)
    # CAV block is a double integrator driven by the head speed
    np.testing.assert_array_equal(A[0, :2], [0.0, -1.0])
    np.testing.assert_array_equal(A[1], np.zeros(10))
    c = linearize_hv(solve_equilibrium_gap(20.0, P), P)
    for i in range(1, 5):
        r = 2 * i
        assert A[r, r - 1] == 1.0 and A[r, r + 1] == -1.0
        assert A[r + 1, r] == pytest.approx(c.a1)
        assert A[r + 1, r + 1] == pytest.approx(-c.a2)
        assert A[r + 1, r - 1] == pytest.approx(c.a3)


def test_observation_matrices():
    C1, C2 = observation_matrices(4)
    assert C1[0, 0] == 1 and C1[1, 1] == 1 and C1.sum() == 2
    assert C2[2, 9] == 1 and C2.sum() == 1


def test_single_cav_platoon():
    pl = Platoon.build(0, 20.0, P)
    M = pl.matrices()
    assert M.n == 2 and pl.N == 0


def test_heterogeneous_platoon():
    slow = OvmParams(alpha=0.4)
    pl = Platoon.build(2, 20.0, [P, slow])
    M = pl.matrices()
    assert M.A[5, 5] == pytest.approx(-(0.4 + 0.9))
    with pytest.raises(ValueError):
        Platoon.build(3, 20.0, [P, slow])


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5), min_size=10, max_size=10))
def test_perturbation_roundtrip(platoon, xs):
    x = np.array(xs)
    gaps, speeds = platoon.to_absolute(x)
    np.testing.assert_allclose(platoon.to_perturbation(gaps, speeds), x, atol=1e-12)


def test_equilibrium_is_fixed_point(platoon):
    gaps, speeds = platoon.to_absolute(np.zeros(10))
    acc = [ovm_accel(gaps[i], speeds[i - 1] - speeds[i], speeds[i], P) for i in range(1, 5)]
    assert max(abs(a) for a in acc) <= 1e-12


def test_build_matrices_length_check():
    c = linearize_hv(solve_equilibrium_gap(20.0, P), P)
    with pytest.raises(ValueError):
        build_matrices(3, [c, c])
