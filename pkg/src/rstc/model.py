"""Optimal-velocity car-following model and the linearized platoon.

State ordering used throughout the package (perturbations about equilibrium)::

    x = [s~_0, v~_0, s~_1, v~_1, ..., s~_N, v~_N],   n = 2N + 2

Index 0/1 hold the CAV gap and speed; vehicle ``i`` (HV-i) occupies
``2i`` and ``2i + 1``.  The head vehicle is not part of the state; its speed
perturbation enters as the disturbance ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class OvmParams:
    alpha: float = 0.6
    beta: float = 0.9
    s_st: float = 5.0
    s_go: float = 40.0
    v_max: float = 35.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("OVM gains alpha and beta must be positive")
        if not (0 < self.s_st < self.s_go):
            raise ValueError("need 0 < s_st < s_go")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")


@dataclass(frozen=True)
class Equilibrium:
    v_star: float
    s_star: float


@dataclass(frozen=True)
class LinearHvCoeffs:
    a1: float
    a2: float
    a3: float


@dataclass(frozen=True)
class SystemMatrices:
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    C1: np.ndarray
    C2: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.n // 2 - 1

    @property
    def observation(self) -> list[np.ndarray]:
        return [self.C1, self.C2]


def ovm_desired_speed(s, p: OvmParams):
    """Spacing-dependent desired speed V(s). Works on scalars and arrays."""
    s = np.asarray(s, dtype=float)
    frac = np.clip((s - p.s_st) / (p.s_go - p.s_st), 0.0, 1.0)
    v = 0.5 * p.v_max * (1.0 - np.cos(np.pi * frac))
    return v if v.ndim else float(v)


def ovm_desired_speed_slope(s, p: OvmParams):
    """Analytic dV/ds; zero on the flat branches."""
    s = np.asarray(s, dtype=float)
    width = p.s_go - p.s_st
    inside = (s > p.s_st) & (s < p.s_go)
    d = np.where(
        inside,
        0.5 * p.v_max * np.pi / width * np.sin(np.pi * (s - p.s_st) / width),
        0.0,
    )
    return d if d.ndim else float(d)


def ovm_accel(s, s_dot, v, p: OvmParams):
    return p.alpha * (ovm_desired_speed(s, p) - v) + p.beta * s_dot


def solve_equilibrium_gap(v_star: float, p: OvmParams, tol: float = 1e-10) -> Equilibrium:
    """Bisect V(s) = v_star on [s_st, s_go]."""
    if not (0.0 < v_star < p.v_max):
        raise ValueError(
            f"no interior equilibrium for v_star={v_star}; need 0 < v_star < {p.v_max}"
        )
    lo, hi = p.s_st, p.s_go
    # Bisect until the bracket stops shrinking; tol is then only a check.
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if ovm_desired_speed(mid, p) < v_star:
            lo = mid
        else:
            hi = mid
    s_star = min((lo, hi), key=lambda s: abs(ovm_desired_speed(s, p) - v_star))
    if abs(ovm_desired_speed(s_star, p) - v_star) > tol:
        raise ArithmeticError("equilibrium bisection missed its tolerance")
    return Equilibrium(v_star=float(v_star), s_star=float(s_star))


def linearize_hv(eq: Equilibrium, p: OvmParams) -> LinearHvCoeffs:
    # F = alpha (V(s) - v) + beta s_dot, so dF/ds_dot - dF/dv = beta + alpha.
    if not (p.s_st < eq.s_star < p.s_go):
        raise ValueError("equilibrium gap is not on the interior branch of V")
    return LinearHvCoeffs(
        a1=p.alpha * ovm_desired_speed_slope(eq.s_star, p),
        a2=p.alpha + p.beta,
        a3=p.beta,
    )


def observation_matrices(N: int) -> tuple[np.ndarray, np.ndarray]:
    """C1 measures (s~_0, v~_0) undelayed; C2 measures v~_N (delayed)."""
    n = 2 * N + 2
    C1 = np.zeros((3, n))
    C1[0, 0] = 1.0
    C1[1, 1] = 1.0
    C2 = np.zeros((3, n))
    C2[2, n - 1] = 1.0
    return C1, C2


def build_matrices(N: int, coeffs: Sequence[LinearHvCoeffs]) -> SystemMatrices:
    if N < 0:
        raise ValueError("N must be non-negative")
    if len(coeffs) != N:
        raise ValueError(f"expected {N} HV coefficient sets, got {len(coeffs)}")
    n = 2 * N + 2
    A = np.zeros((n, n))
    A[0, 1] = -1.0
    for i, c in enumerate(coeffs, start=1):
        s_row, v_row = 2 * i, 2 * i + 1
        # gap rate: v~_{i-1} - v~_i
        A[s_row, v_row - 2] = 1.0
        A[s_row, v_row] = -1.0
        A[v_row, v_row - 2] = c.a3
        A[v_row, s_row] = c.a1
        A[v_row, v_row] = -c.a2
    B = np.zeros((n, 1))
    B[1, 0] = 1.0
    D = np.zeros((n, 1))
    D[0, 0] = 1.0
    C1, C2 = observation_matrices(N)
    return SystemMatrices(A=A, B=B, D=D, C1=C1, C2=C2)


@dataclass(frozen=True)
class Platoon:
    """Equilibrium bookkeeping for a CAV followed by ``N`` OVM drivers.

    ``hv_params`` holds one ``OvmParams`` per follower so heterogeneous
    drivers are possible; the CAV equilibrium gap is taken equal to the
    first follower's (any positive gap is an equilibrium for the CAV).
    """

    v_star: float
    hv_params: tuple[OvmParams, ...]
    equilibria: tuple[Equilibrium, ...]
    coeffs: tuple[LinearHvCoeffs, ...]
    cav_gap: float

    @classmethod
    def build(cls, N: int, v_star: float, params: OvmParams | Sequence[OvmParams],
              cav_gap: float | None = None) -> "Platoon":
        if isinstance(params, OvmParams):
            hv = (params,) * N
        else:
            hv = tuple(params)
            if len(hv) != N:
                raise ValueError(f"expected {N} OVM parameter sets, got {len(hv)}")
        eqs = tuple(solve_equilibrium_gap(v_star, p) for p in hv)
        coeffs = tuple(linearize_hv(e, p) for e, p in zip(eqs, hv))
        if cav_gap is None:
            ref = hv[0] if hv else (params if isinstance(params, OvmParams) else OvmParams())
            cav_gap = solve_equilibrium_gap(v_star, ref).s_star
        return cls(v_star=float(v_star), hv_params=hv, equilibria=eqs, coeffs=coeffs,
                   cav_gap=float(cav_gap))

    @property
    def N(self) -> int:
        return len(self.hv_params)

    @property
    def gaps_star(self) -> np.ndarray:
        """Equilibrium gaps s*_0 .. s*_N."""
        return np.array([self.cav_gap] + [e.s_star for e in self.equilibria])

    def matrices(self) -> SystemMatrices:
        return build_matrices(self.N, self.coeffs)

    def to_perturbation(self, gaps, speeds) -> np.ndarray:
        x = np.empty(2 * self.N + 2)
        x[0::2] = np.asarray(gaps, dtype=float) - self.gaps_star
        x[1::2] = np.asarray(speeds, dtype=float) - self.v_star
        return x

    def to_absolute(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return x[0::2] + self.gaps_star, x[1::2] + self.v_star
