"""Predictor-observer for delayed, partial measurements.

Measurements arrive as ``y(t) = sum_j C_j x(t - tau_j)``.  Folding the known
input and disturbance histories into ``y`` gives a transformed output
``Y(t) = Cbar x(t)`` with ``Cbar = sum_j C_j e^{-A tau_j}``, so a plain
Luenberger observer on ``(A, Cbar)`` converges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .history import DelayedSignal, grid_steps, trapezoid_weights
from .model import SystemMatrices
from .numkernel import (NotHurwitzError, expm, solve_lyapunov, solve_riccati_dual,
                        spectral_norm, sym_eigen)
from .predictor import input_cell_weights


def build_cbar(M: SystemMatrices, tau_ys: Sequence[float],
               Cs: Sequence[np.ndarray] | None = None) -> np.ndarray:
    Cs = M.observation if Cs is None else list(Cs)
    if len(Cs) != len(tau_ys):
        raise ValueError("one delay per observation matrix is required")
    return sum(C @ expm(M.A, -tau) for C, tau in zip(Cs, tau_ys))


def certify_decay(M: SystemMatrices | np.ndarray, L, Cbar) -> tuple[float, float]:
    """Certified (overshoot, rate) with ||e(t)|| <= ups ||e(0)|| exp(-lam t).

    From the Lyapunov function e^T P e with F^T P + P F = -I, F = A - L Cbar.
    """
    A = M.A if isinstance(M, SystemMatrices) else np.asarray(M, dtype=float)
    F = A - np.atleast_2d(L) @ np.atleast_2d(Cbar)
    try:
        P = solve_lyapunov(F, np.eye(F.shape[0]))
    except NotHurwitzError as exc:
        raise NotHurwitzError("observer gain rejected: A - L Cbar is not Hurwitz") from exc
    w = sym_eigen(P)
    return math.sqrt(w[-1] / w[0]), 1.0 / (2.0 * w[-1])


@dataclass
class ObserverState:
    x_hat: np.ndarray
    L: np.ndarray
    C_bar: np.ndarray
    upsilon: float
    lam: float
    eps_bar: float = 0.0

    def __post_init__(self):
        if self.upsilon < 1.0 or self.lam <= 0.0 or self.eps_bar < 0.0:
            raise ValueError("need upsilon >= 1, lambda > 0, eps_bar >= 0")

    def envelope(self, t: float) -> float:
        """Certified bound on the estimation-error norm at time t."""
        return self.upsilon * self.eps_bar * math.exp(-self.lam * t)


def observer_step(obs: ObserverState, u_delayed: float, r: float, Y, dt: float,
                  M: SystemMatrices) -> ObserverState:
    """One explicit-Euler step of the observer; returns a new state."""
    x = obs.x_hat
    innov = np.asarray(Y, dtype=float) - obs.C_bar @ x
    dx = M.A @ x + M.B[:, 0] * u_delayed + M.D[:, 0] * r + obs.L @ innov
    return replace(obs, x_hat=x + dt * dx)


class OutputTransform:
    """Builds Y(t) from y(t) and the input/disturbance histories.

    History conventions match :class:`~rstc.predictor.Predictor`:
    ``u_hist.sample(j)`` is the input on cell ``[t-(j+1)dt, t-j dt)`` and
    ``r_hist.sample(j)`` is the disturbance at the grid point ``t - j dt``.
    """

    def __init__(self, M: SystemMatrices, tau_u: float, tau_ys: Sequence[float], dt: float,
                 Cs: Sequence[np.ndarray] | None = None):
        self.M = M
        self.dt = float(dt)
        self.Cs = M.observation if Cs is None else list(Cs)
        self.tau_ys = [float(t) for t in tau_ys]
        self.du = grid_steps(tau_u, dt, "tau_u")
        self.dys = [grid_steps(t, dt, "tau_y") for t in self.tau_ys]
        self.C_bar = build_cbar(M, self.tau_ys, self.Cs)
        d_max = max(self.dys, default=0)
        G = input_cell_weights(M.A, M.B, dt, d_max)
        self._u_rows = []
        self._r_rows = []
        for C, tau, dy in zip(self.Cs, self.tau_ys, self.dys):
            pre = C @ expm(M.A, -tau)
            # cells du .. du+dy-1 of u, weight e^{A m dt} int e^{As} B
            self._u_rows.append(pre @ G[:dy].T if dy else np.zeros((C.shape[0], 0)))
            if dy:
                w = trapezoid_weights(dy + 1, dt)
                thetas = -np.arange(dy + 1) * dt
                cols = np.stack([wk * (expm(M.A, -th) @ M.D[:, 0]) for wk, th in zip(w, thetas)],
                                axis=1)
                self._r_rows.append(pre @ cols)
            else:
                self._r_rows.append(np.zeros((C.shape[0], 1)))

    @property
    def u_span_steps(self) -> int:
        return self.du + max(self.dys, default=0)

    def __call__(self, y, u_hist: DelayedSignal, r_hist: DelayedSignal) -> np.ndarray:
        Y = np.array(y, dtype=float)
        need_u = self.u_span_steps - 1
        if u_hist.n_steps < need_u or r_hist.n_steps < max(self.dys, default=0):
            raise ValueError("history span too short for the sensor/actuator delays")
        u_all = u_hist.recent(max(need_u, 0)) if need_u >= 0 else np.zeros(0)
        for dy, ur, rr in zip(self.dys, self._u_rows, self._r_rows):
            if dy == 0:
                continue
            Y += ur @ u_all[self.du:self.du + dy]
            Y += rr @ r_hist.recent(dy)
        return Y

    def measure(self, x_hist: DelayedSignal) -> np.ndarray:
        """Delayed measurement y(t) = sum_j C_j x(t - tau_j) from a state history."""
        return sum(C @ x_hist.sample(dy) for C, dy in zip(self.Cs, self.dys))


def compose_Y(y, u_hist: DelayedSignal, r_hist: DelayedSignal, M: SystemMatrices,
              tau_u: float, tau_ys: Sequence[float], Cs=None) -> np.ndarray:
    return OutputTransform(M, tau_u, tau_ys, u_hist.dt, Cs)(y, u_hist, r_hist)


@dataclass
class ObserverDesign:
    """Gain and certified constants for a given (A, Cbar)."""

    L: np.ndarray
    C_bar: np.ndarray
    upsilon: float
    lam: float
    riccati_P: np.ndarray = field(repr=False)

    @classmethod
    def synthesize(cls, M: SystemMatrices, C_bar: np.ndarray, Q=None, R=None) -> "ObserverDesign":
        L, P = solve_riccati_dual(M.A, C_bar, Q, R)
        ups, lam = certify_decay(M, L, C_bar)
        return cls(L=L, C_bar=C_bar, upsilon=ups, lam=lam, riccati_P=P)

    def initial_state(self, x_hat0, eps_bar: float) -> ObserverState:
        return ObserverState(x_hat=np.array(x_hat0, dtype=float), L=self.L, C_bar=self.C_bar,
                             upsilon=self.upsilon, lam=self.lam, eps_bar=eps_bar)


def gain_norm(M: SystemMatrices, tau_u: float) -> float:
    """Spectral norm of e^{A tau_u}."""
    return spectral_norm(expm(M.A, tau_u))
