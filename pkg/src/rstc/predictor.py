"""Delay-compensating state prediction over the actuator delay.

The control input is held constant over each sampling cell, so the input
history integral is evaluated cell by cell with exact weights

    G_m = int_{m dt}^{(m+1) dt} e^{A s} ds B,   m = 0 .. d-1,

where cell ``m`` carries the input issued ``m + 1`` steps ago.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .history import DelayedSignal, grid_steps
from .model import SystemMatrices
from .numkernel import expm, integral_expm


@dataclass(frozen=True)
class DisturbanceBounds:
    a_low: float = -5.0
    a_up: float = 5.0

    def __post_init__(self):
        if not (self.a_low < 0 < self.a_up):
            raise ValueError("disturbance bounds must satisfy a_low < 0 < a_up")


@dataclass(frozen=True)
class Prediction:
    x_p: np.ndarray
    t: float
    horizon: float


def input_cell_weights(A, B, dt: float, cells: int) -> np.ndarray:
    """Stack of exact ZOH weights, shape (cells, n)."""
    n = A.shape[0]
    if cells == 0:
        return np.zeros((0, n))
    first = integral_expm(A, B, dt)[:, 0]
    step = expm(A, dt)
    out = np.empty((cells, n))
    out[0] = first
    for m in range(1, cells):
        out[m] = step @ out[m - 1]
    return out


class Predictor:
    """Predicts the perturbation state ``tau_u`` ahead.

    ``predict(x, u_hist, r)`` expects ``u_hist.sample(j)`` to be the input
    applied on the cell ``[t - (j+1) dt, t - j dt)``, i.e. the current input
    has not been pushed yet.
    """

    def __init__(self, M: SystemMatrices, tau_u: float, dt: float):
        self.M = M
        self.tau_u = float(tau_u)
        self.dt = float(dt)
        self.steps = grid_steps(tau_u, dt, "tau_u")
        self.E = expm(M.A, self.tau_u)
        self.G = input_cell_weights(M.A, M.B, dt, self.steps)
        # int_0^tau e^{A(tau - s)} D ds collapses to D tau because A D = 0.
        self.Dtau = self.tau_u * M.D[:, 0]

    def history_term(self, u_hist: DelayedSignal) -> np.ndarray:
        if self.steps == 0:
            return np.zeros(self.M.n)
        if u_hist.n_steps < self.steps - 1:
            raise ValueError("input history is shorter than the actuator delay")
        return self.G.T @ u_hist.recent(self.steps - 1)

    def predict(self, x, u_hist: DelayedSignal, r: float, t: float | None = None) -> Prediction:
        x = np.asarray(x, dtype=float)
        x_p = self.E @ x + self.history_term(u_hist) + self.Dtau * r
        return Prediction(x_p=x_p, t=u_hist.t_now if t is None else t, horizon=self.tau_u)


def predict_full(x, u_hist: DelayedSignal, r: float, M: SystemMatrices, tau_u: float) -> Prediction:
    return Predictor(M, tau_u, u_hist.dt).predict(x, u_hist, r)


def predict_observed(x_hat, u_hist: DelayedSignal, r: float, M: SystemMatrices,
                     tau_u: float) -> Prediction:
    # Same map applied to the estimate; the difference to the true-state
    # prediction is e^{A tau_u} (x - x_hat).
    return Predictor(M, tau_u, u_hist.dt).predict(x_hat, u_hist, r)


def prediction_error_bounds(bounds: DisturbanceBounds, tau_u: float) -> tuple[float, float]:
    if tau_u < 0:
        raise ValueError("tau_u must be non-negative")
    return 0.5 * bounds.a_low * tau_u ** 2, 0.5 * bounds.a_up * tau_u ** 2
