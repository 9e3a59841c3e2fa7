"""Control barrier functions for the platoon and their robust constraints.

Safety functions are evaluated on absolute gaps and speeds,
``h_i = s_i - psi_i v_i``; followers use the reduced-degree form
``h_i^r = h_i - eta_i h_0`` so every constraint has relative degree one in
the CAV command ``u``.  Each constraint is returned as

    coeff_u * u (+ sigma_i) >= rhs
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import SystemMatrices
from .predictor import DisturbanceBounds


class Mode(str, enum.Enum):
    DELAY_FREE = "delay-free"
    THEOREM3 = "full-state"
    THEOREM5 = "observer"


@dataclass(frozen=True)
class SafetyParams:
    psi: tuple[float, ...]
    eta: tuple[float, ...]
    gamma: tuple[float, ...]
    penalties: tuple[float, ...] = ()
    class_k: tuple[Callable[[float], float], ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        N = len(self.psi) - 1
        if N < 0:
            raise ValueError("need at least the CAV headway")
        if len(self.eta) != N or len(self.gamma) != N + 1:
            raise ValueError("eta needs N entries and gamma N + 1 entries")
        if not self.penalties:
            object.__setattr__(self, "penalties", (1e4,) * N)
        if len(self.penalties) != N:
            raise ValueError("penalties needs N entries")
        for name in ("psi", "eta", "gamma", "penalties"):
            if any(v <= 0 for v in getattr(self, name)):
                raise ValueError(f"all {name} values must be positive")
        if self.class_k is not None and len(self.class_k) != N + 1:
            raise ValueError("class_k needs N + 1 functions")

    @classmethod
    def uniform(cls, N: int, psi0: float = 0.5, psi: float = 1.0, eta: float = 0.2,
                gamma: float = 2.0, penalty: float = 1e4) -> "SafetyParams":
        return cls(psi=(psi0,) + (psi,) * N, eta=(eta,) * N, gamma=(gamma,) * (N + 1),
                   penalties=(penalty,) * N)

    @property
    def N(self) -> int:
        return len(self.psi) - 1

    @property
    def nu(self) -> np.ndarray:
        """Observer-error weights 1 - eta_i + psi_i - eta_i psi_0, i = 1..N."""
        eta = np.asarray(self.eta)
        return 1.0 - eta + np.asarray(self.psi[1:]) - eta * self.psi[0]

    @property
    def linear(self) -> bool:
        return self.class_k is None

    def alpha(self, i: int) -> Callable[[float], float]:
        if self.class_k is not None:
            return self.class_k[i]
        g = self.gamma[i]
        return lambda h: g * h


@dataclass
class SafetyConstraint:
    coeff_u: float
    rhs: float
    label: str
    slack: int | None = None
    penalty: float = 0.0
    h: float = math.nan
    M: float = 0.0
    Z: float = 0.0
    active: bool = False

    def satisfied(self, u: float, sigma: float = 0.0, tol: float = 1e-9) -> bool:
        return self.coeff_u * u + sigma >= self.rhs - tol

    def dump(self, t: float) -> str:
        return (f"{t:.2f},{self.label},{self.coeff_u:.10g},{self.rhs:.10g},"
                f"{self.h:.10g},{self.M:.10g},{self.Z:.10g},{int(self.active)}")


# -- safety functions -------------------------------------------------------------

def h0(gap: float, speed: float, psi0: float) -> float:
    return gap - psi0 * speed


def h_values(gaps, speeds, psi) -> np.ndarray:
    """h_i = s_i - psi_i v_i for every vehicle 0..N."""
    return np.asarray(gaps, dtype=float) - np.asarray(psi) * np.asarray(speeds, dtype=float)


def h_reduced(i: int, gaps, speeds, params: SafetyParams) -> float:
    if not 1 <= i <= params.N:
        raise IndexError("reduced-degree CBFs exist for followers 1..N only")
    h = h_values(gaps, speeds, params.psi)
    return float(h[i] - params.eta[i - 1] * h[0])


def grad_h0(n: int, psi0: float) -> np.ndarray:
    g = np.zeros(n)
    g[0], g[1] = 1.0, -psi0
    return g


def grad_h_reduced(i: int, n: int, params: SafetyParams) -> np.ndarray:
    g = -params.eta[i - 1] * grad_h0(n, params.psi[0])
    g[2 * i] += 1.0
    g[2 * i + 1] -= params.psi[i]
    return g


def gradient_matrix(n: int, params: SafetyParams) -> np.ndarray:
    """Rows: grad h_0, grad h_1^r, ..., grad h_N^r with respect to the state."""
    rows = [grad_h0(n, params.psi[0])]
    rows += [grad_h_reduced(i, n, params) for i in range(1, params.N + 1)]
    return np.array(rows)


# -- robustness terms --------------------------------------------------------------

def m_term_cav(h0_value: float, r: float, bounds: DisturbanceBounds, tau_u: float,
               alpha0: Callable[[float], float], grad_D: float = 1.0) -> float:
    """Actuator-delay correction for the CAV constraint."""
    shift = 0.5 * bounds.a_low * tau_u ** 2
    return alpha0(h0_value) - alpha0(h0_value + shift) - grad_D * (r + bounds.a_low * tau_u)


def m_term_hv(hr_value: float, r: float, bounds: DisturbanceBounds, tau_u: float, eta: float,
              alpha_i: Callable[[float], float], grad_D: float | None = None) -> float:
    """Actuator-delay correction for follower ``i``; grad h_i^r . D = -eta_i."""
    grad_D = -eta if grad_D is None else grad_D
    shift = 0.5 * bounds.a_low * eta * tau_u ** 2
    return alpha_i(hr_value) - alpha_i(hr_value - shift) - grad_D * (r + bounds.a_up * tau_u)


def z_term(h_robust: float, weight: float, gamma_env: float, lam: float, t: float,
           grad_innov: float, alpha: Callable[[float], float]) -> float:
    """Observer-error correction.

    ``h_robust`` is the delay-robust safety value (h_0 + a_low tau^2 / 2 for the
    CAV, h_i^r - a_low eta_i tau^2 / 2 for followers), ``weight`` is 1 + psi_0
    or nu_i, ``gamma_env`` is ||e^{A tau}|| * upsilon * eps_bar and
    ``grad_innov`` is grad h . e^{A tau} L (Y - Cbar x_hat).
    """
    env = weight * gamma_env * math.exp(-lam * t)
    return alpha(h_robust) - alpha(h_robust - env) - grad_innov - lam * env


# -- constraint assembly -------------------------------------------------------------

@dataclass
class ObserverTerms:
    """Per-step observer information needed by the Z corrections."""

    innovation: np.ndarray
    EL: np.ndarray  # e^{A tau_u} L
    gamma_env: float  # ||e^{A tau_u}|| upsilon eps_bar
    lam: float
    t: float


class CbfConstraints:
    """Precomputed constraint rows for one platoon/parameter set."""

    def __init__(self, M: SystemMatrices, params: SafetyParams, gaps_star, v_star: float,
                 tau_u: float, bounds: DisturbanceBounds):
        if params.N != M.N:
            raise ValueError("safety parameters and model disagree on N")
        self.M = M
        self.params = params
        self.tau_u = float(tau_u)
        self.bounds = bounds
        self.gaps_star = np.asarray(gaps_star, dtype=float)
        self.v_star = float(v_star)
        n = M.n
        self.grad = gradient_matrix(n, params)
        self.coeff_u = self.grad @ M.B[:, 0]
        self.grad_A = self.grad @ M.A
        self.grad_D = self.grad @ M.D[:, 0]
        self.psi = np.asarray(params.psi)
        self.eta = np.asarray(params.eta)
        self.gamma = np.asarray(params.gamma)
        N = params.N
        self.labels = ["CAV"] + [f"HV{i}" for i in range(1, N + 1)]
        if np.any(self.coeff_u[:1] >= 0) or np.any(self.coeff_u[1:] <= 0):
            raise AssertionError("unexpected constraint sign structure")

    def barrier_values(self, x) -> np.ndarray:
        """[h_0, h_1^r, ..., h_N^r] at a perturbation state, on absolute quantities."""
        x = np.asarray(x, dtype=float)
        h = (x[0::2] + self.gaps_star) - self.psi * (x[1::2] + self.v_star)
        hb = h.copy()
        hb[1:] -= self.eta * h[0]
        return hb

    def _alpha(self, h: np.ndarray) -> np.ndarray:
        if self.params.linear:
            return self.gamma * h
        return np.array([self.params.alpha(i)(v) for i, v in enumerate(h)])

    def m_terms(self, hb: np.ndarray, r: float) -> np.ndarray:
        if self.tau_u == 0.0 and r == 0.0:
            return np.zeros_like(hb)
        b, tau = self.bounds, self.tau_u
        if self.params.linear:
            out = np.empty_like(hb)
            out[0] = -self.gamma[0] * 0.5 * b.a_low * tau ** 2 - self.grad_D[0] * (r + b.a_low * tau)
            out[1:] = (self.gamma[1:] * 0.5 * b.a_low * self.eta * tau ** 2
                       - self.grad_D[1:] * (r + b.a_up * tau))
            return out
        out = [m_term_cav(hb[0], r, b, tau, self.params.alpha(0), self.grad_D[0])]
        for i in range(1, len(hb)):
            out.append(m_term_hv(hb[i], r, b, tau, self.eta[i - 1], self.params.alpha(i),
                                 self.grad_D[i]))
        return np.array(out)

    def z_terms(self, hb: np.ndarray, obs: ObserverTerms) -> np.ndarray:
        b, tau = self.bounds, self.tau_u
        weights = np.concatenate(([1.0 + self.psi[0]], self.params.nu))
        robust = hb.copy()
        robust[0] += 0.5 * b.a_low * tau ** 2
        robust[1:] -= 0.5 * b.a_low * self.eta * tau ** 2
        grad_innov = self.grad @ (obs.EL @ obs.innovation)
        env = weights * obs.gamma_env * math.exp(-obs.lam * obs.t)
        if self.params.linear:
            return self.gamma * env - grad_innov - obs.lam * env
        return np.array([
            z_term(robust[i], weights[i], obs.gamma_env, obs.lam, obs.t, grad_innov[i],
                   self.params.alpha(i))
            for i in range(len(hb))
        ])

    def rows(self, mode: Mode, x, r: float, obs: ObserverTerms | None = None):
        """Return (coeff_u, rhs, h_barrier, M, Z) arrays for the chosen mode.

        ``x`` is the current state for DELAY_FREE, the prediction x_p for
        THEOREM3 and the observer-based prediction for THEOREM5.
        """
        x = np.asarray(x, dtype=float)
        hb = self.barrier_values(x)
        drift = self.grad_A @ x
        zeros = np.zeros_like(hb)
        if mode is Mode.DELAY_FREE:
            rhs = -(drift + self.grad_D * r) - self._alpha(hb)
            return self.coeff_u, rhs, hb, zeros, zeros
        Mt = self.m_terms(hb, r)
        Z = zeros
        if mode is Mode.THEOREM5:
            if obs is None:
                raise ValueError("observer terms are required in observer mode")
            Z = self.z_terms(hb, obs)
        rhs = -drift - self._alpha(hb) + Mt + Z
        return self.coeff_u, rhs, hb, Mt, Z

    def assemble(self, mode: Mode, x, r: float, obs: ObserverTerms | None = None
                 ) -> list[SafetyConstraint]:
        coeff, rhs, hb, Mt, Z = self.rows(mode, x, r, obs)
        out = [SafetyConstraint(coeff_u=float(coeff[0]), rhs=float(rhs[0]), label="CAV",
                                h=float(hb[0]), M=float(Mt[0]), Z=float(Z[0]))]
        for i in range(1, len(coeff)):
            out.append(SafetyConstraint(coeff_u=float(coeff[i]), rhs=float(rhs[i]),
                                        label=self.labels[i], slack=i - 1,
                                        penalty=self.params.penalties[i - 1],
                                        h=float(hb[i]), M=float(Mt[i]), Z=float(Z[i])))
        return out


def assemble_constraints(mode: Mode | str, x, r: float, params: SafetyParams,
                         M: SystemMatrices, gaps_star: Sequence[float], v_star: float,
                         tau_u: float, bounds: DisturbanceBounds,
                         obs: ObserverTerms | None = None) -> list[SafetyConstraint]:
    cbf = CbfConstraints(M, params, gaps_star, v_star, tau_u, bounds)
    return cbf.assemble(Mode(mode), x, r, obs)
