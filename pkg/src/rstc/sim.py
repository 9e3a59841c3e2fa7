"""Fixed-step closed-loop simulation of the mixed platoon.

Vehicles are indexed -1 (head), 0 (CAV), 1..N (followers).  The plant uses
the nonlinear OVM for followers (or its linearization with
``plant="linear"``); every controller component works on the linearized
perturbation model.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ConfigError, PlatoonConfig
from .history import DelayedSignal, grid_steps
from .model import ovm_accel
from .numkernel import expm, spectral_norm
from .observer import ObserverDesign, OutputTransform
from .predictor import Predictor
from .qpsolve import filter_input
from .safety import CbfConstraints, Mode, ObserverTerms


class ControllerMode(str, enum.Enum):
    NOMINAL = "nominal"
    STC_DELAY_FREE = "stc-delayfree"
    RSTC_FULL = "rstc-full"
    RSTC_OBSERVER = "rstc-observer"


class ScenarioKind(str, enum.Enum):
    HEAD_BRAKE = "head-brake"
    FOLLOWER_ACCEL = "follower-accel"
    QUIET = "quiet"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind = ScenarioKind.HEAD_BRAKE
    magnitude: float = 5.0
    duration: float = 3.5
    onset: float = 5.0
    horizon: float | None = None
    settle: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.magnitude < 0 or self.duration < 0 or self.onset < 0:
            raise ValueError("scenario magnitude, duration and onset must be non-negative")

    @classmethod
    def head_brake(cls, a_h: float = 5.0, t_h: float = 3.5, **kw) -> "ScenarioSpec":
        return cls(ScenarioKind.HEAD_BRAKE, a_h, t_h, **kw)

    @classmethod
    def follower_accel(cls, a_f: float = 5.0, t_f: float = 2.6, **kw) -> "ScenarioSpec":
        return cls(ScenarioKind.FOLLOWER_ACCEL, a_f, t_f, **kw)

    @property
    def total_time(self) -> float:
        if self.horizon is not None:
            return self.horizon
        span = 2 * self.duration if self.kind is ScenarioKind.HEAD_BRAKE else self.duration
        return self.onset + span + self.settle

    def boundary_speed(self, v_star: float) -> float:
        if self.kind is ScenarioKind.HEAD_BRAKE:
            return v_star - self.magnitude * self.duration
        return v_star + self.magnitude * self.duration

    def follower_override(self, t: float) -> float | None:
        if (self.kind is ScenarioKind.FOLLOWER_ACCEL
                and self.onset <= t < self.onset + self.duration - 1e-9):
            return self.magnitude
        return None


def head_profile(spec: ScenarioSpec, t: float, v_star: float) -> float:
    """Head-vehicle speed: brake at ``magnitude`` for ``duration``, then recover."""
    if spec.kind is not ScenarioKind.HEAD_BRAKE or t <= spec.onset:
        return v_star
    a, t_h = spec.magnitude, spec.duration
    if t <= spec.onset + t_h:
        return max(v_star - a * (t - spec.onset), 0.0)
    v_low = max(v_star - a * t_h, 0.0)
    return min(v_low + a * (t - spec.onset - t_h), v_star)


@dataclass
class TrajectoryLog:
    """Per-step record; row ``k`` is time ``k * dt``.

    Speeds and accelerations include the head vehicle in column 0; gaps,
    safety values and constraint diagnostics are indexed 0..N.
    """

    dt: float
    N: int
    t: np.ndarray
    gaps: np.ndarray
    speeds: np.ndarray
    accels: np.ndarray
    u_nom: np.ndarray
    u_filt: np.ndarray
    h: np.ndarray
    x: np.ndarray
    x_pred: np.ndarray
    barrier: np.ndarray
    cons_coeff: np.ndarray
    cons_rhs: np.ndarray
    cons_M: np.ndarray
    cons_Z: np.ndarray
    cons_active: np.ndarray
    eps_norm: np.ndarray
    y_err: np.ndarray | None = None
    mode: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.t)

    def csv_header(self) -> list[str]:
        N = self.N
        vids = range(-1, N + 1)
        return (["t"] + [f"s_{i}" for i in vids] + [f"v_{i}" for i in vids]
                + [f"a_{i}" for i in vids] + ["u_nom", "u_filt"]
                + [f"h_{i}" for i in range(N + 1)] + ["eps_norm"])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())

        def fmt(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"

        for k in range(self.steps):
            row = [f"{self.t[k]:.2f}", ""]
            row += [fmt(float(v)) for v in self.gaps[k]]
            row += [fmt(float(v)) for v in self.speeds[k]]
            row += [fmt(float(v)) for v in self.accels[k]]
            row += [fmt(float(self.u_nom[k])), fmt(float(self.u_filt[k]))]
            row += [fmt(float(v)) for v in self.h[k]]
            row.append(fmt(float(self.eps_norm[k])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def constraint_dump(self) -> list[str]:
        """One line per constraint per step: t,label,coeff_u,rhs,h,M,Z,active."""
        labels = ["CAV"] + [f"HV{i}" for i in range(1, self.N + 1)]
        lines = []
        for k in range(self.steps):
            if np.isnan(self.cons_rhs[k, 0]):
                continue
            for i, lab in enumerate(labels):
                lines.append(
                    f"{self.t[k]:.2f},{lab},{self.cons_coeff[k, i]:.10g},{self.cons_rhs[k, i]:.10g},"
                    f"{self.barrier[k, i]:.10g},{self.cons_M[k, i]:.10g},"
                    f"{self.cons_Z[k, i]:.10g},{int(self.cons_active[k, i])}")
        return lines

    def summary(self) -> dict:
        hit = detect_collision(self)
        u = self.u_filt[~np.isnan(self.u_filt)]
        return {
            "collision": None if hit is None else {"t": hit[0], "vehicle": hit[1]},
            "min_h": float(np.min(self.h)),
            "min_h_vehicle": int(np.unravel_index(np.argmin(self.h), self.h.shape)[1]),
            "min_gap": float(np.min(self.gaps)),
            "max_abs_u": float(np.max(np.abs(u))) if u.size else 0.0,
        }


def detect_collision(log: TrajectoryLog, vehicles=None) -> tuple[float, int] | None:
    """Earliest (t, vehicle) with a gap <= 0, optionally restricted to ``vehicles``."""
    gaps = log.gaps if vehicles is None else log.gaps[:, list(vehicles)]
    ids = list(range(log.N + 1)) if vehicles is None else list(vehicles)
    hits = np.nonzero(np.any(gaps <= 0.0, axis=1))[0]
    if hits.size == 0:
        return None
    k = int(hits[0])
    col = int(np.nonzero(gaps[k] <= 0.0)[0][0])
    return float(log.t[k]), ids[col]


def step_plant(gaps, speeds, accels, head_speed: float, dt: float):
    """Explicit Euler step; ``speeds``/``accels`` cover vehicles 0..N."""
    leader = np.concatenate(([head_speed], speeds[:-1]))
    return gaps + dt * (leader - speeds), speeds + dt * np.asarray(accels)


class Simulator:
    """Closed-loop simulator for one configuration and controller mode."""

    def __init__(self, cfg: PlatoonConfig, mode: ControllerMode | str = ControllerMode.RSTC_FULL,
                 *, plant: str = "ovm", integrator: str = "euler"):
        if plant not in ("ovm", "linear"):
            raise ConfigError("plant must be 'ovm' or 'linear'")
        if integrator not in ("euler", "rk4"):
            raise ConfigError("integrator must be 'euler' or 'rk4'")
        self.cfg = cfg
        self.mode = ControllerMode(mode)
        self.plant = plant
        self.integrator = integrator
        self.platoon = cfg.platoon()
        self.M = self.platoon.matrices()
        self.K = cfg.gain(self.platoon)
        self.k_head = cfg.head_gain(self.platoon)
        self.du = grid_steps(cfg.tau_u, cfg.dt, "tau_u")
        self.predictor = Predictor(self.M, cfg.tau_u, cfg.dt)
        self.params = cfg.safety_params()
        self.cbf = CbfConstraints(self.M, self.params, self.platoon.gaps_star, cfg.v_star,
                                  cfg.tau_u, cfg.bounds())
        self.transform = None
        self.design = None
        if self.mode is ControllerMode.RSTC_OBSERVER:
            self.transform = OutputTransform(self.M, cfg.tau_u, [0.0, cfg.tau_y], cfg.dt)
            n = self.M.n
            self.design = ObserverDesign.synthesize(
                self.M, self.transform.C_bar, cfg.observer_q * np.eye(n),
                cfg.observer_r * np.eye(self.transform.C_bar.shape[0]))
            E = expm(self.M.A, cfg.tau_u)
            self.EL = E @ self.design.L
            self.E_norm = spectral_norm(E)
        coeffs = self.platoon.coeffs
        self._a1 = np.array([c.a1 for c in coeffs])
        self._a2 = np.array([c.a2 for c in coeffs])
        self._a3 = np.array([c.a3 for c in coeffs])
        self._ovm = self.platoon.hv_params
        self._homogeneous = len(set(self._ovm)) <= 1

    # -- plant ---------------------------------------------------------------------------
    def _hv_accels(self, gaps, speeds, head_speed, override):
        N = self.platoon.N
        if N == 0:
            return np.zeros(0)
        leader = np.concatenate(([head_speed], speeds[:-1]))[1:]
        s, v = gaps[1:], speeds[1:]
        if self.plant == "linear":
            a = (self._a1 * (s - self.platoon.gaps_star[1:]) - self._a2 * (v - self.cfg.v_star)
                 + self._a3 * (leader - self.cfg.v_star))
        elif self._homogeneous:
            a = ovm_accel(s, leader - v, v, self._ovm[0])
        else:
            a = np.array([ovm_accel(s[i], leader[i] - v[i], v[i], p)
                          for i, p in enumerate(self._ovm)])
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if override is not None:
            a = a.copy()
            a[-1] = override
        return a

    def _derivative(self, gaps, speeds, head_speed, u_applied, override):
        leader = np.concatenate(([head_speed], speeds[:-1]))
        acc = np.concatenate(([u_applied], self._hv_accels(gaps, speeds, head_speed, override)))
        return leader - speeds, acc

    def _advance(self, gaps, speeds, t, head, u_applied, override):
        dt = self.cfg.dt
        if self.integrator == "euler":
            ds, dv = self._derivative(gaps, speeds, head(t), u_applied, override)
            return gaps + dt * ds, speeds + dt * dv, dv
        k1s, k1v = self._derivative(gaps, speeds, head(t), u_applied, override)
        k2s, k2v = self._derivative(gaps + 0.5 * dt * k1s, speeds + 0.5 * dt * k1v,
                                    head(t + 0.5 * dt), u_applied, override)
        k3s, k3v = self._derivative(gaps + 0.5 * dt * k2s, speeds + 0.5 * dt * k2v,
                                    head(t + 0.5 * dt), u_applied, override)
        k4s, k4v = self._derivative(gaps + dt * k3s, speeds + dt * k3v, head(t + dt),
                                    u_applied, override)
        return (gaps + dt / 6 * (k1s + 2 * k2s + 2 * k3s + k4s),
                speeds + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v), k1v)

    # -- main loop -----------------------------------------------------------------------
    def run(self, scenario: ScenarioSpec | None = None, *,
            head_speed: Callable[[float], float] | None = None,
            horizon: float | None = None, x0=None, x_hat0=None,
            eps_bar: float | None = None, stop_on_collision: bool = False) -> TrajectoryLog:
        cfg, M, pl = self.cfg, self.M, self.platoon
        scenario = scenario or ScenarioSpec(ScenarioKind.QUIET, 0.0, 0.0)
        total = horizon if horizon is not None else scenario.total_time
        steps = int(round(total / cfg.dt))
        dt, N, n = cfg.dt, pl.N, M.n
        head = head_speed or (lambda t: head_profile(scenario, t, cfg.v_star))

        x_init = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
        gaps, speeds = pl.to_absolute(x_init)

        observer = self.mode is ControllerMode.RSTC_OBSERVER
        dy = grid_steps(cfg.tau_y, dt, "tau_y") if observer else 0
        u_hist = DelayedSignal(dt, max(self.du + dy, 1) * dt)
        r_hist = DelayedSignal(dt, max(dy, 1) * dt)
        x_hist = DelayedSignal(dt, max(dy, 1) * dt, shape=(n,))
        for _ in range(x_hist.n_steps + 1):
            x_hist.push(x_init)
        x_hat = np.zeros(n) if x_hat0 is None else np.array(x_hat0, dtype=float)
        if observer:
            eps0 = float(np.linalg.norm(x_init - x_hat))
            eps_bar = eps_bar if eps_bar is not None else cfg.eps_bar
            eps_bar = 1.1 * eps0 if eps_bar is None else eps_bar
            gamma_env = self.E_norm * self.design.upsilon * eps_bar

        rows = steps + 1
        nan = np.nan
        log = TrajectoryLog(
            dt=dt, N=N, t=np.arange(rows) * dt,
            gaps=np.empty((rows, N + 1)), speeds=np.empty((rows, N + 2)),
            accels=np.full((rows, N + 2), nan), u_nom=np.full(rows, nan),
            u_filt=np.full(rows, nan), h=np.empty((rows, N + 1)), x=np.empty((rows, n)),
            x_pred=np.full((rows, n), nan), barrier=np.full((rows, N + 1), nan),
            cons_coeff=np.full((rows, N + 1), nan), cons_rhs=np.full((rows, N + 1), nan),
            cons_M=np.full((rows, N + 1), nan), cons_Z=np.full((rows, N + 1), nan),
            cons_active=np.zeros((rows, N + 1), dtype=bool), eps_norm=np.full(rows, nan),
            y_err=np.full(rows, nan),
            mode=self.mode.value,
        )
        psi = np.asarray(self.params.psi)
        penalties = np.asarray(self.params.penalties)
        filtered = self.mode is not ControllerMode.NOMINAL
        last = rows
        for k in range(rows):
            t = k * dt
            v_head = head(t)
            r = v_head - cfg.v_star
            x = pl.to_perturbation(gaps, speeds)
            log.gaps[k] = gaps
            log.speeds[k, 0] = v_head
            log.speeds[k, 1:] = speeds
            log.h[k] = gaps - psi * speeds
            log.x[k] = x
            if observer:
                log.eps_norm[k] = np.linalg.norm(x - x_hat)
            if stop_on_collision and np.any(gaps <= 0.0):
                last = k + 1
                break
            if k == steps:
                break

            # controller
            obs_terms = None
            if observer:
                x_hist.push(x)
                r_hist.push(r)
                Y = self.transform(self.transform.measure(x_hist), u_hist, r_hist)
                innov = Y - self.design.C_bar @ x_hat
                log.y_err[k] = np.max(np.abs(Y - self.design.C_bar @ x))
                x_p = self.predictor.predict(x_hat, u_hist, r, t).x_p
                obs_terms = ObserverTerms(innov, self.EL, gamma_env, self.design.lam, t)
            else:
                x_p = self.predictor.predict(x, u_hist, r, t).x_p
            log.x_pred[k] = x_p
            u0 = float(self.K @ x_p + self.k_head * r)
            u = u0
            if filtered:
                if self.mode is ControllerMode.STC_DELAY_FREE:
                    coeff, rhs, hb, Mt, Z = self.cbf.rows(Mode.DELAY_FREE, x, r)
                elif observer:
                    coeff, rhs, hb, Mt, Z = self.cbf.rows(Mode.THEOREM5, x_p, r, obs_terms)
                else:
                    coeff, rhs, hb, Mt, Z = self.cbf.rows(Mode.THEOREM3, x_p, r)
                u, active = filter_input(u0, coeff, rhs, penalties)
                log.barrier[k] = hb
                log.cons_coeff[k] = coeff
                log.cons_rhs[k] = rhs
                log.cons_M[k] = Mt
                log.cons_Z[k] = Z
                log.cons_active[k] = active
            if cfg.u_min is not None:
                u = max(u, cfg.u_min)
            if cfg.u_max is not None:
                u = min(u, cfg.u_max)
            log.u_nom[k] = u0
            log.u_filt[k] = u

            u_applied = u_hist.sample(self.du - 1) if self.du > 0 else u
            if observer:
                dx = (M.A @ x_hat + M.B[:, 0] * u_applied + M.D[:, 0] * r
                      + self.design.L @ innov)
                x_hat = x_hat + dt * dx
            u_hist.push(u)

            override = scenario.follower_override(t)
            gaps, speeds, acc = self._advance(gaps, speeds, t, head, u_applied, override)
            log.accels[k, 1:] = acc
            log.accels[k, 0] = (head(t + dt) - v_head) / dt
        if last < rows:
            for name in ("t", "gaps", "speeds", "accels", "u_nom", "u_filt", "h", "x", "x_pred",
                         "barrier", "cons_coeff", "cons_rhs", "cons_M", "cons_Z", "cons_active",
                         "eps_norm", "y_err"):
                setattr(log, name, getattr(log, name)[:last])
        if observer:
            log.meta.update(upsilon=self.design.upsilon, lam=self.design.lam,
                            eps_bar=eps_bar, gamma_env=gamma_env)
        return log


def run(cfg: PlatoonConfig, scenario: ScenarioSpec, mode: ControllerMode | str,
        **kwargs) -> TrajectoryLog:
    sim_kw = {k: kwargs.pop(k) for k in ("plant", "integrator") if k in kwargs}
    return Simulator(cfg, mode, **sim_kw).run(scenario, **kwargs)
