"""Safety-region sweeps: largest disturbance duration with no rear-end collision.

The scenario acceleration is fixed and the duration is bisected on a grid;
the found duration maps to a boundary speed ``v* - a t`` (head braking) or
``v* + a t`` (follower acceleration).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import PlatoonConfig
from .sim import ControllerMode, ScenarioKind, ScenarioSpec, Simulator

CHAIN = "chain"


@dataclass(frozen=True)
class RegionRow:
    scenario: str
    mode: str
    tau_u: float
    vehicle: str
    duration: float
    boundary_speed_mps: float
    at_cap: bool = False


@dataclass(frozen=True)
class SafetyRegionResult:
    """Boundaries for one (scenario, mode, tau_u); ``rows`` holds each vehicle then the chain."""

    scenario: str
    mode: str
    tau_u: float
    rows: tuple[RegionRow, ...]

    def row(self, vehicle: str) -> RegionRow:
        for r in self.rows:
            if r.vehicle == vehicle:
                return r
        raise KeyError(vehicle)

    def duration(self, vehicle: str = "chain") -> float:
        return self.row(vehicle).duration

    def boundary_speed(self, vehicle: str = "chain") -> float:
        return self.row(vehicle).boundary_speed_mps


def vehicle_labels(N: int) -> list[str]:
    return ["CAV"] + [f"HV{i}" for i in range(1, N + 1)]


class _Oracle:
    """Memoised collision flags per duration index."""

    def __init__(self, cfg, kind, mode, accel, resolution, settle):
        self.sim = Simulator(cfg, mode)
        self.kind, self.accel, self.res, self.settle = kind, accel, resolution, settle
        self.cache: dict[int, np.ndarray] = {}

    def flags(self, idx: int) -> np.ndarray:
        if idx not in self.cache:
            spec = ScenarioSpec(self.kind, self.accel, idx * self.res, settle=self.settle)
            log = self.sim.run(spec)
            self.cache[idx] = np.any(log.gaps <= 0.0, axis=0)
        return self.cache[idx]

    def safe(self, idx: int, vehicle: int | None) -> bool:
        f = self.flags(idx)
        return not (f.any() if vehicle is None else f[vehicle])


def _bisect(oracle: _Oracle, vehicle: int | None, n_max: int) -> int:
    """Largest safe index in [0, n_max], assuming safety is monotone in duration."""
    if oracle.safe(n_max, vehicle):
        return n_max
    if not oracle.safe(0, vehicle):
        return -1
    lo, hi = 0, n_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if oracle.safe(mid, vehicle):
            lo = mid
        else:
            hi = mid
    return lo


def default_cap(kind: ScenarioKind, v_star: float, accel: float) -> float:
    if kind is ScenarioKind.HEAD_BRAKE:
        return v_star / accel  # head reaches standstill
    return 8.0


def safety_region(cfg: PlatoonConfig, mode: ControllerMode | str, kind: ScenarioKind | str,
                  tau_u: float | None = None, *, accel: float = 5.0, cap: float | None = None,
                  resolution: float = 0.02,
                  settle: float = 10.0) -> SafetyRegionResult:
    """Per-vehicle and chain-level boundaries for one configuration."""
    kind, mode = ScenarioKind(kind), ControllerMode(mode)
    if tau_u is not None:
        cfg = cfg.replace(tau_u=float(tau_u))
    if kind is ScenarioKind.QUIET:
        raise ValueError("a disturbance scenario is required")
    if accel <= 0 or resolution <= 0:
        raise ValueError("accel and resolution must be positive")
    cap = default_cap(kind, cfg.v_star, accel) if cap is None else cap
    n_max = int(math.floor(cap / resolution + 1e-9))
    oracle = _Oracle(cfg, kind, mode, accel, resolution, settle)
    sign = -1.0 if kind is ScenarioKind.HEAD_BRAKE else 1.0
    targets = list(enumerate(vehicle_labels(cfg.N))) + [(None, CHAIN)]
    rows = []
    for vid, label in targets:
        idx = _bisect(oracle, vid, n_max)
        dur = max(idx, 0) * resolution if idx >= 0 else float("nan")
        speed = cfg.v_star + sign * accel * dur if idx >= 0 else float("nan")
        rows.append(RegionRow(kind.value, mode.value, cfg.tau_u, label, dur, speed,
                              at_cap=idx == n_max))
    return SafetyRegionResult(kind.value, mode.value, cfg.tau_u, tuple(rows))


def _region_job(args):
    cfg, mode, kind, kw = args
    return safety_region(cfg, mode, kind, **kw)


def sweep_delays(cfg: PlatoonConfig, modes: Iterable[str] = ("nominal", "rstc-full"),
                 taus: Sequence[float] = (0.2, 0.4, 0.6, 0.8),
                 scenarios: Iterable[str] = ("head-brake", "follower-accel"), *,
                 N: int | None = None, jobs: int = 1, **kw) -> list[SafetyRegionResult]:
    """Full (scenario, mode, tau_u) cross product; results are deterministic."""
    base = cfg.replace(N=N, K=None) if N is not None and N != cfg.N else cfg
    for tau in taus:
        base.replace(tau_u=float(tau))  # validates grid alignment up front
    tasks = [(base.replace(tau_u=float(tau)), m, sc, kw)
             for sc in scenarios for m in modes for tau in taus]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_region_job, tasks))
    else:
        results = [_region_job(t) for t in tasks]
    return results


def write_region_csv(results: Sequence[SafetyRegionResult], path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "mode", "tau_u", "vehicle", "boundary_speed_mps"])
        for r in (row for res in results for row in res.rows):
            w.writerow([r.scenario, r.mode, f"{r.tau_u:g}", r.vehicle,
                        "" if math.isnan(r.boundary_speed_mps) else f"{r.boundary_speed_mps:.2f}"])
