"""Command-line entry point: ``rstc simulate | sweep | diagnose``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .model import linearize_hv, solve_equilibrium_gap
from .numkernel import NumericalError, expm, solve_lyapunov, spectral_norm, sym_eigen
from .observer import ObserverDesign, OutputTransform
from .sim import ControllerMode, ScenarioKind, ScenarioSpec, Simulator
from .sweep import sweep_delays, write_region_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_SCENARIO_KEYS = {"magnitude", "duration", "onset", "horizon", "settle"}
_SWEEP_KEYS = {"modes", "taus", "N", "accel", "cap", "resolution", "settle"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rstc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run one closed-loop simulation"),
                        ("sweep", "compute safety regions over actuator delays"),
                        ("diagnose", "print model, observer and structural checks")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        s.add_argument("--scenario", choices=[k.value for k in ScenarioKind
                                              if k is not ScenarioKind.QUIET])
        s.add_argument("--mode", choices=[m.value for m in ControllerMode])
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--dt", type=float)
        s.add_argument("--tau-u", type=float, dest="tau_u")
        s.add_argument("--tau-y", type=float, dest="tau_y")
        s.add_argument("--jobs", type=int, default=None)
    return p


def _resolve(args) -> RunConfig:
    rc = load_config(args.config)
    overrides = {k: getattr(args, k) for k in ("dt", "tau_u", "tau_y")
                 if getattr(args, k) is not None}
    platoon = rc.platoon
    if overrides:
        try:
            platoon = platoon.replace(**overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    scenario = dict(rc.scenario)
    if args.scenario:
        scenario["kind"] = args.scenario
    mode = args.mode or rc.mode
    try:
        ControllerMode(mode)
    except ValueError:
        raise ConfigError(f"unknown controller mode {mode!r}") from None
    out = str(args.out) if args.out is not None else rc.out
    return RunConfig(platoon=platoon, scenario=scenario, mode=mode, sweep=rc.sweep, out=out)


def scenario_from(d: dict) -> ScenarioSpec:
    d = dict(d)
    kind = ScenarioKind(d.pop("kind", "head-brake"))
    extra = set(d) - _SCENARIO_KEYS
    if extra:
        raise ConfigError(f"unknown keys in [scenario]: {sorted(extra)}")
    if kind is ScenarioKind.HEAD_BRAKE:
        defaults = {"magnitude": 5.0, "duration": 3.5}
    else:
        defaults = {"magnitude": 5.0, "duration": 2.6}
    defaults.update({k: v for k, v in d.items() if v is not None})
    try:
        return ScenarioSpec(kind, **defaults)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


def cmd_simulate(rc: RunConfig) -> int:
    spec = scenario_from(rc.scenario)
    sim = Simulator(rc.platoon, rc.mode)
    log = sim.run(spec)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.kind.value}_{rc.mode}"
    log.to_csv(out / f"trajectory_{stem}.csv")
    if rc.mode != ControllerMode.NOMINAL.value:
        (out / f"constraints_{stem}.csv").write_text(
            "t,label,coeff_u,rhs,h,M,Z,active\n" + "\n".join(log.constraint_dump()) + "\n")
    s = log.summary()
    print(f"scenario: {spec.kind.value}  mode: {rc.mode}  steps: {log.steps}")
    if s["collision"] is None:
        print("collision: none")
    else:
        c = s["collision"]
        print(f"collision: t={c['t']:.2f} s vehicle={c['vehicle']}")
    print(f"min h: {s['min_h']:.4f} m (vehicle {s['min_h_vehicle']})")
    print(f"min gap: {s['min_gap']:.4f} m")
    print(f"max |u|: {s['max_abs_u']:.4f} m/s^2")
    print(f"trajectory: {out / f'trajectory_{stem}.csv'}")
    return EXIT_OK


def cmd_sweep(rc: RunConfig, jobs: int | None) -> int:
    sw = dict(rc.sweep)
    extra = set(sw) - _SWEEP_KEYS
    if extra:
        raise ConfigError(f"unknown keys in [sweep]: {sorted(extra)}")
    modes = sw.pop("modes", ["nominal", "rstc-full"])
    if not modes:
        raise ConfigError("sweep needs at least one mode")
    for m in modes:
        try:
            ControllerMode(m)
        except ValueError:
            raise ConfigError(f"unknown controller mode {m!r}") from None
    taus = sw.pop("taus", [0.2, 0.4, 0.6, 0.8])
    if not taus:
        raise ConfigError("sweep needs at least one tau_u")
    N = sw.pop("N", 2)
    kind = rc.scenario.get("kind", "head-brake")
    grid = len(modes) * len(taus)
    if jobs is None:
        jobs = min(grid, os.cpu_count() or 1)
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    try:
        for tau in taus:
            rc.platoon.replace(N=N, K=None, tau_u=float(tau))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    results = sweep_delays(rc.platoon, modes, taus, [kind], N=N, jobs=jobs, **sw)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"safety_region_{kind}.csv"
    write_region_csv(results, path)
    for res in results:
        r = res.row("chain")
        print(f"{res.scenario} {res.mode} tau_u={res.tau_u:g}: chain boundary "
              f"{r.boundary_speed_mps:.2f} m/s (duration {r.duration:.2f} s)")
    print(f"table: {path}")
    return EXIT_OK


def cmd_diagnose(rc: RunConfig) -> int:
    cfg = rc.platoon
    eq = solve_equilibrium_gap(cfg.v_star, cfg.ovm)
    lin = linearize_hv(eq, cfg.ovm)
    platoon = cfg.platoon()
    M = platoon.matrices()
    params = cfg.safety_params()
    print(f"equilibrium gap s*: {eq.s_star:.9f} m at v* = {cfg.v_star:g} m/s")
    print(f"linearized coefficients: a1={lin.a1:.10f} a2={lin.a2:.10f} a3={lin.a3:.10f}")
    print("nu_i: " + " ".join(f"{v:.6f}" for v in params.nu))
    E = expm(M.A, cfg.tau_u)
    print(f"||exp(A tau_u)||: {spectral_norm(E):.10f}")
    d = M.D[:, 0]
    dev_ad = float(np.max(np.abs(M.A @ d)))
    dev_ed = float(np.max(np.abs(E @ d - d)))
    print(f"check A D = 0: {'PASS' if dev_ad <= 1e-10 else 'FAIL'} (max deviation {dev_ad:.3e})")
    print(f"check exp(A tau_u) D = D: {'PASS' if dev_ed <= 1e-10 else 'FAIL'} "
          f"(max deviation {dev_ed:.3e})")
    transform = OutputTransform(M, cfg.tau_u, [0.0, cfg.tau_y], cfg.dt)
    n = M.n
    design = ObserverDesign.synthesize(M, transform.C_bar, cfg.observer_q * np.eye(n),
                                       cfg.observer_r * np.eye(transform.C_bar.shape[0]))
    F = M.A - design.L @ design.C_bar
    P = solve_lyapunov(F, np.eye(n))
    w = sym_eigen(P)
    print(f"observer A - L Cbar: Hurwitz (Lyapunov P > 0, eig range "
          f"[{w[0]:.6g}, {w[-1]:.6g}])")
    print(f"certified decay: upsilon={design.upsilon:.6f} lambda={design.lam:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        rc = _resolve(args)
        if args.command == "simulate":
            return cmd_simulate(rc)
        if args.command == "sweep":
            return cmd_sweep(rc, args.jobs)
        return cmd_diagnose(rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
