"""Run configuration: defaults, YAML loading and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .history import grid_steps
from .model import OvmParams, Platoon
from .predictor import DisturbanceBounds
from .safety import SafetyParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlatoonConfig:
    """Physical, delay and controller parameters.

    ``K`` is the nominal feedback gain; when omitted it is
    ``[a1, -a2, -2, 0.2, ..., -2, 0.2]`` built from the linearized driver.
    ``eps_bar`` bounds the initial observer error; ``None`` means "1.1 times
    the actual initial error" (only meaningful inside a simulation).
    """

    N: int = 4
    v_star: float = 20.0
    ovm: OvmParams = field(default_factory=OvmParams)
    dt: float = 0.01
    tau_u: float = 0.4
    tau_y: float = 0.8
    psi0: float = 0.5
    psi: float = 1.0
    eta: float = 0.2
    gamma: float = 2.0
    penalty: float = 1e4
    a_low: float = -5.0
    a_up: float = 5.0
    K: tuple[float, ...] | None = None
    observer_q: float = 1.0
    observer_r: float = 1.0
    eps_bar: float | None = None
    u_min: float | None = None
    u_max: float | None = None

    def __post_init__(self):
        if self.N < 0:
            raise ConfigError("N must be non-negative")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        for name in ("tau_u", "tau_y"):
            value = getattr(self, name)
            if value < 0:
                raise ConfigError(f"{name} must be non-negative")
            try:
                grid_steps(value, self.dt, name)
            except ValueError as exc:
                raise ConfigError(f"delay not grid-aligned: {exc}") from None
        if not (0 < self.v_star < self.ovm.v_max):
            raise ConfigError(f"v_star must lie in (0, {self.ovm.v_max})")
        for name in ("psi0", "psi", "eta", "gamma", "penalty", "observer_q", "observer_r"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (self.a_low < 0 < self.a_up):
            raise ConfigError("need a_low < 0 < a_up")
        if self.K is not None and len(self.K) != 2 * self.N + 2:
            raise ConfigError(f"K must have {2 * self.N + 2} entries")
        if self.eps_bar is not None and self.eps_bar < 0:
            raise ConfigError("eps_bar must be non-negative")
        if self.u_min is not None and self.u_max is not None and self.u_min >= self.u_max:
            raise ConfigError("u_min must be below u_max")

    def replace(self, **changes) -> "PlatoonConfig":
        return dataclasses.replace(self, **changes)

    def platoon(self) -> Platoon:
        return Platoon.build(self.N, self.v_star, self.ovm)

    def safety_params(self) -> SafetyParams:
        return SafetyParams.uniform(self.N, self.psi0, self.psi, self.eta, self.gamma,
                                    self.penalty)

    def bounds(self) -> DisturbanceBounds:
        return DisturbanceBounds(self.a_low, self.a_up)

    def gain(self, platoon: Platoon | None = None) -> np.ndarray:
        if self.K is not None:
            return np.asarray(self.K, dtype=float)
        platoon = platoon or self.platoon()
        ref = platoon.coeffs[0] if platoon.coeffs else _reference_coeffs(self)
        return np.array([ref.a1, -ref.a2] + [-2.0, 0.2] * self.N)

    def head_gain(self, platoon: Platoon | None = None) -> float:
        platoon = platoon or self.platoon()
        return (platoon.coeffs[0] if platoon.coeffs else _reference_coeffs(self)).a3


def _reference_coeffs(cfg: PlatoonConfig):
    from .model import linearize_hv, solve_equilibrium_gap
    return linearize_hv(solve_equilibrium_gap(cfg.v_star, cfg.ovm), cfg.ovm)


@dataclass(frozen=True)
class RunConfig:
    platoon: PlatoonConfig = field(default_factory=PlatoonConfig)
    scenario: dict[str, Any] = field(default_factory=dict)
    mode: str = "rstc-full"
    sweep: dict[str, Any] = field(default_factory=dict)
    out: str = "out"


_PLATOON_KEYS = {
    ("platoon", "N"): "N",
    ("platoon", "v_star"): "v_star",
    ("delays", "dt"): "dt",
    ("delays", "tau_u"): "tau_u",
    ("delays", "tau_y"): "tau_y",
    ("safety", "psi0"): "psi0",
    ("safety", "psi"): "psi",
    ("safety", "eta"): "eta",
    ("safety", "gamma"): "gamma",
    ("safety", "penalty"): "penalty",
    ("safety", "a_low"): "a_low",
    ("safety", "a_up"): "a_up",
    ("safety", "eps_bar"): "eps_bar",
    ("controller", "K"): "K",
    ("controller", "u_min"): "u_min",
    ("controller", "u_max"): "u_max",
    ("observer", "q"): "observer_q",
    ("observer", "r"): "observer_r",
}

_SECTIONS = {"platoon", "ovm", "delays", "safety", "controller", "observer", "scenario",
             "sweep", "output"}


def _from_mapping(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for (section, key), name in _PLATOON_KEYS.items():
        sec = data.get(section) or {}
        if key in sec and sec[key] is not None:
            kwargs[name] = tuple(sec[key]) if name == "K" else sec[key]
    for section in ("platoon", "delays", "safety", "controller", "observer"):
        sec = data.get(section) or {}
        known = {k for (s, k) in _PLATOON_KEYS if s == section}
        if section == "controller":
            known |= {"mode"}
        extra = set(sec) - known
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    try:
        if data.get("ovm"):
            kwargs["ovm"] = OvmParams(**data["ovm"])
        platoon = PlatoonConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    controller = data.get("controller") or {}
    output = data.get("output") or {}
    return RunConfig(platoon=platoon, scenario=dict(data.get("scenario") or {}),
                     mode=controller.get("mode", "rstc-full"),
                     sweep=dict(data.get("sweep") or {}), out=output.get("dir", "out"))


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return _from_mapping(data or {})
