"""Robust safety-critical control of a CAV in mixed traffic with delays."""

from .config import ConfigError, PlatoonConfig, RunConfig, load_config
from .sim import ControllerMode, ScenarioKind, ScenarioSpec, Simulator, detect_collision, run
from .sweep import safety_region, sweep_delays

__all__ = ["ConfigError", "PlatoonConfig", "RunConfig", "load_config", "ControllerMode",
           "ScenarioKind", "ScenarioSpec", "Simulator", "detect_collision", "run",
           "safety_region", "sweep_delays"]
__version__ = "0.1.0"
