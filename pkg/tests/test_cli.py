from pathlib import Path

import pytest
import yaml

from rstc import cli
from rstc.config import ConfigError, PlatoonConfig, load_config
from rstc.model import OvmParams
from rstc.numkernel import RiccatiError

ROOT = Path(__file__).resolve().parents[1]
REFERENCE = ROOT / "configs" / "reference.yaml"


def test_shipped_config_equals_defaults():
    rc = load_config(REFERENCE)
    assert rc.platoon == PlatoonConfig()
    assert rc.mode == "rstc-full"
    assert rc.scenario["kind"] == "head-brake"


def test_default_values_table():
    c = PlatoonConfig()
    assert c.ovm == OvmParams(alpha=0.6, beta=0.9, s_st=5.0, s_go=40.0, v_max=35.0)
    assert (c.v_star, c.tau_u, c.tau_y, c.psi0, c.psi, c.dt, c.N) == (20, 0.4, 0.8, 0.5, 1, 0.01, 4)
    K = c.gain()
    assert K[0] == pytest.approx(0.9328111016061691)
    assert K[1] == pytest.approx(-1.5)
    assert K[2:].tolist() == [-2, 0.2] * 4
    assert c.head_gain() == pytest.approx(0.9)


def test_config_validation_messages(tmp_path):
    with pytest.raises(ConfigError, match="grid-aligned"):
        PlatoonConfig(dt=0.013)
    with pytest.raises(ConfigError):
        PlatoonConfig(K=(1.0, 2.0))
    bad = tmp_path / "bad.yaml"
    bad.write_text("platoon:\n  N: 4\n  speed: 3\n")
    with pytest.raises(ConfigError, match="speed"):
        load_config(bad)
    bad.write_text("extras: {}\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_simulate_nominal_reports_collision(tmp_path, capsys):
    code = cli.main(["simulate", "--mode", "nominal", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "collision: t=" in out and "vehicle=0" in out
    assert (tmp_path / "trajectory_head-brake_nominal.csv").exists()


def test_simulate_rstc_is_safe(tmp_path, capsys):
    code = cli.main(["simulate", "--config", str(REFERENCE), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0 and "collision: none" in out
    header = (tmp_path / "constraints_head-brake_rstc-full.csv").read_text().splitlines()[0]
    assert header == "t,label,coeff_u,rhs,h,M,Z,active"


def test_off_grid_dt_is_config_error(tmp_path, capsys):
    code = cli.main(["simulate", "--dt", "0.013", "--out", str(tmp_path)])
    assert code == 2
    assert "delay not grid-aligned" in capsys.readouterr().err


def _sweep_config(tmp_path, modes):
    data = yaml.safe_load(REFERENCE.read_text())
    data["sweep"].update(modes=modes, resolution=0.5, settle=5.0)
    path = tmp_path / "sweep.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_sweep_cardinality_and_determinism(tmp_path, capsys):
    cfg = _sweep_config(tmp_path, ["nominal", "rstc-full"])
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "1"]) == 0
    a = (tmp_path / "a" / "safety_region_head-brake.csv").read_bytes()
    b = (tmp_path / "b" / "safety_region_head-brake.csv").read_bytes()
    assert a == b
    lines = a.decode().splitlines()
    assert lines[0] == "scenario,mode,tau_u,vehicle,boundary_speed_mps"
    assert len(lines) == 1 + 2 * 4 * 4


def test_sweep_empty_modes(tmp_path, capsys):
    cfg = _sweep_config(tmp_path, [])
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_diagnose_report(capsys):
    assert cli.main(["diagnose"]) == 0
    out = capsys.readouterr().out
    assert "s*: 24.097013192" in out
    assert "a2=1.5000000000" in out and "a3=0.9000000000" in out
    assert out.count("PASS") == 2
    assert "upsilon=5.978213" in out


def test_diagnose_without_actuator_delay(capsys):
    assert cli.main(["diagnose", "--tau-u", "0"]) == 0
    assert "||exp(A tau_u)||: 1.0000000000" in capsys.readouterr().out


def test_numerical_failure_exit_code(monkeypatch, capsys):
    def boom(*a, **k):
        raise RiccatiError("no stabilising solution")

    monkeypatch.setattr("rstc.observer.solve_riccati_dual", boom)
    assert cli.main(["diagnose"]) == 3
    assert "no stabilising solution" in capsys.readouterr().err
