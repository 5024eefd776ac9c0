import csv
import json
import subprocess
import sys

import pytest

from nls_steer.cli import load_config, main, run, verify_rerun
from nls_steer.errors import ConfigError
from nls_steer.storage import SIGN_CONVENTION, RunManifest, read_trajectory

BASE = {"sign_convention": SIGN_CONVENTION, "time_unit": "model"}
CUBE = [[0, 0], [1, 0], [0, 1], [1, 1]]


def write(tmp_path, name, **fields):
    path = tmp_path / name
    path.write_text(json.dumps(dict(BASE, **fields)))
    return path


def simulate_config(tmp_path):
    return write(tmp_path, "sim.json", dim=2, cutoff=4, horizon=0.5, dt=1e-2,
                 initial_kind="plane_wave", initial_modes=[[1, 0]], initial_values=[[0.5, 0.0]])


def sweep_config(tmp_path):
    return write(tmp_path, "sweep.json", dim=2, cutoff=6, base=CUBE, targets=[[2, -1]], window=2,
                 target_mode=[2, -1], target_values=[[0.05, 0.0]], eps_ladder=[0.2, 0.1, 0.05],
                 dt=1e-2)


def numeric_files(root):
    return {p.relative_to(root).as_posix() for p in root.rglob("*")
            if p.is_file() and p.name != "manifest.json"}


def test_minimal_simulate(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(simulate_config(tmp_path)), "--out", str(out)]) == 0
    manifest = RunManifest.read(out)
    indexed = [o["path"] for o in manifest.outputs]
    assert sorted(indexed) == sorted(set(indexed)) == sorted(numeric_files(out))
    traj = read_trajectory(out)
    assert traj.times[-1] == pytest.approx(0.5)
    assert manifest.sign_convention == SIGN_CONVENTION
    assert manifest.discretization == {"dim": 2, "cutoff": 4, "s": 1.1, "dt": 1e-2}


def test_sweep_produces_ladder(tmp_path):
    out = tmp_path / "sweep"
    manifest = run(sweep_config(tmp_path), "sweep", out, workers=1)
    rows = list(csv.DictReader((out / "ladder.csv").open()))
    assert [float(r["eps"]) for r in rows] == [0.2, 0.1, 0.05]
    assert sorted(p.name for p in out.glob("run_*")) == ["run_000", "run_001", "run_002"]
    assert all(float(r["upsilon_end"]) == pytest.approx(3.141592653589793) for r in rows)
    assert manifest.chain == [{"r": [1, 0], "s": [0, 1], "new": [2, -1]}]


def test_rerun_is_byte_identical(tmp_path):
    first = tmp_path / "a"
    run(sweep_config(tmp_path), "sweep", first, workers=2)
    assert verify_rerun(first, tmp_path / "b", workers=1) == []
    run(simulate_config(tmp_path), "simulate", tmp_path / "c")
    assert verify_rerun(tmp_path / "c", tmp_path / "d") == []


def test_manifest_is_a_config(tmp_path):
    run(simulate_config(tmp_path), "simulate", tmp_path / "a")
    code = main(["simulate", "--config", str(tmp_path / "a" / "manifest.json"),
                 "--out", str(tmp_path / "b")])
    assert code == 0
    assert (tmp_path / "a" / "trajectory.bin").read_bytes() == \
        (tmp_path / "b" / "trajectory.bin").read_bytes()


def test_regularity_violation(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", dim=2, sobolev_s=1.0, base=CUBE)
    assert main(["saturate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "s > d/2" in capsys.readouterr().err


@pytest.mark.parametrize("fields", [
    {"time_unit": "model"},
    {"sign_convention": "u_t = i Lap u", "time_unit": "model"},
    dict(BASE, time_unit="seconds"),
    dict(BASE, dim=0),
    dict(BASE, unknown_field=1),
])
def test_schema_violations(tmp_path, fields):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(fields))
    assert main(["saturate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_missing_upstream_artifacts(tmp_path):
    steer = write(tmp_path, "steer.json", base=CUBE, observed=CUBE + [[2, -1]], eps_ladder=[0.1])
    assert main(["steer", "--config", str(steer), "--out", str(tmp_path / "o")]) == 2
    synth = write(tmp_path, "syn.json", base=CUBE, chain_file=str(tmp_path / "none.json"), eps=0.1,
                  target_mode=[2, -1], target_value=[0.5, 0.0])
    assert main(["synthesize", "--config", str(synth), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2


def test_unreachable_plan_is_numeric_failure(tmp_path):
    cfg = write(tmp_path, "plan.json", dim=1, base=[[0], [2]], targets=[[1]], window=5,
                sobolev_s=0.6)
    assert main(["plan", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_plan_then_synthesize(tmp_path):
    plan = write(tmp_path, "plan.json", base=CUBE, targets=[[2, -1]], window=3)
    assert main(["plan", "--config", str(plan), "--out", str(tmp_path / "p")]) == 0
    synth = write(tmp_path, "syn.json", base=CUBE, chain_file=str(tmp_path / "p" / "chain.json"),
                  eps=0.1, target_mode=[2, -1], target_value=[0.5, 0.0], samples=64)
    assert main(["synthesize", "--config", str(synth), "--out", str(tmp_path / "s")]) == 0
    bundles = json.loads((tmp_path / "s" / "bundles.json").read_text())
    assert bundles["bundles"][0]["N"] == 1
    assert {p.name for p in (tmp_path / "s").glob("program_mode_*.csv")} == \
        {"program_mode_1_0.csv", "program_mode_0_1.csv"}


def test_worker_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("NLS_STEER_WORKERS", "two")
    assert main(["simulate", "--config", str(simulate_config(tmp_path)),
                 "--out", str(tmp_path / "o")]) == 2


def test_config_defaults():
    cfg = load_config(dict(BASE))
    assert cfg["sobolev_s"] == pytest.approx(1.1) and cfg["dim"] == 2
    with pytest.raises(ConfigError):
        load_config(dict(BASE, dim=3, sobolev_s=1.5))


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "nls_steer.cli", "--help"], capture_output=True,
                         text=True, check=True)
    for name in ("saturate", "plan", "synthesize", "simulate", "steer", "relaxnorm", "sweep"):
        assert name in out.stdout
