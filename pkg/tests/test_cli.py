import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from llb.cli import main
from llb.config import ConfigError, config_from_dict, config_to_dict, dump_json, load_config
from llb.experiments import (
    MissingData,
    checkpoint_every,
    execute_run,
    execute_sweep,
    execute_verify,
    initial_field,
    read_monitors,
)
from llb.littlewood_paley import besov
from llb.plotting import plot_run

LLB = shutil.which("llb")


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def spawn(*args, env=None):
    cmd = [LLB] if LLB else [sys.executable, "-m", "llb.cli"]
    return subprocess.run(cmd + list(args), capture_output=True, text=True, env=env)


ZERO = {"kind": "solve", "grid": {"n": 8}, "horizon": 1.0, "integrator": {"dt": 0.25}}


def test_unknown_key_names_the_path():
    with pytest.raises(ConfigError, match=r"params\.rhoo"):
        config_from_dict({"kind": "solve", "params": {"rhoo": 3}})
    with pytest.raises(ConfigError, match=r"grid\.n"):
        config_from_dict({"kind": "solve", "grid": {"n": "big"}})
    with pytest.raises(ConfigError, match="horizon"):
        config_from_dict({"kind": "solve", "horizon": -1})
    with pytest.raises(ConfigError, match="kind"):
        config_from_dict({"kind": "dance"})


def test_config_round_trip_with_infinity():
    cfg = config_from_dict({"kind": "solve", "params": {"cutoff_n": "inf"}})
    assert math.isinf(cfg.params.cutoff_n)
    again = config_from_dict(json.loads(dump_json(config_to_dict(cfg))))
    assert again == cfg


def test_sweep_ladder_validation():
    base = {"kind": "sweep-smallness", "sweep": {}}
    for ladder in ([1e-3], [1e-4, 1e-3, 1e-3], [1e-2, 1e-3, 1e-4], [0.0, 1e-3, 1e-2]):
        base["sweep"]["amplitudes"] = ladder
        with pytest.raises(ConfigError, match="sweep.amplitudes"):
            config_from_dict(base)


def test_unknown_suite_names_valid_set():
    with pytest.raises(ConfigError, match="bernstein"):
        config_from_dict({"kind": "verify", "verify": {"suites": ["nope"]}})


def test_initial_profiles():
    g = {"n": 16}
    cfg = config_from_dict({"kind": "solve", "grid": g, "initial": {"profile": "single-mode", "amplitude": 2.0}})
    u = initial_field(cfg)
    assert u.coeffs[0, 1, 0, 0] == 1.0 and u.coeffs[0, -1, 0, 0] == 1.0
    cfg = config_from_dict(
        {"kind": "solve", "grid": g, "initial": {"profile": "random-band", "j_lo": 0, "j_hi": 1, "target_besov32": 0.1}}
    )
    assert besov(initial_field(cfg), 1.5) == pytest.approx(0.1, rel=1e-12)
    cfg = config_from_dict({"kind": "solve", "grid": g, "initial": {"profile": "single-mode", "k": [8, 0, 0]}})
    with pytest.raises(ConfigError, match="initial.k"):
        initial_field(cfg)
    cfg = config_from_dict({"kind": "solve", "grid": g, "initial": {"profile": "gaussian-bump", "component": 3}})
    u = initial_field(cfg)
    assert np.abs(u.coeffs[:2]).max() == 0 and u.coeffs[2, 0, 0, 0].real > 0


def test_checkpoint_cadence():
    assert checkpoint_every(1.0, 0.01) == 10
    assert checkpoint_every(1.0, 0.3) == 1


def test_zero_run_layout_and_plots(tmp_path):
    cfg = config_from_dict(ZERO)
    out = tmp_path / "run"
    res = execute_run(cfg, out)
    assert not res.diverged
    mon = read_monitors(out / "monitors.csv")
    assert mon["t"].size == 5
    for col, arr in mon.items():
        if col == "psi_t":
            assert np.all(arr == 1)
        elif col != "t":
            assert np.all(arr == 0), col
    names = sorted(p.name for p in (out / "checkpoints").iterdir())
    assert names[0] == "000000.llbs" and names[-1] == "000004.llbs"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "completed" and summary["smallness"]["passed"]
    paths = plot_run(out)
    assert sorted(p.name for p in paths) == ["besov.svg", "blowup.svg", "energy.svg", "phipsi.svg"]
    first = [p.read_bytes() for p in paths]
    assert all(len(b) > 0 for b in first)
    assert [p.read_bytes() for p in plot_run(out)] == first
    with pytest.raises(MissingData):
        plot_run(tmp_path / "nowhere")


def test_constant_data_matches_scalar_ode(tmp_path):
    c0 = 0.1
    cfg = config_from_dict(
        {
            "kind": "solve",
            "grid": {"n": 8},
            "horizon": 5.0,
            "integrator": {"dt": 0.01},
            "initial": {"profile": "constant", "amplitude": c0},
        }
    )
    res = execute_run(cfg, tmp_path / "c")
    exact = 1 / math.sqrt((1 / c0**2 + 1) * math.exp(10.0) - 1)
    energy = read_monitors(tmp_path / "c" / "monitors.csv")["L2_energy"][-1]
    l2 = math.sqrt(energy)
    assert l2 == pytest.approx(exact * (2 * math.pi) ** 1.5, rel=1e-8)
    assert res.state.t == pytest.approx(5.0)


def test_exit_codes_by_spawning(tmp_path):
    ok = write(tmp_path, ZERO)
    r = spawn("solve", "--config", ok, "--out", str(tmp_path / "a"))
    assert r.returncode == 0, r.stderr
    r = spawn("plot", str(tmp_path / "a"))
    assert r.returncode == 0 and (tmp_path / "a" / "energy.svg").exists()
    bad = write(tmp_path, {"kind": "solve", "horizon": 1, "bogus": 1}, "bad.json")
    r = spawn("solve", "--config", bad, "--out", str(tmp_path / "b"))
    assert r.returncode == 1 and "bogus" in r.stderr
    r = spawn("verify", "--config", ok, "--out", str(tmp_path / "b"))
    assert r.returncode == 1
    boom = dict(ZERO, initial={"profile": "single-mode", "amplitude": 1.0}, integrator={"dt": 0.25, "norm_ceiling": 1e-6})
    r = spawn("solve", "--config", write(tmp_path, boom, "boom.json"), "--out", str(tmp_path / "c"))
    assert r.returncode == 2
    assert json.loads((tmp_path / "c" / "summary.json").read_text())["status"] == "diverged"
    r = spawn("plot", str(tmp_path / "missing"))
    assert r.returncode == 1


def test_out_dir_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path, ZERO, "envrun.json")
    monkeypatch.setenv("LLB_OUT_DIR", str(tmp_path / "root"))
    assert main(["solve", "--config", cfg]) == 0
    assert (tmp_path / "root" / "envrun" / "monitors.csv").exists()


def test_verify_is_deterministic(tmp_path):
    data = {"kind": "verify", "seed": 7, "verify": {"suites": ["bernstein"], "count": 50, "n": 16, "doubling": False}}
    cfg = write(tmp_path, data)
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v1")]) == 0
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v2")]) == 0
    a = (tmp_path / "v1" / "verdicts.jsonl").read_bytes()
    assert a == (tmp_path / "v2" / "verdicts.jsonl").read_bytes()
    rows = [json.loads(line) for line in a.decode().splitlines()]
    assert rows and all(r["name"].startswith("bernstein") and r["passed"] for r in rows)
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v3"), "--suite", "nope"]) == 1


def test_small_sweep(tmp_path):
    cfg = config_from_dict(
        {
            "kind": "sweep-smallness",
            "grid": {"n": 16},
            "horizon": 0.5,
            "params": {"cutoff_n": 4},
            "integrator": {"dt": 0.05},
            "initial": {"profile": "two-mode", "amplitude": 1.0},
            "monitors": {"blowup": False},
            "sweep": {"amplitudes": [1e-4, 1e-3, 1e-2]},
        }
    )
    results = execute_sweep(cfg, tmp_path / "s", workers=1)
    assert [r["amplitude"] for r in results] == [1e-4, 1e-3, 1e-2]
    assert results[0]["classification"] == "decayed"
    assert all(r["classification"] in ("decayed", "bounded", "diverged(grid-limited)") for r in results)
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("amplitude,classification") and len(lines) == 4
    assert (tmp_path / "s" / "points" / "002" / "monitors.csv").exists()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_execute_verify_all_suites_small(tmp_path):
    cfg = config_from_dict({"kind": "verify", "verify": {"count": 4, "n": 16, "doubling": False}})
    verdicts = execute_verify(cfg, tmp_path)
    assert len(verdicts) >= 9
    assert all(v["passed"] for v in verdicts)
