"""Run orchestration: initial data, run directories, sweeps and verdict files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, ExperimentConfig, config_to_dict, dump_json
from .inequalities import FieldEnsembleSpec, generate_field, run_suites, sample_seed
from .littlewood_paley import besov
from .solver import (
    LLBParams,
    MonitorSample,
    Solver,
    SolverSettings,
    SolverState,
    StepDiverged,
    condition_integral,
    fit_c1,
    initial_state,
    smallness_monitor,
    stability_probe,
)
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    forward_transform,
    read_checkpoint,
    write_checkpoint,
)
from .littlewood_paley import build_partition

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_FAILED = 3

CHECKPOINT_DIR = "checkpoints"
MONITORS = "monitors.csv"
PROGRESS = "progress.json"
SUMMARY = "summary.json"


class MissingData(FileNotFoundError):
    pass


# -- configuration to objects -----------------------------------------------------


def make_grid(cfg: ExperimentConfig) -> Grid:
    return Grid(cfg.grid.n, cfg.grid.box_length)


def make_params(cfg: ExperimentConfig) -> LLBParams:
    return LLBParams(**asdict(cfg.params))


def make_settings(cfg: ExperimentConfig) -> SolverSettings:
    m, it = cfg.monitors, cfg.integrator
    return SolverSettings(
        dt=it.dt,
        max_halvings=it.max_halvings,
        norm_ceiling=it.norm_ceiling,
        damped=m.damped,
        hm_order=m.hm_order,
        c1=m.c1,
        condition_c=m.condition_c,
        blowup=m.blowup,
        phi_psi=m.phi_psi,
        l4=m.l4,
        hm=m.hm,
    )


def _cosine(grid: Grid, k, component: int, amplitude: float) -> np.ndarray:
    """Coefficients of ``amplitude cos(k.x) e_component``."""
    n = grid.n
    k = np.asarray(k, dtype=int)
    if np.any(np.abs(k) >= n // 2):
        raise ConfigError(f"initial.k: wavevector {k.tolist()} not below the Nyquist index {n // 2}")
    c = np.zeros((3, n, n, n), dtype=complex)
    c[(component - 1,) + tuple(k % n)] += amplitude / 2
    c[(component - 1,) + tuple((-k) % n)] += amplitude / 2
    return c


def initial_field(cfg: ExperimentConfig, grid: Grid | None = None) -> SpectralField:
    grid = make_grid(cfg) if grid is None else grid
    ini = cfg.initial
    n = grid.n
    if ini.profile == "zero":
        u = SpectralField.zeros(grid)
    elif ini.profile == "constant":
        value = ini.value
        if value is None:
            value = [0.0, 0.0, 0.0]
            value[ini.component - 1] = ini.amplitude
        c = np.zeros((3, n, n, n), dtype=complex)
        c[:, 0, 0, 0] = value
        u = SpectralField(grid, c)
    elif ini.profile == "single-mode":
        u = SpectralField(grid, _cosine(grid, ini.k, ini.component, ini.amplitude))
    elif ini.profile == "two-mode":
        c = _cosine(grid, ini.k, ini.component, ini.amplitude) + _cosine(
            grid, ini.k2, ini.component2, ini.amplitude
        )
        u = SpectralField(grid, c)
    elif ini.profile == "gaussian-bump":
        x = grid.coordinates() - grid.box_length / 2
        bump = ini.amplitude * np.exp(-np.sum(x * x, axis=0) / (2 * ini.width**2))
        values = np.zeros((3, n, n, n))
        values[ini.component - 1] = bump
        u = forward_transform(PhysicalField(grid, values))
    elif ini.profile == "random-band":
        spec = FieldEnsembleSpec(
            count=1,
            spectrum="band",
            j_lo=ini.j_lo,
            j_hi=ini.j_hi,
            amplitude=ini.amplitude,
            seed=cfg.seed if ini.seed is None else ini.seed,
            components=3,
            n=n,
            box_length=grid.box_length,
        )
        u = generate_field(spec, sample_seed(spec, 0))
    else:
        u, _ = read_checkpoint(ini.path)
        if u.grid != grid:
            raise ConfigError(f"initial.path: checkpoint grid n={u.grid.n} does not match grid.n={n}")
    if ini.target_besov32 is not None:
        params = make_params(cfg)
        from .solver import prepare_initial

        norm = besov(prepare_initial(u, params), 1.5)
        if not norm > 0:
            raise ConfigError("initial.target_besov32: initial data has zero B^{3/2} norm after projection")
        u = u * (ini.target_besov32 / norm)
    return u


# -- run directories ------------------------------------------------------------------


def resolve_out(cfg: ExperimentConfig, out: str | None, config_path: str | None) -> Path:
    if out is not None:
        return Path(out)
    if cfg.output_dir is not None:
        return Path(cfg.output_dir)
    stem = Path(config_path).stem if config_path else cfg.kind
    return Path(os.environ.get("LLB_OUT_DIR", "runs")) / stem


def format_row(values) -> str:
    return ",".join("%.17g" % v for v in values) + "\n"


def checkpoint_name(step: int) -> str:
    return f"{step:06d}.llbs"


def checkpoint_every(horizon: float, dt: float) -> int:
    return max(1, math.ceil(horizon / (10 * dt) - 1e-9))


def read_monitors(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingData(f"{path} not found")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != MonitorSample.columns():
        raise MissingData(f"{path}: missing or unexpected header")
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
    return {name: data[:, i] for i, name in enumerate(rows[0])}


@dataclass
class RunResult:
    out: Path
    state: SolverState
    diverged: bool
    message: str = ""


def _write_progress(out: Path, state: SolverState, every: int) -> None:
    progress = {
        "step": state.step_index,
        "checkpoint_every": every,
        "t": state.t,
        "dt": state.dt,
        "checkpoint": checkpoint_name(state.step_index),
        "accumulators": state.accumulators,
        "sample": state.sample.row(),
    }
    tmp = out / (PROGRESS + ".tmp")
    tmp.write_text(json.dumps(progress, indent=2) + "\n")
    tmp.replace(out / PROGRESS)


def _sample_from_row(row) -> MonitorSample:
    return MonitorSample(*[float("nan") if v is None else float(v) for v in row])


def _resume_state(out: Path, cfg: ExperimentConfig, grid: Grid) -> SolverState:
    progress = json.loads((out / PROGRESS).read_text())
    u, t = read_checkpoint(out / CHECKPOINT_DIR / progress["checkpoint"])
    initial, _ = read_checkpoint(out / CHECKPOINT_DIR / checkpoint_name(0))
    if u.grid != grid:
        raise ConfigError("resume: checkpoint grid does not match the configuration")
    step = int(progress["step"])
    # drop monitor rows written after the checkpoint
    lines = (out / MONITORS).read_text().splitlines(keepends=True)
    (out / MONITORS).write_text("".join(lines[: step + 2]))
    return SolverState(
        u, t, float(progress["dt"]), step, initial, _sample_from_row(progress["sample"]), progress["accumulators"]
    )


def summarize(cfg: ExperimentConfig, state: SolverState, status: str, message: str, out: Path) -> dict:
    params = make_params(cfg)
    grid = state.u.grid
    c1 = cfg.monitors.c1 if cfg.monitors.c1 is not None else fit_c1(build_partition(grid))
    small = smallness_monitor(state, params, cfg.monitors.eps, c1)
    mon = read_monitors(out / MONITORS)
    t = mon["t"]
    blow = mon["blowup_integrand"]
    increments = 0.5 * np.diff(t) * (blow[1:] + blow[:-1])
    summary = {
        "status": status,
        "message": message,
        "steps": state.step_index,
        "t": state.t,
        "dt": state.dt,
        "terminal": dict(zip(MonitorSample.columns(), state.sample.row())),
        "accumulators": state.accumulators,
        "smallness": {
            "passed": small.passed,
            "eps": small.eps,
            "lhs": small.lhs,
            "sup_besov_32": small.sup_term,
            "dissipation_term": small.dissipation_term,
            "damping_term": small.damping_term,
            "c1": small.c1,
        },
        "conservation_residual_max_abs": float(np.max(np.abs(mon["conservation_residual"]))) if t.size else 0.0,
        "besov_32_max": float(np.max(mon["besov_32"])) if t.size else 0.0,
        "blowup": {
            "integral": state.accumulators["int_blowup"],
            "last_increment": float(increments[-1]) if increments.size else 0.0,
            "converged": bool(increments.size and abs(increments[-1]) < 1e-12),
        },
        "condition_integral": condition_integral(t, mon["phi_t"], mon["psi_t"], cfg.monitors.condition_c)
        if cfg.monitors.phi_psi
        else math.nan,
    }
    (out / SUMMARY).write_text(dump_json(summary))
    return summary


def execute_run(
    cfg: ExperimentConfig,
    out: str | Path,
    resume: bool = False,
    on_step: Callable[[SolverState], None] | None = None,
) -> RunResult:
    """Run one solve to the horizon, maintaining the run directory.

    ``on_step`` is invoked after each step's monitor row is written; an
    exception raised from it interrupts the run as a crash would.
    """
    out = Path(out)
    grid = make_grid(cfg)
    params = make_params(cfg)
    settings = make_settings(cfg)
    ckdir = out / CHECKPOINT_DIR
    if resume and (out / PROGRESS).exists():
        state = _resume_state(out, cfg, grid)
        every = int(json.loads((out / PROGRESS).read_text())["checkpoint_every"])
    else:
        if out.exists():
            for name in (MONITORS, PROGRESS, SUMMARY):
                (out / name).unlink(missing_ok=True)
            shutil.rmtree(ckdir, ignore_errors=True)
        ckdir.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(dump_json(config_to_dict(cfg)))
        state = initial_state(initial_field(cfg, grid), params, settings)
        (out / MONITORS).write_text(",".join(MonitorSample.columns()) + "\n" + format_row(state.sample.row()))
        write_checkpoint(ckdir / checkpoint_name(0), state.u, state.t)
        every = checkpoint_every(cfg.horizon, state.dt)
        _write_progress(out, state, every)
    solver = Solver(grid, params, settings)
    horizon = cfg.horizon

    with open(out / MONITORS, "a") as fh:

        def callback(s: SolverState) -> None:
            fh.write(format_row(s.sample.row()))
            fh.flush()
            if s.step_index % every == 0 or s.t >= horizon * (1 - 1e-14):
                write_checkpoint(ckdir / checkpoint_name(s.step_index), s.u, s.t)
                _write_progress(out, s, every)
            if on_step is not None:
                on_step(s)

        holder = {"state": state}

        def track(s: SolverState) -> None:
            holder["state"] = s
            callback(s)

        try:
            state = solver.run(state, horizon, track)
        except StepDiverged as exc:
            last = holder["state"]
            write_checkpoint(ckdir / checkpoint_name(last.step_index), last.u, last.t)
            _write_progress(out, last, every)
            fh.flush()
            summarize(cfg, last, "diverged", str(exc), out)
            return RunResult(out, last, True, str(exc))
    summarize(cfg, state, "completed", "", out)
    return RunResult(out, state, False)


# -- stability ---------------------------------------------------------------------------


def execute_stability(cfg: ExperimentConfig, out: str | Path) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_json(config_to_dict(cfg)))
    seed = cfg.seed if cfg.stability.seed is None else cfg.stability.seed
    report = stability_probe(
        initial_field(cfg),
        cfg.stability.perturbation_scale,
        cfg.horizon,
        make_params(cfg),
        make_settings(cfg),
        seed=seed,
    )
    buf = io.StringIO()
    buf.write("t,ratio,budget,bound\n")
    for row in zip(report.times, report.ratio, report.budget, report.bound):
        buf.write(format_row(row))
    (out / "stability.csv").write_text(buf.getvalue())
    summary = {
        "status": "completed",
        "initial_gap_besov_32": report.initial_norm,
        "max_ratio": float(report.ratio.max()),
        "terminal_ratio": float(report.ratio[-1]),
        "gronwall_budget": float(report.budget[-1]),
        "within_bound": report.within_bound,
    }
    (out / SUMMARY).write_text(dump_json(summary))
    return summary


# -- sweeps ---------------------------------------------------------------------------------


def classify(result: RunResult) -> str:
    if result.diverged:
        return "diverged(grid-limited)"
    mon = read_monitors(result.out / MONITORS)
    b = mon["besov_32"]
    return "decayed" if b[-1] < b[0] and b.max() <= b[0] * (1 + 1e-10) else "bounded"


def _sweep_point(args) -> dict:
    cfg, out, amplitude = args
    try:
        result = execute_run(cfg, out)
    except Exception as exc:  # a crashed point is recorded, not fatal to the sweep
        return {"amplitude": amplitude, "classification": "diverged(grid-limited)", "error": str(exc)}
    summary = json.loads((Path(out) / SUMMARY).read_text())
    return {
        "amplitude": amplitude,
        "classification": classify(result),
        "smallness_passed": summary["smallness"]["passed"],
        "smallness_lhs": summary["smallness"]["lhs"],
        "blowup_integral": summary["accumulators"]["int_blowup"],
        "besov_32_max": summary["besov_32_max"],
        "status": summary["status"],
    }


def execute_sweep(cfg: ExperimentConfig, out: str | Path, workers: int | None = None) -> list[dict]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_json(config_to_dict(cfg)))
    jobs = []
    for i, amp in enumerate(cfg.sweep.amplitudes):
        point = replace(cfg, kind="solve", initial=replace(cfg.initial, target_besov32=amp))
        jobs.append((point, str(out / "points" / f"{i:03d}"), amp))
    workers = workers or cfg.sweep.workers or os.cpu_count() or 1
    if workers == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_point, jobs))
    cols = ["amplitude", "classification", "smallness_passed", "smallness_lhs", "blowup_integral", "besov_32_max"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in results:
        buf.write(",".join(_cell(r.get(c, "")) for c in cols) + "\n")
    (out / "sweep.csv").write_text(buf.getvalue())
    (out / "sweep.json").write_text(dump_json({"points": results}))
    return results


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


# -- verdicts -----------------------------------------------------------------------------------


def execute_verify(cfg: ExperimentConfig, out: str | Path, suites: list[str] | None = None) -> list[dict]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    v = cfg.verify
    spec = FieldEnsembleSpec(
        count=v.count,
        spectrum=v.spectrum,
        j_lo=v.j_lo,
        j_hi=v.j_hi,
        alpha=v.alpha,
        amplitude=v.amplitude,
        seed=cfg.seed if v.seed is None else v.seed,
        components=v.components,
        n=v.n,
    )
    verdicts = [x.to_dict() for x in run_suites(suites or v.suites, spec, v.doubling)]
    text = "".join(json.dumps(_jsonable(d), sort_keys=True) + "\n" for d in verdicts)
    (out / "verdicts.jsonl").write_text(text)
    return verdicts


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x
