"""One test per acceptance criterion, tolerances as stated."""
import math
import time

import numpy as np
import pytest

from conftest import band_field, mode_field
from llb.config import config_from_dict
from llb.experiments import execute_run, initial_field, read_monitors
from llb.inequalities import FieldEnsembleSpec, bernstein_sample, generate_field, run_suites, sample_seed
from llb.littlewood_paley import besov, build_partition, chi, dyadic_block, phi
from llb.solver import LLBParams, Solver, SolverSettings, initial_state, smallness_monitor, stability_probe
from llb.spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    apply_laplacian,
    forward_transform,
    heat_propagate,
    inner_product,
    l2_norm,
    pointwise_cross_with_laplacian,
)


def run_to(u0, params, dt, horizon, callback=None, **kw):
    settings = SolverSettings(dt=dt, **kw)
    state = initial_state(u0, params, settings)
    return Solver(u0.grid, params, settings).run(state, horizon, callback)


def test_c01_partition_of_unity_and_reconstruction(grid64):
    start = time.perf_counter()
    P = build_partition(grid64)
    k = grid64.shell_k[1:]
    resolvable = k <= grid64.kmax
    total = chi(k) + sum(phi(k / 2.0**q) for q in range(0, 12))
    assert np.abs(total - 1)[resolvable].max() < 1e-12
    rng = np.random.default_rng(1)
    for _ in range(100):
        f = forward_transform(PhysicalField(grid64, rng.standard_normal((1, 64, 64, 64))))
        recon = sum((dyadic_block(f, j, P) for j in P.indices), SpectralField.zeros(grid64, 1))
        mean_free = f.replace(f.coeffs.copy())
        mean_free.coeffs[:, 0, 0, 0] = 0
        assert l2_norm(recon - mean_free) < 1e-12 * l2_norm(f)
    assert time.perf_counter() - start < 30


def test_c02_transform_and_heat_oracles(grid16):
    x = grid16.coordinates()
    k = np.array([2, -1, 3])
    values = np.zeros((3, 16, 16, 16))
    values[1] = np.cos(k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
    F = forward_transform(PhysicalField(grid16, values))
    idx = (1,) + tuple(k % 16)
    assert abs(F.coeffs[idx] - 0.5) < 1e-12 * 0.5
    k2 = float(k @ k)
    for t in (0.01, 0.3, 1.0):
        a = heat_propagate(F, t).coeffs[idx]
        assert abs(a - 0.5 * math.exp(-k2 * t)) <= 1e-12 * 0.5 * math.exp(-k2 * t)
        b = heat_propagate(F, t, 0.7).coeffs[idx]
        assert abs(b - 0.5 * math.exp(-(k2 + 0.7) * t)) <= 1e-12 * 0.5 * math.exp(-(k2 + 0.7) * t)


def test_c03_cross_term_orthogonality(grid32):
    rng = np.random.default_rng(3)
    k2 = grid32.k2
    for _ in range(100):
        u = band_field(grid32, rng, 10)
        h2 = math.sqrt(grid32.volume * float(np.sum((1 + k2) ** 2 * np.abs(u.coeffs) ** 2)))
        w = pointwise_cross_with_laplacian(u)
        assert abs(inner_product(w, u)) / (h2 * l2_norm(u)) < 1e-11


def _smooth_small_data(grid):
    return mode_field(grid, [((1, 0, 0), 1, 1e-2), ((0, 1, 1), 2, 1e-2), ((0, 1, 1), 0, 5e-3)])


@pytest.mark.slow
def test_c04_conservation_law(grid64):
    u0 = _smooth_small_data(grid64)
    params = LLBParams(cutoff_n=4)
    worst = []
    for dt in (1e-3, 5e-4):
        res = []
        run_to(u0, params, dt, 1.0, lambda s: res.append(abs(s.sample.conservation_residual)), blowup=False)
        worst.append(max(res))
    assert worst[0] < 1e-5
    assert 3 <= worst[0] / worst[1] <= 5


def _order_ratio(u0, params, dt, horizon):
    kw = dict(blowup=False, phi_psi=False)
    ref = run_to(u0, params, dt / 8, horizon, **kw).u
    e1 = l2_norm(run_to(u0, params, dt, horizon, **kw).u - ref)
    e2 = l2_norm(run_to(u0, params, dt / 2, horizon, **kw).u - ref)
    return e1 / e2


def test_c05_integrator_order():
    g = Grid(8)
    constant = mode_field(g, [((0, 0, 0), 0, 0.5)])
    assert 12 <= _order_ratio(constant, LLBParams(), 0.1, 1.0) <= 20
    spec = FieldEnsembleSpec(count=1, spectrum="band", j_lo=0, j_hi=2, amplitude=0.05, components=3, n=16)
    band = generate_field(spec, sample_seed(spec, 0))
    assert 12 <= _order_ratio(band, LLBParams(cutoff_n=6), 0.02, 0.4) <= 20


def test_c06_friedrichs_consistency(grid64):
    cfg = config_from_dict({"grid": {"n": 64}, "initial": {"profile": "two-mode", "amplitude": 1e-2}})
    u0 = initial_field(cfg)
    n = 8
    a = run_to(u0, LLBParams(cutoff_n=n), 0.05, 1.0, blowup=False).u
    b = run_to(u0, LLBParams(cutoff_n=2 * n), 0.05, 1.0, blowup=False).u
    low = grid64.kmag <= n / 2
    diff = np.linalg.norm(np.where(low, a.coeffs - b.coeffs, 0))
    assert diff <= 1e-6 * np.linalg.norm(np.where(low, b.coeffs, 0))


@pytest.mark.slow
def test_c07_inequality_suite():
    start = time.perf_counter()
    spec = FieldEnsembleSpec(count=200, n=32, seed=0)
    verdicts = run_suites(["all"], spec, doubling=True)
    names = {v.name.split("[")[0] for v in verdicts}
    assert len(names) == 9
    for v in verdicts:
        assert v.samples == 200
        assert np.all(np.isfinite(v.ratios)), v.name
        assert v.passed, v.name
        change = abs(v.doubled_constant - v.fitted_constant) / v.fitted_constant
        assert change < 0.25, v.name
        if v.cross_j_spread is not None:
            assert v.cross_j_spread < 10, v.name
        assert v.stable, v.name
    assert time.perf_counter() - start < 600


def test_c08_bernstein_p2_oracle():
    g = Grid(32)
    u = mode_field(g, [((8, 0, 0), 0, 1.0)], components=1)
    assert abs(bernstein_sample(u, 2.0, 3) / (64 / 9) - 1) < 1e-10


@pytest.mark.slow
def test_c09_small_data_decay(grid64):
    cfg = config_from_dict(
        {
            "grid": {"n": 64},
            "params": {"cutoff_n": 8},
            "initial": {"profile": "single-mode", "k": [1, 0, 0], "component": 2, "target_besov32": 1e-3},
        }
    )
    u0 = initial_field(cfg)
    params = LLBParams(cutoff_n=8)
    settings = SolverSettings()
    state = initial_state(u0, params, settings)
    assert besov(state.u, 1.5) == pytest.approx(1e-3, rel=1e-12)
    samples = [state.sample]
    end = Solver(grid64, params, settings).run(state, 10.0, lambda s: samples.append(s.sample))
    assert smallness_monitor(end, params, 2e-3).passed
    b = np.array([s.besov_32 for s in samples])
    assert np.all(np.diff(b) <= 1e-10)
    t = np.array([s.t for s in samples])
    blow = np.array([s.blowup_integrand for s in samples])
    increments = 0.5 * np.diff(t) * (blow[1:] + blow[:-1])
    assert abs(increments[-1]) < 1e-12
    assert math.isfinite(end.accumulators["int_blowup"])


def test_c10_stability_probe(grid64):
    cfg = config_from_dict(
        {
            "grid": {"n": 64},
            "params": {"cutoff_n": 8},
            "initial": {"profile": "single-mode", "k": [1, 0, 0], "component": 2, "target_besov32": 1e-3},
        }
    )
    rep = stability_probe(initial_field(cfg), 1e-6, 2.0, LLBParams(cutoff_n=8), SolverSettings(dt=0.05))
    assert rep.times[-1] == pytest.approx(2.0)
    assert np.all(rep.ratio <= np.exp(rep.budget))
    assert rep.within_bound


class Interrupt(Exception):
    pass


def test_c11_determinism_and_resume(tmp_path):
    cfg = config_from_dict(
        {
            "grid": {"n": 16},
            "params": {"cutoff_n": 6},
            "horizon": 1.0,
            "integrator": {"dt": 0.02},
            "initial": {"profile": "random-band", "j_lo": 0, "j_hi": 2, "amplitude": 0.05, "seed": 4},
        }
    )
    execute_run(cfg, tmp_path / "a")
    execute_run(cfg, tmp_path / "b")
    full = (tmp_path / "a" / "monitors.csv").read_bytes()
    assert full == (tmp_path / "b" / "monitors.csv").read_bytes()

    def crash(state):
        if state.step_index == 23:
            raise Interrupt

    with pytest.raises(Interrupt):
        execute_run(cfg, tmp_path / "c", on_step=crash)
    assert (tmp_path / "c" / "config.json").exists()
    assert (tmp_path / "c" / "checkpoints" / "000020.llbs").exists()
    execute_run(cfg, tmp_path / "c", resume=True)
    a = read_monitors(tmp_path / "a" / "monitors.csv")
    c = read_monitors(tmp_path / "c" / "monitors.csv")
    assert a.keys() == c.keys()
    for col in a:
        assert a[col].shape == c[col].shape
        assert np.all(np.abs(a[col] - c[col]) <= 1e-12 * np.maximum(1.0, np.abs(a[col]))), col
