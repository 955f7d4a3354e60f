"""Temporal convergence of the integrator and of the conservation residual.

Prints the error against a dt/8 reference for a ladder of steps, on constant
data (scalar ODE) and on a random band-limited field, followed by the max
conservation residual for the smooth two-mode run on 64^3.
"""
import argparse

import numpy as np

from llb.inequalities import FieldEnsembleSpec, generate_field, sample_seed
from llb.solver import LLBParams, Solver, SolverSettings, initial_state
from llb.spectral import Grid, SpectralField, l2_norm


def terminal(u0, params, dt, horizon, callback=None):
    settings = SolverSettings(dt=dt, blowup=False, phi_psi=False)
    state = initial_state(u0, params, settings)
    return Solver(u0.grid, params, settings).run(state, horizon, callback)


def order_table(label, u0, params, dts, horizon):
    ref = terminal(u0, params, dts[-1] / 8, horizon).u
    prev = None
    print(label)
    for dt in dts:
        err = l2_norm(terminal(u0, params, dt, horizon).u - ref)
        ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
        print(f"  dt={dt:<8g} err={err:.3e}{ratio}")
        prev = err


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--skip-conservation", action="store_true")
    args = ap.parse_args()

    g = Grid(8)
    c = np.zeros((3, 8, 8, 8), complex)
    c[0, 0, 0, 0] = 0.5
    order_table("constant data", SpectralField(g, c), LLBParams(), [0.2, 0.1, 0.05], 1.0)

    spec = FieldEnsembleSpec(count=1, spectrum="band", j_lo=0, j_hi=2, amplitude=0.05, components=3, n=16)
    band = generate_field(spec, sample_seed(spec, 0))
    order_table("random band, cutoff 6", band, LLBParams(cutoff_n=6), [0.04, 0.02, 0.01], 0.4)

    if args.skip_conservation:
        return
    g = Grid(64)
    c = np.zeros((3, 64, 64, 64), complex)
    for k, comp, a in [((1, 0, 0), 1, 1e-2), ((0, 1, 1), 2, 1e-2), ((0, 1, 1), 0, 5e-3)]:
        k = np.array(k)
        c[(comp,) + tuple(k % 64)] += a / 2
        c[(comp,) + tuple(-k % 64)] += a / 2
    u0 = SpectralField(g, c)
    print("conservation residual, two-mode data on 64^3, cutoff 4")
    prev = None
    for dt in (2e-3, 1e-3, 5e-4):
        res = []
        terminal(u0, LLBParams(cutoff_n=4), dt, 1.0, lambda s: res.append(abs(s.sample.conservation_residual)))
        ratio = "" if prev is None else f"  ratio {prev / max(res):.2f}"
        print(f"  dt={dt:<8g} max|res|={max(res):.3e}{ratio}")
        prev = max(res)


if __name__ == "__main__":
    main()
