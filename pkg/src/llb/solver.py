"""Friedrichs-truncated LLB integrator and run-time monitors.

The evolution is

    du/dt = Lap u - kappa u + E_n(gamma u x Lap u - kappa mu |u|^2 u)

with ``E_n`` the projector onto ``1/n <= |k| <= n`` (``cutoff_n = inf``
gives the untruncated system).  The stiff linear part is integrated exactly
by an integrating factor; the nonlinear part by classical RK4 in the
Lawson form.  With a finite cutoff the state lives on the ball ``|k| <= n``,
so the stages run on the smallest even grid holding that ball; this is
exact, not an approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .littlewood_paley import (
    DyadicPartition,
    besov,
    besov_from_spectrum,
    build_partition,
    shell_spectrum,
)
from .spectral import (
    Grid,
    NonRealOutput,
    SpectralField,
    apply_laplacian,
    cutoff_mask,
    dealiased,
    heat_propagate,
    l4_fourth_power,
    pointwise_cross_with_laplacian,
    pointwise_cubic,
    spectral_cutoff,
)

CUTOFF_TOL = 1e-12


class CutoffViolation(ValueError):
    """Input carries spectral mass outside the Friedrichs annulus."""


class StepDiverged(RuntimeError):
    """A step produced non-finite values or crossed the norm ceiling."""

    def __init__(self, message: str, state: "SolverState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class LLBParams:
    kappa: float = 1.0
    mu: float = 1.0
    cross_coeff: float = 1.0
    cutoff_n: float = math.inf
    rho: float = 4.0
    delta: float = 1.5
    p_blowup: float = 2.0

    def __post_init__(self):
        if not self.kappa > 0 or not self.mu > 0:
            raise ValueError("kappa and mu must be positive")
        if not self.cutoff_n > 0:
            raise ValueError("cutoff_n must be positive")
        if not self.rho > 2:
            raise ValueError("rho must exceed 2")
        if not 1 < self.delta < 2:
            raise ValueError("delta must lie in (1, 2)")
        if not 1 < self.p_blowup < math.inf:
            raise ValueError("p_blowup must lie in (1, inf)")
        if not math.isfinite(self.cross_coeff):
            raise ValueError("cross_coeff must be finite")

    @property
    def truncated(self) -> bool:
        return math.isfinite(self.cutoff_n)


@dataclass(frozen=True)
class SolverSettings:
    """Integrator and monitor settings that are not part of the equation."""

    dt: float | None = None
    max_halvings: int = 4
    norm_ceiling: float = 1e6
    damped: bool = False
    hm_order: float = 2.0
    c1: float | None = None
    condition_c: float = 1.0
    blowup: bool = True
    phi_psi: bool = True
    l4: bool = True
    hm: bool = True


@dataclass(frozen=True)
class MonitorSample:
    t: float
    L2_energy: float
    grad_L2: float
    L4_fourth_power: float
    conservation_residual: float
    besov_32: float
    besov_72: float
    phi_t: float
    psi_t: float
    blowup_integrand: float
    Hm_norm: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[float]:
        return [getattr(self, c) for c in self.columns()]


ACCUMULATORS = ("int_besov_32", "int_besov_72", "int_blowup", "int_phi", "int_psi", "sup_besov_32")


@dataclass(frozen=True, eq=False)
class SolverState:
    u: SpectralField
    t: float
    dt: float
    step_index: int
    initial: SpectralField
    sample: MonitorSample
    accumulators: dict = field(default_factory=dict)


# -- right-hand sides -----------------------------------------------------------


def _nonlinear(u: SpectralField, params: LLBParams, keep: int | None = None) -> SpectralField:
    gamma, cubic = params.cross_coeff, params.kappa * params.mu

    def combine(a, lap):
        return gamma * np.cross(a, lap, axis=0) - cubic * np.sum(a * a, axis=0) * a

    # powers chosen so the degree bound covers both the cubic and the cross term
    return dealiased([u, apply_laplacian(u)], combine, powers=[2, 1], keep=keep)


def rhs_full(u: SpectralField, params: LLBParams) -> SpectralField:
    """``Lap u - kappa u + gamma u x Lap u - kappa mu |u|^2 u``."""
    if not u.real:
        raise NonRealOutput("the LLB right-hand side needs a field flagged real")
    lap = apply_laplacian(u)
    return lap - params.kappa * u + _nonlinear(u, params)


def check_cutoff(u: SpectralField, n: float) -> None:
    if not math.isfinite(n):
        return
    outside = np.where(cutoff_mask(u.grid, n), 0, u.coeffs)
    total = float(np.vdot(u.coeffs, u.coeffs).real)
    leak = float(np.vdot(outside, outside).real)
    if leak > CUTOFF_TOL**2 * total:
        raise CutoffViolation(f"relative spectral mass {math.sqrt(leak / total):.3e} outside [1/n, n]")


def rhs_friedrichs(u: SpectralField, params: LLBParams) -> SpectralField:
    """Right-hand side with the projector wrapped around both nonlinear terms."""
    if not u.real:
        raise NonRealOutput("the LLB right-hand side needs a field flagged real")
    n = params.cutoff_n
    check_cutoff(u, n)
    nl = _nonlinear(u, params)
    if math.isfinite(n):
        nl = spectral_cutoff(nl, n)
    return apply_laplacian(u) - params.kappa * u + nl


# -- integrator ---------------------------------------------------------------------


def compact_size(grid: Grid, cutoff_n: float) -> int:
    """Smallest even grid (>= 8) holding the ball ``|k| <= cutoff_n``."""
    if not math.isfinite(cutoff_n):
        return grid.n
    K = math.floor(cutoff_n / grid.k0 + 1e-12)
    return min(grid.n, max(8, 2 * K + 2))


class Integrator:
    """Lawson RK4 with cached multipliers; one instance per (grid, params)."""

    def __init__(self, grid: Grid, params: LLBParams):
        self.grid = grid
        self.params = params
        m = compact_size(grid, params.cutoff_n)
        self.compact = Grid(m, grid.box_length)
        idx = np.fft.fftfreq(m, 1.0 / m).astype(np.int64) % grid.n
        self._ix = np.ix_(range(3), idx, idx, idx)
        self._lin = -(self.compact.k2 + params.kappa)
        if params.truncated:
            self._mask = cutoff_mask(self.compact, params.cutoff_n)
            self._keep = min(m // 2, math.floor(params.cutoff_n / grid.k0 + 1e-12))
        else:
            self._mask = None
            self._keep = None
        self._factors: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def to_compact(self, u: SpectralField) -> np.ndarray:
        if self.compact.n == self.grid.n:
            return u.coeffs
        return u.coeffs[self._ix]

    def to_grid(self, c: np.ndarray) -> SpectralField:
        if self.compact.n == self.grid.n:
            return SpectralField(self.grid, c)
        out = np.zeros((3,) + (self.grid.n,) * 3, dtype=complex)
        out[self._ix] = c
        return SpectralField(self.grid, out)

    def factors(self, dt: float):
        if dt not in self._factors:
            if len(self._factors) > 8:
                self._factors.clear()
            self._factors[dt] = (np.exp(self._lin * dt / 2), np.exp(self._lin * dt))
        return self._factors[dt]

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        out = _nonlinear(SpectralField(self.compact, c), self.params, self._keep).coeffs
        if self._mask is not None:
            out = np.where(self._mask, out, 0)
        return out

    def advance(self, c: np.ndarray, dt: float) -> np.ndarray:
        E, E2 = self.factors(dt)
        N = self.nonlinear
        k1 = N(c)
        Ec = E * c
        k2 = N(Ec + (dt / 2) * E * k1)
        k3 = N(Ec + (dt / 2) * k2)
        k4 = N(E2 * c + dt * E * k3)
        return E2 * c + (dt / 6) * (E2 * k1 + 2 * E * (k2 + k3) + k4)

    def step_field(self, u: SpectralField, dt: float) -> SpectralField:
        return self.to_grid(self.advance(self.to_compact(u), dt))


# -- monitors -----------------------------------------------------------------------


def fit_c1(P: DyadicPartition) -> float:
    """Smallest dyadic dissipation ratio ``min |k|^2 / 2^{2j}`` over blocks on the grid."""
    k2 = P.grid.shell_k**2
    present = np.zeros(k2.size, dtype=bool)
    present[np.unique(P.grid.shell)] = True
    ratios = []
    for j in P.indices:
        support = present & (P.phi_shell(j) > 0)
        if support.any():
            ratios.append(k2[support].min() / 4.0**j)
    return float(min(ratios))


def _decayed_spectrum(power: np.ndarray, grid: Grid, t: float, damping: float) -> np.ndarray:
    if t == 0:
        return power
    return power * np.exp(-2.0 * (grid.shell_k**2 + damping) * t)


def phi_psi_from_spectrum(power: np.ndarray, P: DyadicPartition, rho: float) -> tuple[float, float]:
    b = lambda s: besov_from_spectrum(power, P, s)
    b32, b72 = b(1.5), b(3.5)
    phi_t = b32 + b32 * b72
    # fourth term: regularity 7/2 - 3/2 taken literally
    psi_t = b(2.5) ** 2 + b72 + b(2.0 / rho + 1.5) ** rho + b(2.0) ** (rho / (rho - 1)) + 1.0
    return phi_t, psi_t


def monitor_phi_psi(uL: SpectralField, params: LLBParams) -> tuple[float, float]:
    return phi_psi_from_spectrum(shell_spectrum(uL), build_partition(uL.grid), params.rho)


def blowup_integrand(u: SpectralField, params: LLBParams, P: DyadicPartition | None = None) -> float:
    """``||u||^2_{B^{3/p}_{p,1}} + ||u||^{2/(2-delta)}_{B^{2-delta}_{inf,inf}}``."""
    P = build_partition(u.grid) if P is None else P
    p, d = params.p_blowup, params.delta
    return besov(u, 3.0 / p, p, 1.0, P) ** 2 + besov(u, 2.0 - d, math.inf, math.inf, P) ** (2.0 / (2.0 - d))


def split_solution(state: SolverState, u0: SpectralField, damped: bool, params: LLBParams):
    """``(u^L, u - u^L)`` with ``u^L`` the (optionally damped) heat flow of ``u0``."""
    uL = heat_propagate(u0, state.t, params.kappa if damped else 0.0)
    return uL, state.u - uL


def energy_dissipation(sample: MonitorSample, params: LLBParams) -> float:
    return sample.grad_L2**2 + params.kappa * sample.L2_energy + params.kappa * params.mu * sample.L4_fourth_power


def conservation_residual(prev: MonitorSample, nxt: MonitorSample, params: LLBParams) -> float:
    dt = nxt.t - prev.t
    if dt <= 0:
        return 0.0
    mid = 0.5 * (energy_dissipation(prev, params) + energy_dissipation(nxt, params))
    return (0.5 * (nxt.L2_energy - prev.L2_energy) / dt + mid) / (mid + 1e-30)


def measure(
    u: SpectralField,
    t: float,
    initial_power: np.ndarray,
    params: LLBParams,
    settings: SolverSettings,
    prev: MonitorSample | None = None,
    compact: SpectralField | None = None,
) -> MonitorSample:
    """All monitors at one instant.

    ``compact`` may carry the same field on a smaller grid that still holds
    its whole spectrum; spectra and ``L^4`` are then taken from it.
    """
    g = u.grid
    P = build_partition(g)
    small = u if compact is None else compact
    power = np.zeros(g.shell_k.size)
    part = shell_spectrum(small)
    power[: part.size] = part
    k2 = g.shell_k**2
    energy = g.volume * float(power.sum())
    grad = math.sqrt(g.volume * float(np.dot(k2, power)))
    l4 = l4_fourth_power(small) if settings.l4 else math.nan
    if settings.phi_psi:
        damping = params.kappa if settings.damped else 0.0
        phi_t, psi_t = phi_psi_from_spectrum(_decayed_spectrum(initial_power, g, t, damping), P, params.rho)
    else:
        phi_t = psi_t = math.nan
    hm = math.sqrt(g.volume * float(np.dot((1.0 + k2) ** settings.hm_order, power))) if settings.hm else math.nan
    sample = MonitorSample(
        t=t,
        L2_energy=energy,
        grad_L2=grad,
        L4_fourth_power=l4,
        conservation_residual=0.0,
        besov_32=besov_from_spectrum(power, P, 1.5),
        besov_72=besov_from_spectrum(power, P, 3.5),
        phi_t=phi_t,
        psi_t=psi_t,
        blowup_integrand=blowup_integrand(u, params, P) if settings.blowup else math.nan,
        Hm_norm=hm,
    )
    if prev is not None:
        sample = replace(sample, conservation_residual=conservation_residual(prev, sample, params))
    return sample


def _accumulate(acc: dict, prev: MonitorSample, nxt: MonitorSample) -> dict:
    h = 0.5 * (nxt.t - prev.t)
    out = dict(acc)
    out["int_besov_32"] += h * (prev.besov_32 + nxt.besov_32)
    out["int_besov_72"] += h * (prev.besov_72 + nxt.besov_72)
    out["int_blowup"] += h * (prev.blowup_integrand + nxt.blowup_integrand)
    out["int_phi"] += h * (prev.phi_t + nxt.phi_t)
    out["int_psi"] += h * (prev.psi_t + nxt.psi_t)
    out["sup_besov_32"] = max(out["sup_besov_32"], nxt.besov_32)
    return out


def _healthy(sample: MonitorSample, ceiling: float) -> str | None:
    for name in ("L2_energy", "grad_L2", "besov_32", "besov_72", "Hm_norm", "blowup_integrand", "L4_fourth_power"):
        v = getattr(sample, name)
        if math.isnan(v) and name in ("blowup_integrand", "L4_fourth_power", "Hm_norm"):
            continue
        if not math.isfinite(v):
            return f"{name} is not finite"
        if abs(v) > ceiling:
            return f"{name} = {v:.3e} exceeds ceiling {ceiling:.3e}"
    return None


# -- driver -------------------------------------------------------------------------


def prepare_initial(u0: SpectralField, params: LLBParams) -> SpectralField:
    """Initial data as seen by the run: projected when the system is truncated."""
    if u0.components != 3:
        raise ValueError("LLB states are three-component fields")
    u0 = SpectralField(u0.grid, np.array(u0.coeffs, dtype=complex), True)
    return spectral_cutoff(u0, params.cutoff_n) if params.truncated else u0


def default_dt(u: SpectralField, params: LLBParams) -> float:
    """``0.5 / (1 + max|k|^2 ||u||_inf)`` over the resolved modes."""
    from .spectral import to_physical

    g = u.grid
    kmax2 = min(params.cutoff_n, g.kmax) ** 2 if params.truncated else g.kmax**2
    vals = to_physical(u)
    sup = float(np.sqrt(np.sum(vals * vals, axis=0)).max())
    return 0.5 / (1.0 + kmax2 * sup)


def initial_state(u0: SpectralField, params: LLBParams, settings: SolverSettings = SolverSettings()) -> SolverState:
    u = prepare_initial(u0, params)
    dt = settings.dt if settings.dt is not None else default_dt(u, params)
    if not dt > 0:
        raise ValueError("dt must be positive")
    sample = measure(u, 0.0, shell_spectrum(u), params, settings)
    acc = {name: 0.0 for name in ACCUMULATORS}
    acc["sup_besov_32"] = sample.besov_32
    return SolverState(u, 0.0, dt, 0, u, sample, acc)


def next_dt(t: float, dt: float, horizon: float) -> float:
    """Step size that lands exactly on ``horizon`` without a sliver step."""
    remaining = horizon - t
    return remaining if remaining < dt * (1 + 1e-6) else dt


class Solver:
    """Owns the cached integrator and the initial spectrum for one run."""

    def __init__(self, grid: Grid, params: LLBParams, settings: SolverSettings = SolverSettings()):
        self.grid = grid
        self.params = params
        self.settings = settings
        self.integrator = Integrator(grid, params)
        self._initial_power: np.ndarray | None = None
        self._initial_id: int | None = None

    def initial_power(self, state: SolverState) -> np.ndarray:
        if self._initial_id != id(state.initial):
            self._initial_power = shell_spectrum(state.initial)
            self._initial_id = id(state.initial)
        return self._initial_power

    def step(self, state: SolverState, dt: float | None = None) -> SolverState:
        """Advance one step, halving ``dt`` on failure up to ``max_halvings`` times."""
        dt = state.dt if dt is None else dt
        reason = "no attempt"
        for _ in range(self.settings.max_halvings + 1):
            ig = self.integrator
            c = ig.advance(ig.to_compact(state.u), dt)
            u = ig.to_grid(c)
            if u.is_finite():
                sample = measure(
                    u,
                    state.t + dt,
                    self.initial_power(state),
                    self.params,
                    self.settings,
                    state.sample,
                    SpectralField(ig.compact, c),
                )
                reason = _healthy(sample, self.settings.norm_ceiling)
                if reason is None:
                    return SolverState(
                        u,
                        state.t + dt,
                        min(state.dt, dt),
                        state.step_index + 1,
                        state.initial,
                        sample,
                        _accumulate(state.accumulators, state.sample, sample),
                    )
            else:
                reason = "non-finite coefficients"
            dt /= 2
        raise StepDiverged(f"step {state.step_index + 1} at t={state.t:.6g}: {reason}", state)

    def run(
        self,
        state: SolverState,
        horizon: float,
        callback: Callable[[SolverState], None] | None = None,
    ) -> SolverState:
        """Step until ``t = horizon`` (the last step is shortened to land on it)."""
        while state.t < horizon * (1 - 1e-14):
            keep_dt = state.dt
            dt = next_dt(state.t, keep_dt, horizon)
            state = self.step(state, dt)
            if state.t >= horizon * (1 - 1e-14) and state.dt < keep_dt and dt < keep_dt:
                # a shortened final step is not a halving
                state = replace(state, dt=keep_dt)
            if callback is not None:
                callback(state)
        return state


_SOLVERS: dict = {}


def step(state: SolverState, params: LLBParams, settings: SolverSettings = SolverSettings()) -> SolverState:
    key = (state.u.grid, params, settings)
    if key not in _SOLVERS:
        if len(_SOLVERS) > 4:
            _SOLVERS.clear()
        _SOLVERS[key] = Solver(state.u.grid, params, settings)
    return _SOLVERS[key].step(state)


# -- derived diagnostics ----------------------------------------------------------------


@dataclass
class SmallnessReport:
    passed: bool
    lhs: float
    eps: float
    sup_term: float
    dissipation_term: float
    damping_term: float
    c1: float


def smallness_monitor(state: SolverState, params: LLBParams, eps: float, c1: float | None = None) -> SmallnessReport:
    if not eps > 0:
        raise ValueError("eps must be positive")
    c1 = fit_c1(build_partition(state.u.grid)) if c1 is None else c1
    acc = state.accumulators
    sup_term = acc["sup_besov_32"]
    diss = 0.5 * c1 * acc["int_besov_72"]
    damp = 0.5 * params.kappa * acc["int_besov_32"]
    lhs = sup_term + diss + damp
    return SmallnessReport(bool(lhs <= eps), lhs, eps, sup_term, diss, damp, c1)


def condition_integral(times, phi_vals, psi_vals, c: float) -> float:
    """``int_0^T phi(t) exp(C int_t^T psi)`` by trapezoid on the sample grid."""
    times = np.asarray(times, dtype=float)
    phi_vals = np.asarray(phi_vals, dtype=float)
    psi_vals = np.asarray(psi_vals, dtype=float)
    if times.size < 2:
        return 0.0
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (psi_vals[1:] + psi_vals[:-1]))])
    tail = cum[-1] - cum
    return float(np.trapezoid(phi_vals * np.exp(c * tail), times))


@dataclass
class StabilityReport:
    times: np.ndarray
    ratio: np.ndarray
    budget: np.ndarray
    initial_norm: float

    @property
    def bound(self) -> np.ndarray:
        return np.exp(self.budget)

    @property
    def within_bound(self) -> bool:
        return bool(np.all(self.ratio <= self.bound * (1 + 1e-12)))


def random_perturbation(u0: SpectralField, scale: float, params: LLBParams, seed: int = 0) -> SpectralField:
    """Band field inside the cutoff, mean-free, with ``B^{3/2}_{2,1}`` norm ``scale``."""
    from .spectral import PhysicalField, forward_transform

    g = u0.grid
    rng = np.random.default_rng(seed)
    F = forward_transform(PhysicalField(g, rng.standard_normal((3,) + (g.n,) * 3)))
    top = min(params.cutoff_n, g.k0 * g.n / 4) if params.truncated else g.k0 * g.n / 4
    keep = (g.kmag > 0) & (g.kmag <= top) & (g.kmag < g.k0 * g.n / 2)
    F = F.replace(np.where(keep, F.coeffs, 0))
    return F * (scale / besov(F, 1.5))


def stability_probe(
    u0: SpectralField,
    perturbation_scale: float,
    horizon: float,
    params: LLBParams,
    settings: SolverSettings = SolverSettings(),
    seed: int = 0,
    perturbation: SpectralField | None = None,
) -> StabilityReport:
    """Two runs from ``u0`` and ``u0 + delta``; track the relative ``B^{3/2}`` gap."""
    if not perturbation_scale > 0:
        raise ValueError("perturbation_scale must be positive")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    delta = random_perturbation(u0, perturbation_scale, params, seed) if perturbation is None else perturbation
    s1 = initial_state(u0, params, settings)
    dt = s1.dt
    s2 = initial_state(u0 + delta, params, replace(settings, dt=dt))
    d0 = besov(s2.u - s1.u, 1.5)
    if not d0 > 0:
        raise ValueError("perturbation vanishes after projection")
    solver = Solver(u0.grid, params, settings)
    P = build_partition(u0.grid)

    def rate(a: SolverState, b: SolverState) -> float:
        return a.sample.besov_72 + a.sample.besov_32**2 + b.sample.besov_32**2

    times, ratio, budget = [0.0], [1.0], [0.0]
    g_prev = rate(s1, s2)
    while s1.t < horizon * (1 - 1e-14):
        h = next_dt(s1.t, dt, horizon)
        s1 = solver.step(s1, h)
        s2 = solver.step(s2, h)
        if s1.t != s2.t:
            raise StepDiverged("perturbed run fell out of step with the base run", s2)
        g_now = rate(s1, s2)
        times.append(s1.t)
        ratio.append(besov(s2.u - s1.u, 1.5, P=P) / d0)
        budget.append(budget[-1] + 0.5 * (s1.t - times[-2]) * (g_prev + g_now))
        g_prev = g_now
    return StabilityReport(np.array(times), np.array(ratio), np.array(budget), d0)
