"""Randomized checks of the harmonic-analysis inequalities used by the solver theory.

Each verifier draws an ensemble of structured random fields, evaluates both
sides of one inequality, and fits the best constant (the largest observed
ratio, or the smallest for the Bernstein lower bound).  Samples are a
deterministic function of ``(seed, index, attempt)``; a sample whose
denominator is below ``DEGENERATE_TOL`` is redrawn with the next attempt.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .littlewood_paley import (
    BesovParams,
    DyadicPartition,
    block_lp_norms,
    besov,
    besov_from_spectrum,
    build_partition,
    dyadic_block,
    lr_sum,
    shell_spectrum,
    sobolev_norm,
)
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    apply_laplacian,
    dealiased,
    derivative,
    forward_transform,
    from_padded,
    gradient,
    l2_norm,
    padded_size,
    pointwise_cubic,
    pointwise_product,
    product_size,
    sample,
    support_radius,
    to_physical,
)

DEGENERATE_TOL = 1e-14
MAX_ATTEMPTS = 64
SPECTRA = ("single-block", "band", "power-law")


class DegenerateSample(ValueError):
    """A sample's denominator fell below ``DEGENERATE_TOL``."""


@dataclass(frozen=True)
class FieldEnsembleSpec:
    count: int = 200
    spectrum: str = "power-law"
    j_lo: int = 0
    j_hi: int = 0
    alpha: float = 2.0
    amplitude: float = 1.0
    seed: int = 0
    components: int = 1
    n: int = 32
    box_length: float = 2 * math.pi

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("ensemble count must be >= 1")
        if self.spectrum not in SPECTRA:
            raise ValueError(f"unknown spectrum {self.spectrum!r}; expected one of {SPECTRA}")
        if not self.amplitude > 0:
            raise ValueError("ensemble amplitude must be positive")
        if self.spectrum == "band" and self.j_hi < self.j_lo:
            raise ValueError("band spectrum needs j_lo <= j_hi")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in u64")

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.box_length)


@dataclass
class InequalityVerdict:
    name: str
    samples: int
    fitted_constant: float
    worst_sample_seed: int
    passed: bool
    params: dict = field(default_factory=dict)
    spec: dict = field(default_factory=dict)
    doubled_constant: float | None = None
    stable: bool | None = None
    cross_j_spread: float | None = None
    ratios: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("ratios")
        return {k: v for k, v in out.items() if v is not None}


def sample_seed(spec: FieldEnsembleSpec, index: int, attempt: int = 0, role: int = 0) -> int:
    ss = np.random.SeedSequence([spec.seed, index, attempt, role])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_field(spec: FieldEnsembleSpec, seed: int) -> SpectralField:
    """One ensemble member: shaped Gaussian noise, mean-free, RMS = amplitude."""
    grid = spec.grid
    P = build_partition(grid)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((spec.components,) + (grid.n,) * 3)
    F = forward_transform(PhysicalField(grid, noise))
    if spec.spectrum == "single-block":
        shape = P.phi_shell(spec.j_lo)
    elif spec.spectrum == "band":
        shape = sum(P.phi_shell(j) for j in range(spec.j_lo, spec.j_hi + 1))
    else:
        shape = np.zeros_like(grid.shell_k)
        shape[1:] = grid.shell_k[1:] ** (-spec.alpha)
    # strictly inside the Nyquist cube so the field is exactly real
    shape = np.where(grid.shell_k < grid.k0 * grid.n / 2, shape, 0.0)
    shape[0] = 0.0
    coeffs = F.coeffs * shape[grid.shell]
    rms = math.sqrt(float(np.vdot(coeffs, coeffs).real) / spec.components)
    if rms < DEGENERATE_TOL:
        raise DegenerateSample("generated field vanished")
    return SpectralField(grid, coeffs * (spec.amplitude / rms), real=True)


def _denominator(x: float) -> float:
    if not x >= DEGENERATE_TOL:
        raise DegenerateSample(f"denominator {x:.3e} below {DEGENERATE_TOL}")
    return x


def _ensemble(
    name: str,
    specs: Sequence[FieldEnsembleSpec],
    evaluate: Callable[..., float],
    params: dict,
    aggregate: str = "max",
    doubling: bool = False,
) -> InequalityVerdict:
    base = specs[0].count
    total = 2 * base if doubling else base
    ratios, seeds = [], []
    for i in range(total):
        for attempt in range(MAX_ATTEMPTS):
            sample_seeds = [sample_seed(s, i, attempt, role) for role, s in enumerate(specs)]
            try:
                fields = [generate_field(s, sd) for s, sd in zip(specs, sample_seeds)]
                ratio = float(evaluate(*fields))
            except DegenerateSample:
                continue
            break
        else:
            raise DegenerateSample(f"{name}: sample {i} degenerate after {MAX_ATTEMPTS} attempts")
        ratios.append(ratio)
        seeds.append(sample_seeds[0])

    def fit(rs):
        arr = np.asarray(rs)
        return float(arr.max() if aggregate == "max" else arr.min())

    head = ratios[:base]
    pick = int(np.argmax(head) if aggregate == "max" else np.argmin(head))
    fitted = fit(head)
    finite = bool(np.all(np.isfinite(ratios)))
    passed = finite and math.isfinite(fitted) and (aggregate == "max" or fitted > 0)
    verdict = InequalityVerdict(
        name=name,
        samples=base,
        fitted_constant=fitted,
        worst_sample_seed=seeds[pick],
        passed=passed,
        params=params,
        spec=asdict(specs[0]) if len(specs) == 1 else {"a": asdict(specs[0]), "b": asdict(specs[1])},
        ratios=ratios,
    )
    if doubling:
        verdict.doubled_constant = fit(ratios)
        change = abs(verdict.doubled_constant - fitted) / fitted if fitted else math.inf
        verdict.stable = bool(change < 0.25)
    return verdict


def _pair(spec: FieldEnsembleSpec, spec_b: FieldEnsembleSpec | None):
    return [spec, spec if spec_b is None else spec_b]


def _quadrature_size(u: SpectralField, degree: int) -> int:
    """Even grid size on which a degree-``degree`` product of ``u`` integrates exactly."""
    K = support_radius(u.coeffs)
    return padded_size(u.grid.n, degree * K, K, 0)


def _sup(u: SpectralField) -> float:
    vals = to_physical(u)
    return float(np.sqrt(np.sum(vals * vals, axis=0)).max())


# -- Bernstein-type lower bound -----------------------------------------------


def bernstein_sample(u: SpectralField, p: float, j: int, P: DyadicPartition | None = None) -> float:
    """``c0`` for one field already supported in block ``j``."""
    P = build_partition(u.grid) if P is None else P
    R1 = 2.0**j * 3.0 / 4.0
    M = _quadrature_size(u, max(int(math.ceil(p)), 2))
    uv = sample(u, M)
    lv = sample(apply_laplacian(u), M)
    mag = np.sqrt(np.sum(uv * uv, axis=0))
    cell = u.grid.volume / M**3
    lp = float(np.sum(mag**p) * cell)
    _denominator(lp)
    rhs = -float(np.sum(np.sum(lv * uv, axis=0) * mag ** (p - 2)) * cell) / (p - 1)
    return rhs / (R1**2 / p**2 * lp)


def verify_bernstein(spec: FieldEnsembleSpec, p: float, j: int, doubling: bool = False) -> InequalityVerdict:
    if not 1 < p < math.inf:
        raise ValueError("Bernstein check needs 1 < p < inf")
    P = build_partition(spec.grid)
    P.check(j)

    def evaluate(f):
        return bernstein_sample(dyadic_block(f, j, P), p, j, P)

    return _ensemble("bernstein", [spec], evaluate, {"p": p, "j": j}, aggregate="min", doubling=doubling)


# -- Besov-scale inequalities ---------------------------------------------------


def verify_interpolation(
    spec: FieldEnsembleSpec, s1: float, s2: float, theta: float, p: float = 2.0, r: float = 1.0, doubling: bool = False
) -> InequalityVerdict:
    if not s2 > s1:
        raise ValueError("interpolation needs s2 > s1")
    if not 0 < theta < 1:
        raise ValueError("interpolation needs theta in (0, 1)")
    P = build_partition(spec.grid)
    s = theta * s1 + (1 - theta) * s2

    def evaluate(f):
        blocks = block_lp_norms(f, P, p)
        norm = lambda sig: lr_sum([2.0 ** (j * sig) * v for j, v in blocks], r)
        return norm(s) / _denominator(norm(s1) ** theta * norm(s2) ** (1 - theta))

    params = {"s1": s1, "s2": s2, "theta": theta, "p": p, "r": r}
    return _ensemble("interpolation", [spec], evaluate, params, doubling=doubling)


def verify_product(
    spec: FieldEnsembleSpec,
    s1: float,
    s2: float,
    p: float = 2.0,
    spec_b: FieldEnsembleSpec | None = None,
    doubling: bool = False,
) -> InequalityVerdict:
    if not (s1 <= 3 / p and s2 <= 3 / p and s1 + s2 > 3 * max(0.0, 2 / p - 1)):
        raise ValueError("product estimate needs s1, s2 <= 3/p and s1 + s2 > 3 max(0, 2/p - 1)")
    P = build_partition(spec.grid)

    def evaluate(u, v):
        den = besov(u, s1, p, 1, P) * besov(v, s2, p, 1, P)
        return besov(pointwise_product(u, v), s1 + s2 - 3 / p, p, 1, P) / _denominator(den)

    return _ensemble("product", _pair(spec, spec_b), evaluate, {"s1": s1, "s2": s2, "p": p}, doubling=doubling)


def verify_algebra(
    spec: FieldEnsembleSpec,
    s: float,
    p: float = 2.0,
    r: float = 1.0,
    spec_b: FieldEnsembleSpec | None = None,
    doubling: bool = False,
) -> InequalityVerdict:
    if not s > 0:
        raise ValueError("algebra estimate needs s > 0")
    P = build_partition(spec.grid)

    def evaluate(f, g):
        den = _sup(f) * besov(g, s, p, r, P) + _sup(g) * besov(f, s, p, r, P)
        return besov(pointwise_product(f, g), s, p, r, P) / _denominator(den)

    return _ensemble("algebra", _pair(spec, spec_b), evaluate, {"s": s, "p": p, "r": r}, doubling=doubling)


def _lp(values: np.ndarray, p: float, cell: float) -> float:
    mag = np.sqrt(np.sum(values * values, axis=0))
    if p == math.inf:
        return float(mag.max())
    return float((np.sum(mag**p) * cell) ** (1.0 / p))


def commutator_sample(a: SpectralField, b: SpectralField, j: int, p: float, q: float, r: float, P=None) -> float:
    P = build_partition(a.grid) if P is None else P
    g = a.grid
    comm = dyadic_block(pointwise_product(a, b), j, P) - pointwise_product(a, dyadic_block(b, j, P))
    lhs = _lp(to_physical(comm), r, g.cell_volume)
    den = 2.0 ** (-j) * _lp(to_physical(gradient(a)), p, g.cell_volume) * _lp(to_physical(b), q, g.cell_volume)
    return lhs / _denominator(den)


def verify_commutator_basic(
    spec: FieldEnsembleSpec,
    j: int,
    p: float = math.inf,
    q: float = 2.0,
    r: float = 2.0,
    spec_b: FieldEnsembleSpec | None = None,
    doubling: bool = False,
) -> InequalityVerdict:
    P = build_partition(spec.grid)
    P.check(j)

    def evaluate(a, b):
        return commutator_sample(a, b, j, p, q, r, P)

    params = {"j": j, "p": p, "q": q, "r": r}
    return _ensemble("commutator_basic", _pair(spec, spec_b), evaluate, params, doubling=doubling)


def block_commutator_norms(b: SpectralField, a: SpectralField, P: DyadicPartition) -> dict[int, float]:
    """``||[Delta_j, b] a||_{L^2}`` for every block, sharing one padded pass."""
    g = a.grid
    M, keep = product_size([a, b])
    bv = sample(b, M)
    ba = from_padded(g, sample(a, M) * bv, keep)
    out = {}
    power = shell_spectrum(a)
    power_ba = shell_spectrum(ba)
    for j in P.indices:
        tab = P.phi_shell(j)
        if not (np.any((tab > 0) & (power > 0)) or np.any((tab > 0) & (power_ba > 0))):
            out[j] = 0.0
            continue
        mult = tab[g.shell]
        term = from_padded(g, bv * sample(a.replace(a.coeffs * mult), M), keep)
        out[j] = l2_norm(ba.replace(ba.coeffs * mult - term.coeffs))
    return out


def verify_commutator_lemma4(
    spec: FieldEnsembleSpec,
    s: float = 2.5,
    rho: float = 4.0,
    spec_b: FieldEnsembleSpec | None = None,
    doubling: bool = False,
) -> InequalityVerdict:
    if not s > 0:
        raise ValueError("commutator estimate needs s > 0")
    if not rho > 2:
        raise ValueError("commutator estimate needs rho > 2")
    P = build_partition(spec.grid)

    def evaluate(a, b):
        lhs = sum(2.0 ** (j * s) * v for j, v in block_commutator_norms(b, a, P).items())
        rhs = besov(a, s - 2 / rho, 2, 1, P) * besov(b, 2 / rho, math.inf, math.inf, P) + besov(
            b, s + 1 - 2 / rho, 2, 1, P
        ) * besov(a, 2 / rho, math.inf, math.inf, P)
        return lhs / _denominator(rhs)

    return _ensemble("commutator_lemma4", _pair(spec, spec_b), evaluate, {"s": s, "rho": rho}, doubling=doubling)


def _partial(f: SpectralField, alpha: Sequence[int]) -> SpectralField:
    for axis, order in enumerate(alpha):
        if order:
            f = derivative(f, axis, order)
    return f


def moser_sample(f: SpectralField, g: SpectralField, m: int, alpha: Sequence[int]) -> float:
    lhs = l2_norm(_partial(pointwise_product(f, g), alpha) - pointwise_product(f, _partial(g, alpha)))
    rhs = _sup(gradient(f)) * sobolev_norm(g, m - 1).value + _sup(g) * sobolev_norm(f, m).value
    return lhs / _denominator(rhs)


def verify_moser_commutator(
    spec: FieldEnsembleSpec,
    m: int = 2,
    alpha: Sequence[int] = (2, 0, 0),
    spec_b: FieldEnsembleSpec | None = None,
    doubling: bool = False,
) -> InequalityVerdict:
    alpha = tuple(int(a) for a in alpha)
    if m < 2 or len(alpha) != 3 or min(alpha) < 0 or sum(alpha) > m:
        raise ValueError("Moser estimate needs m >= 2 and a multi-index with |alpha| <= m")

    def evaluate(f, g):
        return moser_sample(f, g, m, alpha)

    params = {"m": m, "alpha": list(alpha)}
    return _ensemble("moser", _pair(spec, spec_b), evaluate, params, doubling=doubling)


def composition_ratio(u: SpectralField, s: float, P=None) -> float:
    """``||F(u)|| / ||u||`` in ``B^s_{2,1}`` with ``F(u) = |u|^2 u``."""
    P = build_partition(u.grid) if P is None else P
    return besov(pointwise_cubic(u), s, 2, 1, P) / _denominator(besov(u, s, 2, 1, P))


def verify_composition(spec: FieldEnsembleSpec, s: float = 1.5, doubling: bool = False) -> InequalityVerdict:
    if not s > 0:
        raise ValueError("composition estimate needs s > 0")
    P = build_partition(spec.grid)

    def evaluate(u):
        return composition_ratio(u, s, P) / _denominator(_sup(u) ** 2)

    return _ensemble("composition", [spec], evaluate, {"s": s}, doubling=doubling)


# -- heat smoothing ---------------------------------------------------------------


def heat_time_grid(k_min: float, k_max: float, points: int = 4000) -> np.ndarray:
    horizon = 40.0 / k_min**2
    return np.concatenate([[0.0], np.geomspace(1e-4 / k_max**2, horizon, points - 1)])


def heat_smoothing_lhs(u0: SpectralField, m: float, sigma: float, times: np.ndarray, P=None) -> float:
    """``( int_0^T ||e^{t Lap} u0||_{B^sigma_{2,1}}^m dt )^(1/m)`` by trapezoid."""
    P = build_partition(u0.grid) if P is None else P
    power = shell_spectrum(u0)
    keep = power > 0
    if not keep.any():
        return 0.0
    k2 = u0.grid.shell_k[keep] ** 2
    decay = np.exp(-2.0 * np.outer(k2, times))  # shells x times
    blocks = np.sqrt(u0.grid.volume * ((P.phi_table[:, keep] ** 2 * power[keep]) @ decay))
    weights = 2.0 ** (np.arange(P.j_min, P.j_max + 1) * sigma)
    norms = weights @ blocks
    return float(np.trapezoid(norms**m, times) ** (1.0 / m))


def verify_heat_smoothing(
    spec: FieldEnsembleSpec, m: float = 1.0, s: float = -0.5, doubling: bool = False
) -> InequalityVerdict:
    if not m >= 1:
        raise ValueError("heat smoothing needs m >= 1")
    P = build_partition(spec.grid)
    g = spec.grid

    def evaluate(u0):
        power = shell_spectrum(u0)
        nz = np.nonzero(power)[0]
        if nz.size == 0 or nz[-1] == 0:
            raise DegenerateSample("zero initial data")
        ks = g.shell_k[nz[nz > 0]]
        times = heat_time_grid(ks.min(), ks.max())
        den = besov_from_spectrum(power, P, s + 2)
        return heat_smoothing_lhs(u0, m, s + 2 + 2 / m, times, P) / _denominator(den)

    return _ensemble("heat_smoothing", [spec], evaluate, {"m": m, "s": s}, doubling=doubling)


# -- suites -----------------------------------------------------------------------

SUITES = (
    "bernstein",
    "interpolation",
    "product",
    "algebra",
    "commutator_basic",
    "commutator_lemma4",
    "moser",
    "composition",
    "heat_smoothing",
)
CROSS_J_FACTOR = 10.0


def _cross_j(verdicts: list[InequalityVerdict], P: DyadicPartition) -> list[InequalityVerdict]:
    inner = [v for v in verdicts if P.j_min + 1 <= v.params["j"] <= P.j_max - 1]
    consts = [v.fitted_constant for v in inner]
    spread = max(consts) / min(consts) if consts and min(consts) > 0 else math.inf
    for v in verdicts:
        v.cross_j_spread = spread
        v.stable = bool(v.stable is not False and spread < CROSS_J_FACTOR)
    return verdicts


def run_suite(name: str, spec: FieldEnsembleSpec, doubling: bool = True) -> list[InequalityVerdict]:
    """The standard parameter choice for one named inequality."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; valid: {', '.join(SUITES)} or all")
    P = build_partition(spec.grid)
    inner = range(P.j_min + 1, P.j_max)
    if name == "bernstein":
        return _cross_j([verify_bernstein(spec, 4.0, j, doubling) for j in inner], P)
    if name == "commutator_basic":
        return _cross_j([verify_commutator_basic(spec, j, doubling=doubling) for j in inner], P)
    if name == "interpolation":
        return [verify_interpolation(spec, 1.5, 3.5, 0.5, 2.0, 1.0, doubling)]
    if name == "product":
        return [verify_product(spec, 1.5, 1.5, 2.0, doubling=doubling)]
    if name == "algebra":
        return [verify_algebra(spec, 1.5, 2.0, 1.0, doubling=doubling)]
    if name == "commutator_lemma4":
        return [verify_commutator_lemma4(spec, 2.5, 4.0, doubling=doubling)]
    if name == "moser":
        return [verify_moser_commutator(spec, 2, (2, 0, 0), doubling=doubling)]
    if name == "composition":
        return [verify_composition(spec, 1.5, doubling)]
    return [verify_heat_smoothing(spec, 1.0, -0.5, doubling)]


def run_suites(names: Sequence[str], spec: FieldEnsembleSpec, doubling: bool = True) -> list[InequalityVerdict]:
    if list(names) == ["all"]:
        names = SUITES
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; valid: {', '.join(SUITES)} or all")
    out = []
    for name in names:
        out.extend(run_suite(name, spec, doubling))
    return out
