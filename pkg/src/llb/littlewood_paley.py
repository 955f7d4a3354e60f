"""Dyadic partition of unity, block operators and Besov norms.

The profiles are built from the smooth step ``h(r) = exp(-1/r)``:

    chi(r) = 1 on [0, 3/4], 0 on [4/3, inf), smooth in between
    phi(r) = chi(r/2) - chi(r)          supported in [3/4, 8/3]

so ``chi + sum_q phi(2^-q .)`` telescopes and sums to one up to round-off.
Every multiplier is radial, which lets us tabulate it once per integer shell
``m = i1^2 + i2^2 + i3^2`` and gather.  ``p = 2`` norms only need the shell
power spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .spectral import (
    Grid,
    NonRealOutput,
    PhysicalField,
    SpectralField,
    from_padded,
    product_size,
    sample,
    to_physical,
)

CHI_LO = 3.0 / 4.0
CHI_HI = 4.0 / 3.0
PHI_LO = 3.0 / 4.0
PHI_HI = 8.0 / 3.0


class GridTooSmall(ValueError):
    """Fewer than three dyadic shells fit on the grid."""


class IndexOutOfRange(IndexError):
    """Dyadic index outside the partition's resolvable range."""


def _h(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = np.exp(-1.0 / r[pos])
    return out


def chi(r) -> np.ndarray:
    """Smooth low-pass profile: 1 below 3/4, 0 above 4/3."""
    r = np.asarray(r, dtype=float)
    x = np.clip((r - CHI_LO) / (CHI_HI - CHI_LO), 0.0, 1.0)
    a, b = _h(1.0 - x), _h(x)
    return np.where(r <= CHI_LO, 1.0, np.where(r >= CHI_HI, 0.0, a / (a + b)))


def phi(r) -> np.ndarray:
    """Annulus profile ``chi(r/2) - chi(r)``; zero outside ``(3/4, 8/3)``."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    """Sampled profiles for one grid.

    ``phi_table[j - j_min, m]`` is ``phi(2^-j |k|)`` on shell ``m``;
    ``chi_table[m]`` is ``chi(|k|)``.
    """

    grid: Grid
    j_min: int
    j_max: int
    phi_table: np.ndarray
    chi_table: np.ndarray

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def check(self, j: int) -> None:
        if not self.j_min <= j <= self.j_max:
            raise IndexOutOfRange(f"block {j} outside [{self.j_min}, {self.j_max}]")

    def phi_shell(self, j: int) -> np.ndarray:
        self.check(j)
        return self.phi_table[j - self.j_min]

    def multiplier(self, j: int) -> np.ndarray:
        """``phi(2^-j |k|)`` on the full grid."""
        return self.phi_shell(j)[self.grid.shell]

    def low_shell(self, j: int) -> np.ndarray:
        """Shell table of the ``S_j`` multiplier (blocks ``j_min .. j-1``)."""
        if j <= self.j_min:
            return np.zeros_like(self.chi_table)
        top = min(j, self.j_max + 1)
        return self.phi_table[: top - self.j_min].sum(axis=0)

    def active_blocks(self, power: np.ndarray) -> list[int]:
        """Blocks that meet nonzero shells of a power spectrum."""
        nz = power > 0
        return [j for j in self.indices if np.any(nz & (self.phi_table[j - self.j_min] > 0))]


@lru_cache(maxsize=16)
def build_partition(grid: Grid) -> DyadicPartition:
    k0 = grid.k0
    # smallest block whose annulus still reaches the lowest nonzero |k|
    j_min = math.floor(math.log2(k0 / PHI_HI)) + 1
    while PHI_HI * 2.0 ** (j_min - 1) > k0:
        j_min -= 1
    while PHI_HI * 2.0**j_min <= k0:
        j_min += 1
    # largest block whose annulus starts below the grid's largest |k|
    j_max = math.floor(math.log2(grid.kmax / PHI_LO))
    while PHI_LO * 2.0 ** (j_max + 1) < grid.kmax:
        j_max += 1
    while PHI_LO * 2.0**j_max >= grid.kmax:
        j_max -= 1
    if j_max - j_min + 1 < 3:
        raise GridTooSmall(f"only {j_max - j_min + 1} dyadic shells on n={grid.n}")
    kk = grid.shell_k
    table = np.stack([phi(kk / 2.0**j) for j in range(j_min, j_max + 1)])
    table[:, 0] = 0.0
    table.setflags(write=False)
    chi_tab = chi(kk)
    chi_tab.setflags(write=False)
    return DyadicPartition(grid, j_min, j_max, table, chi_tab)


# -- block operators --------------------------------------------------------


def dyadic_block(f: SpectralField, j: int, P: DyadicPartition) -> SpectralField:
    return f.replace(f.coeffs * P.multiplier(j))


def low_freq_cutoff(f: SpectralField, j: int, P: DyadicPartition) -> SpectralField:
    """``S_j f``: the sum of blocks below ``j`` (mean excluded)."""
    if not P.j_min <= j <= P.j_max + 1:
        raise IndexOutOfRange(f"S_{j} outside [{P.j_min}, {P.j_max + 1}]")
    return f.replace(f.coeffs * P.low_shell(j)[P.grid.shell])


def shell_spectrum(f: SpectralField) -> np.ndarray:
    """Power ``sum |c|^2`` per integer shell, summed over components."""
    g = f.grid
    power = np.einsum("c...,c...->...", f.coeffs.real, f.coeffs.real)
    power += np.einsum("c...,c...->...", f.coeffs.imag, f.coeffs.imag)
    return np.bincount(g.shell.ravel(), weights=power.ravel(), minlength=g.shell_k.size)


# -- norms ------------------------------------------------------------------


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = 2.0
    r: float = 1.0
    homogeneous: bool = True

    def __post_init__(self):
        if not (1 <= self.p <= math.inf and 1 <= self.r <= math.inf):
            raise ValueError("Besov exponents need p, r in [1, inf]")
        if not math.isfinite(self.s):
            raise ValueError("Besov regularity must be finite")


def _json_num(x: float):
    return "inf" if x == math.inf else x


@dataclass
class NormReport:
    value: float
    s: float
    p: float
    r: float
    homogeneous: bool = True
    kind: str = "besov"
    per_block: list[tuple[int, float]] | None = None
    j_range: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "s": self.s,
            "p": _json_num(self.p),
            "r": _json_num(self.r),
            "homogeneous": self.homogeneous,
            "kind": self.kind,
        }
        if self.per_block is not None:
            out["per_block"] = [[j, v] for j, v in self.per_block]
        if self.j_range is not None:
            out["j_range"] = list(self.j_range)
        return out


def lr_sum(terms, r: float) -> float:
    terms = np.asarray(terms, dtype=float)
    if terms.size == 0:
        return 0.0
    if r == math.inf:
        return float(terms.max())
    if r == 1:
        return float(terms.sum())
    top = terms.max()
    if top == 0:
        return 0.0
    return float(top * np.sum((terms / top) ** r) ** (1.0 / r))


def lebesgue_norm(f: PhysicalField, p: float) -> float:
    """``L^p`` norm by uniform quadrature (Euclidean across components)."""
    mag = f.magnitude()
    if p == math.inf:
        return float(mag.max()) if mag.size else 0.0
    top = mag.max()
    if top == 0:
        return 0.0
    return float(top * (np.sum((mag / top) ** p) * f.grid.cell_volume) ** (1.0 / p))


def _lp_values(values: np.ndarray, p: float, cell: float) -> float:
    mag = np.sqrt(np.sum(values * values, axis=0)) if values.shape[0] > 1 else np.abs(values[0])
    if p == math.inf:
        return float(mag.max())
    top = mag.max()
    if top == 0:
        return 0.0
    return float(top * (np.sum((mag / top) ** p) * cell) ** (1.0 / p))


def _block_table(P: DyadicPartition, homogeneous: bool) -> tuple[list[int], list[np.ndarray]]:
    """Block indices and shell multipliers entering a norm."""
    if homogeneous:
        return list(P.indices), [P.phi_table[j - P.j_min] for j in P.indices]
    # inhomogeneous: chi block as q = -1, then phi blocks from q = 0
    js = [-1] + [j for j in P.indices if j >= 0]
    tabs = [P.chi_table] + [P.phi_table[j - P.j_min] for j in js[1:]]
    return js, tabs


def block_lp_norms(f: SpectralField, P: DyadicPartition, p: float, homogeneous: bool = True):
    """``[(j, ||Delta_j f||_{L^p})]`` over the partition range."""
    g = f.grid
    js, tabs = _block_table(P, homogeneous)
    if p == 2:
        power = shell_spectrum(f)
        return [(j, float(math.sqrt(g.volume * np.dot(t * t, power)))) for j, t in zip(js, tabs)]
    if not f.real:
        raise NonRealOutput("L^p block norms with p != 2 need a field flagged real")
    power = shell_spectrum(f)
    out = []
    for j, t in zip(js, tabs):
        if not np.any((t != 0) & (power > 0)):
            out.append((j, 0.0))
            continue
        vals = to_physical(f.replace(f.coeffs * t[g.shell]))
        out.append((j, _lp_values(vals, p, g.cell_volume)))
    return out


def besov_norm(f: SpectralField, params: BesovParams, P: DyadicPartition | None = None) -> NormReport:
    P = build_partition(f.grid) if P is None else P
    blocks = block_lp_norms(f, P, params.p, params.homogeneous)
    per_block = [(j, 2.0 ** (j * params.s) * v) for j, v in blocks]
    value = lr_sum([v for _, v in per_block], params.r)
    return NormReport(
        value,
        params.s,
        params.p,
        params.r,
        params.homogeneous,
        "besov",
        per_block,
        (per_block[0][0], per_block[-1][0]),
    )


def besov(f: SpectralField, s: float, p: float = 2.0, r: float = 1.0, P: DyadicPartition | None = None) -> float:
    """Value of the homogeneous ``B^s_{p,r}`` norm."""
    return besov_norm(f, BesovParams(s, p, r), P).value


def besov_from_spectrum(power: np.ndarray, P: DyadicPartition, s: float, r: float = 1.0) -> float:
    """Homogeneous ``B^s_{2,r}`` norm from a shell power spectrum."""
    blocks = np.sqrt(P.grid.volume * (P.phi_table**2 @ power))
    weights = 2.0 ** (np.arange(P.j_min, P.j_max + 1) * s)
    return lr_sum(weights * blocks, r)


def sobolev_norm(f: SpectralField, s: float, homogeneous: bool = True) -> NormReport:
    g = f.grid
    power = shell_spectrum(f)
    k2 = g.shell_k**2
    if homogeneous:
        if s < 0 and power[0] > 0:
            raise ValueError("negative homogeneous Sobolev norm of a field with nonzero mean")
        w = np.zeros_like(k2)
        w[1:] = k2[1:] ** s
    else:
        w = (1.0 + k2) ** s
    return NormReport(float(math.sqrt(g.volume * np.dot(w, power))), s, 2.0, 2.0, homogeneous, "sobolev")


def lebesgue_report(f: PhysicalField, p: float) -> NormReport:
    return NormReport(lebesgue_norm(f, p), 0.0, p, p, False, "lebesgue")


# -- paraproduct calculus -----------------------------------------------------


def _block_values(f: SpectralField, P: DyadicPartition, M: int) -> dict[int, np.ndarray]:
    power = shell_spectrum(f)
    out = {}
    for j in P.active_blocks(power):
        out[j] = sample(dyadic_block(f, j, P), M)
    return out


def _pair_sum(u: SpectralField, v: SpectralField, P: DyadicPartition, keep_pair) -> SpectralField:
    if not (u.real and v.real):
        raise NonRealOutput("paraproducts need fields flagged real")
    M, keep = product_size([u, v])
    bu, bv = _block_values(u, P, M), _block_values(v, P, M)
    shape = np.broadcast_shapes((u.components, M, M, M), (v.components, M, M, M))
    acc = np.zeros(shape)
    for j, a in bu.items():
        for jp, b in bv.items():
            if keep_pair(j, jp):
                acc += a * b
    return from_padded(u.grid, acc, keep)


def paraproduct(u: SpectralField, v: SpectralField, P: DyadicPartition | None = None) -> SpectralField:
    """``T_u v = sum_j S_{j-1} u  Delta_j v``."""
    P = build_partition(u.grid) if P is None else P
    return _pair_sum(u, v, P, lambda ju, jv: ju <= jv - 2)


def remainder(u: SpectralField, v: SpectralField, P: DyadicPartition | None = None) -> SpectralField:
    """``R(u, v) = sum_{|j - j'| <= 1} Delta_j u  Delta_j' v``."""
    P = build_partition(u.grid) if P is None else P
    return _pair_sum(u, v, P, lambda ju, jv: abs(ju - jv) <= 1)


def block_commutator(a: SpectralField, b: SpectralField, j: int, P: DyadicPartition | None = None) -> SpectralField:
    """``[Delta_j, a] b = Delta_j(ab) - a Delta_j b``."""
    from .spectral import pointwise_product

    P = build_partition(a.grid) if P is None else P
    P.check(j)
    return dyadic_block(pointwise_product(a, b), j, P) - pointwise_product(a, dyadic_block(b, j, P))
