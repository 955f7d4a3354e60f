"""Periodic-box spectral core.

Fields live on the torus ``[0, L)^3`` sampled on a uniform ``n^3`` grid.
Coefficients are stored in FFT ordering with the forward transform divided
by the point count, so the ``k = 0`` coefficient is the mean of the field::

    f(x) = sum_k fhat(k) exp(i k.x),   k in (2 pi / L) * [-n/2, n/2)^3

Pointwise nonlinearities are evaluated on a zero-padded grid and truncated
back.  The padded size is the smallest FFT-friendly even size that is exact
for the actual spectral support of the inputs, and never larger than ``2n``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

REAL_TOL = 1e-10
CHECKPOINT_MAGIC = b"LLBS"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIdd")


class NonRealOutput(ValueError):
    """A field flagged real carries an imaginary residue above ``REAL_TOL``."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the cubic torus of side ``box_length``."""

    n: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n_per_axis must be an even integer >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")

    @property
    def k0(self) -> float:
        """Wavenumber spacing ``2 pi / L``."""
        return 2 * np.pi / self.box_length

    @property
    def volume(self) -> float:
        return self.box_length**3

    @property
    def cell_volume(self) -> float:
        return (self.box_length / self.n) ** 3

    @cached_property
    def index(self) -> np.ndarray:
        """Integer wavenumber indices along one axis, FFT ordering."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    @cached_property
    def axis_k(self) -> np.ndarray:
        return self.k0 * self.index

    @cached_property
    def shell(self) -> np.ndarray:
        """``i1^2 + i2^2 + i3^2`` for every mode; ``|k| = k0 sqrt(shell)``."""
        i2 = self.index**2
        return i2[:, None, None] + i2[None, :, None] + i2[None, None, :]

    @cached_property
    def shell_k(self) -> np.ndarray:
        """``|k|`` for each shell value ``0 .. max(shell)``."""
        return self.k0 * np.sqrt(np.arange(3 * (self.n // 2) ** 2 + 1))

    @cached_property
    def k2(self) -> np.ndarray:
        return self.k0**2 * self.shell.astype(float)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @property
    def kmax(self) -> float:
        """Largest ``|k|`` on the grid (a corner of the wavenumber cube)."""
        return self.k0 * np.sqrt(3.0) * (self.n // 2)

    def coordinates(self) -> np.ndarray:
        """Physical coordinates, shape ``(3, n, n, n)``."""
        x = np.arange(self.n) * (self.box_length / self.n)
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def wavevector(self, axis: int) -> np.ndarray:
        shape = [1, 1, 1]
        shape[axis] = self.n
        return self.axis_k.reshape(shape)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients, shape ``(components, n, n, n)``.

    ``real`` marks fields representing real physical data; their
    coefficients satisfy ``c(-k) = conj(c(k))``.
    """

    grid: Grid
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self):
        n = self.grid.n
        if self.coeffs.ndim != 4 or self.coeffs.shape[1:] != (n, n, n):
            raise ValueError(f"coeffs shape {self.coeffs.shape} does not match grid n={n}")

    @classmethod
    def zeros(cls, grid: Grid, components: int = 3) -> "SpectralField":
        return cls(grid, np.zeros((components,) + (grid.n,) * 3, dtype=complex))

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def replace(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.real)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.coeffs).all())

    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, 0, 0].copy()

    def component(self, c: int) -> "SpectralField":
        return self.replace(self.coeffs[c : c + 1])

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.real and other.real)

    def __neg__(self) -> "SpectralField":
        return self.replace(-self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.replace(self.coeffs * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Grid values, shape ``(components, n, n, n)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        if self.values.ndim != 4 or self.values.shape[1:] != (n, n, n):
            raise ValueError(f"values shape {self.values.shape} does not match grid n={n}")

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm over components."""
        if self.components == 1:
            return np.abs(self.values[0])
        return np.sqrt(np.einsum("c...,c...->...", self.values, self.values))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


# -- transforms -----------------------------------------------------------


def forward_transform(f: PhysicalField) -> SpectralField:
    if np.iscomplexobj(f.values):
        return SpectralField(f.grid, sfft.fftn(f.values, axes=(1, 2, 3), norm="forward"), real=False)
    return SpectralField(f.grid, sfft.fftn(f.values, axes=(1, 2, 3), norm="forward"), real=True)


def inverse_transform(F: SpectralField) -> PhysicalField:
    values = sfft.ifftn(F.coeffs, axes=(1, 2, 3), norm="forward")
    if not F.real:
        return PhysicalField(F.grid, values)
    residue = np.abs(values.imag).max()
    if residue > REAL_TOL:
        raise NonRealOutput(f"imaginary residue {residue:.3e} on a field flagged real")
    return PhysicalField(F.grid, np.ascontiguousarray(values.real))


def to_physical(F: SpectralField) -> np.ndarray:
    """Real grid values of a real field (no residue check; fast path)."""
    n = F.grid.n
    return sfft.irfftn(F.coeffs[..., : n // 2 + 1], s=(n, n, n), axes=(1, 2, 3), norm="forward")


# -- Fourier multipliers --------------------------------------------------


def apply_laplacian(F: SpectralField) -> SpectralField:
    return F.replace(F.coeffs * (-F.grid.k2))


def heat_propagate(F: SpectralField, t: float, damping: float = 0.0) -> SpectralField:
    """Apply ``exp(t (Laplacian - damping))``."""
    if t < 0 or damping < 0:
        raise ValueError("heat_propagate needs t >= 0 and damping >= 0")
    if t == 0:
        return F
    return F.replace(F.coeffs * np.exp(-(F.grid.k2 + damping) * t))


def cutoff_mask(grid: Grid, n: float) -> np.ndarray:
    if not n > 0:
        raise ValueError("cutoff must be positive")
    kmag = grid.kmag
    return (kmag >= 1.0 / n) & (kmag <= n)


def spectral_cutoff(F: SpectralField, n: float) -> SpectralField:
    """Keep the modes with ``1/n <= |k| <= n`` (the Friedrichs projector)."""
    return F.replace(np.where(cutoff_mask(F.grid, n), F.coeffs, 0))


def derivative(F: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """``d^order / dx_axis^order``; odd orders drop the Nyquist plane."""
    grid = F.grid
    ik = 1j * grid.wavevector(axis)
    symbol = ik**order
    if order % 2:
        nyq = (grid.index == -(grid.n // 2)).reshape(ik.shape)
        symbol = np.where(nyq, 0, symbol)
    return F.replace(F.coeffs * symbol)


def gradient(F: SpectralField) -> SpectralField:
    """All first partials, component ``3 c + i`` holding ``d_i f_c``."""
    parts = [derivative(F, axis).coeffs for axis in range(3)]
    return F.replace(np.stack(parts, axis=1).reshape((-1,) + F.coeffs.shape[1:]))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """Real ``L^2`` inner product summed over components (Parseval)."""
    _check_same_grid(f, g)
    return float(f.grid.volume * np.vdot(g.coeffs, f.coeffs).real)


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(f.grid.volume * np.vdot(f.coeffs, f.coeffs).real))


# -- dealiased products ---------------------------------------------------


def support_radius(coeffs: np.ndarray) -> int:
    """Largest ``|index|`` along any axis carrying a nonzero coefficient."""
    n = coeffs.shape[-1]
    nz = np.any(coeffs != 0, axis=0)
    if not nz.any():
        return 0
    idx = np.abs(np.fft.fftfreq(n, 1.0 / n).astype(np.int64))
    k = 0
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        k = max(k, int(idx[np.any(nz, axis=other)].max()))
    return k


def _even_fast_len(m: int) -> int:
    m = sfft.next_fast_len(m, real=True)
    while m % 2:
        m = sfft.next_fast_len(m + 1, real=True)
    return m


def padded_size(n: int, degree_support: int, max_support: int, keep: int) -> int:
    """Smallest even FFT size exact for the product, capped at ``2n``."""
    m = max(degree_support + keep + 1, 2 * max_support + 2, 2 * keep + 2)
    return min(_even_fast_len(m), 2 * n)


def _box(coeffs: np.ndarray, K: int) -> np.ndarray:
    """Modes ``-K..K`` per axis in natural order; Nyquist split for ``K = n/2``."""
    n = coeffs.shape[-1]
    if K < n // 2:
        ix = np.arange(-K, K + 1) % n
        return coeffs[np.ix_(range(coeffs.shape[0]), ix, ix, ix)]
    ix = np.arange(-(n // 2), n // 2) % n
    box = coeffs[np.ix_(range(coeffs.shape[0]), ix, ix, ix)]
    for axis in (1, 2, 3):
        first = np.take(box, [0], axis=axis) * 0.5
        rest = np.take(box, range(1, n), axis=axis)
        box = np.concatenate([first, rest, first], axis=axis)
    return box


def _check_hermitian(box: np.ndarray) -> None:
    asym = np.abs(box - np.conj(box[:, ::-1, ::-1, ::-1])).max() if box.size else 0.0
    if asym > REAL_TOL:
        raise NonRealOutput(f"Hermitian asymmetry {asym:.3e} on a field flagged real")


def _box_to_physical(box: np.ndarray, M: int) -> np.ndarray:
    K = box.shape[-1] // 2
    half = np.zeros((box.shape[0], M, M, M // 2 + 1), dtype=complex)
    ix = np.arange(-K, K + 1) % M
    half[np.ix_(range(box.shape[0]), ix, ix, range(K + 1))] = box[..., K:]
    return sfft.irfftn(half, s=(M, M, M), axes=(1, 2, 3), norm="forward")


def _physical_to_grid(values: np.ndarray, n: int, R: int) -> np.ndarray:
    M = values.shape[-1]
    half = sfft.rfftn(values, axes=(1, 2, 3), norm="forward")
    ix = np.arange(-R, R + 1) % M
    pos = half[np.ix_(range(half.shape[0]), ix, ix, range(R + 1))]
    neg = np.conj(pos[:, ::-1, ::-1, R:0:-1])
    box = np.concatenate([neg, pos], axis=3)
    if R == n // 2:
        for axis in (1, 2, 3):
            lo = np.take(box, [0], axis=axis) + np.take(box, [-1], axis=axis)
            box = np.concatenate([lo, np.take(box, range(1, n), axis=axis)], axis=axis)
        ix = np.arange(-R, R) % n
    else:
        ix = np.arange(-R, R + 1) % n
    out = np.zeros((values.shape[0], n, n, n), dtype=complex)
    out[np.ix_(range(values.shape[0]), ix, ix, ix)] = box
    return out


def sample(F: SpectralField, M: int) -> np.ndarray:
    """Values of the band-limited interpolant of ``F`` on an ``M^3`` grid."""
    if not F.real:
        raise NonRealOutput("physical sampling needs a field flagged real")
    n = F.grid.n
    if M == n:
        return to_physical(F)
    K = support_radius(F.coeffs)
    if M < 2 * K + 2:
        raise ValueError(f"grid {M} cannot represent support radius {K}")
    box = _box(F.coeffs, K)
    _check_hermitian(box)
    return _box_to_physical(box, M)


def product_size(
    fields: Sequence[SpectralField], powers: Sequence[int] | None = None, keep: int | None = None
) -> tuple[int, int]:
    """Padded grid size and retained radius for a polynomial in ``fields``."""
    n = fields[0].grid.n
    powers = [1] * len(fields) if powers is None else list(powers)
    keep = n // 2 if keep is None else min(int(keep), n // 2)
    supports = [support_radius(f.coeffs) for f in fields]
    degree = sum(p * k for p, k in zip(powers, supports))
    # the product cannot reach beyond its degree support
    keep = min(keep, degree)
    M = padded_size(n, degree, max(supports), keep)
    return M, keep


def from_padded(grid: Grid, values: np.ndarray, keep: int | None = None) -> SpectralField:
    """Spectral field on ``grid`` from real values on a padded grid."""
    keep = grid.n // 2 if keep is None else min(int(keep), grid.n // 2)
    return SpectralField(grid, _physical_to_grid(values, grid.n, keep), real=True)


def dealiased(
    fields: Sequence[SpectralField],
    combine: Callable[..., np.ndarray],
    powers: Sequence[int] | None = None,
    keep: int | None = None,
) -> SpectralField:
    """Evaluate ``combine(*physical_values)`` without aliasing.

    ``powers[i]`` is the polynomial degree of the result in ``fields[i]``;
    modes with ``|index| > keep`` on any axis are dropped from the output
    (default: the whole grid).
    """
    grid = fields[0].grid
    for f in fields:
        _check_same_grid(fields[0], f)
        if not f.real:
            raise NonRealOutput("pointwise products need fields flagged real")
    M, keep = product_size(fields, powers, keep)
    values = []
    for f in fields:
        box = _box(f.coeffs, support_radius(f.coeffs))
        _check_hermitian(box)
        values.append(_box_to_physical(box, M))
    return from_padded(grid, combine(*values), keep)


def pointwise_product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Componentwise product; a one-component factor broadcasts."""
    if a.components != b.components and 1 not in (a.components, b.components):
        raise ValueError("component counts do not broadcast")
    return dealiased([a, b], lambda x, y: x * y)


def pointwise_cross_with_laplacian(u: SpectralField) -> SpectralField:
    """``u x Laplacian(u)``."""
    return dealiased([u, apply_laplacian(u)], lambda a, b: np.cross(a, b, axis=0))


def pointwise_cubic(u: SpectralField) -> SpectralField:
    """``|u|^2 u``."""
    return dealiased([u], lambda a: np.sum(a * a, axis=0) * a, powers=[3])


def l4_fourth_power(u: SpectralField) -> float:
    """``||u||_{L^4}^4`` by quadrature on a grid fine enough to be exact."""
    n = u.grid.n
    K = support_radius(u.coeffs)
    M = min(_even_fast_len(max(4 * K + 2, 2 * K + 2)), 2 * n)
    vals = sample(u, M) if M != n else to_physical(u)
    sq = np.sum(vals * vals, axis=0)
    return float(np.mean(sq * sq) * u.grid.volume)


# -- checkpoints ------------------------------------------------------------


def write_checkpoint(path: str | Path, F: SpectralField, time: float) -> None:
    """Binary little-endian spectral checkpoint (magic ``LLBS``)."""
    if F.components != 3:
        raise ValueError("checkpoints hold three-component fields")
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, F.grid.n, F.grid.box_length, time)
    body = np.ascontiguousarray(F.coeffs, dtype="<c16").tobytes()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body)
    tmp.replace(path)


def read_checkpoint(path: str | Path, real: bool = True) -> tuple[SpectralField, float]:
    data = Path(path).read_bytes()
    magic, version, n, box_length, time = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a spectral checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    grid = Grid(n, box_length)
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if body.size != 3 * n**3:
        raise ValueError(f"{path}: truncated body")
    coeffs = body.astype(complex).reshape(3, n, n, n)
    return SpectralField(grid, coeffs, real), time
