import numpy as np
import pytest

from llb.spectral import Grid, PhysicalField, SpectralField, forward_transform


def mode_field(grid, terms, components=3):
    """Sum of ``amplitude * cos(k.x) e_c`` terms given as ``(k, c, amplitude)``."""
    n = grid.n
    c = np.zeros((components, n, n, n), dtype=complex)
    for k, comp, amp in terms:
        k = np.asarray(k)
        c[(comp,) + tuple(k % n)] += amp / 2
        c[(comp,) + tuple((-k) % n)] += amp / 2
    return SpectralField(grid, c)


def band_field(grid, rng, kmax, components=3, mean=False):
    """Random real field with modes ``0 < |k| < kmax`` (optionally keeping the mean)."""
    values = rng.standard_normal((components,) + (grid.n,) * 3)
    F = forward_transform(PhysicalField(grid, values))
    keep = grid.kmag < kmax
    if not mean:
        keep = keep & (grid.kmag > 0)
    return F.replace(np.where(keep, F.coeffs, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid16():
    return Grid(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64)
