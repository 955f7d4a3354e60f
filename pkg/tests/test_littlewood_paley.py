import json
import math

import numpy as np
import pytest

from conftest import band_field, mode_field
from llb.littlewood_paley import (
    BesovParams,
    IndexOutOfRange,
    besov,
    besov_norm,
    block_commutator,
    build_partition,
    chi,
    dyadic_block,
    lebesgue_norm,
    low_freq_cutoff,
    paraproduct,
    phi,
    remainder,
    shell_spectrum,
    sobolev_norm,
)
from llb.spectral import Grid, PhysicalField, SpectralField, gradient, inverse_transform, l2_norm, pointwise_product


def test_profiles_bounded_and_supported():
    r = np.linspace(0, 4, 4001)
    for f in (chi(r), phi(r)):
        assert f.min() >= 0 and f.max() <= 1
    assert phi(3 / 4 - 1e-9) == 0 and phi(8 / 3 + 1e-9) == 0
    assert chi(3 / 4) == 1 and chi(4 / 3) == 0
    # at most two consecutive blocks overlap
    rr = np.geomspace(0.1, 1000, 5000)
    active = np.array([phi(rr / 2.0**q) > 0 for q in range(-4, 12)])
    assert active.sum(axis=0).max() <= 2


def test_partition_range(grid64):
    P = build_partition(grid64)
    assert P.j_min == -1 and P.j_max == 6
    assert {0, 1, 2, 3, 4} <= set(P.indices)
    assert 8 / 3 * 2.0**P.j_min > grid64.k0
    assert 3 / 4 * 2.0**P.j_max < grid64.kmax


def test_partition_of_unity(grid64):
    P = build_partition(grid64)
    k = grid64.shell_k[1:]
    full = chi(k) + sum(phi(k / 2.0**q) for q in range(0, 10))
    assert np.abs(full - 1).max() < 1e-12
    assert np.abs(P.phi_table.sum(axis=0)[1:] - 1).max() < 1e-12


def test_smallest_grid_still_resolves_three_shells():
    # GridTooSmall cannot trigger for n >= 8: the shell count depends only on n
    for L in (1.0, 2 * math.pi, 100.0):
        P = build_partition(Grid(8, box_length=L))
        assert P.j_max - P.j_min + 1 >= 3


def test_single_mode_blocks(grid64):
    P = build_partition(grid64)
    u = mode_field(grid64, [((8, 0, 0), 0, 1.0)])
    nonzero = [j for j in P.indices if np.abs(dyadic_block(u, j, P).coeffs).max() > 0]
    assert nonzero == [2, 3]
    s = dyadic_block(u, 2, P) + dyadic_block(u, 3, P)
    assert np.abs(s.coeffs - u.coeffs).max() < 1e-15
    with pytest.raises(IndexOutOfRange):
        dyadic_block(u, P.j_max + 1, P)


def test_support_disjointness(grid32, rng):
    P = build_partition(grid32)
    f = band_field(grid32, rng, 16)
    for j in P.indices:
        for jp in P.indices:
            if abs(j - jp) >= 2:
                assert l2_norm(dyadic_block(dyadic_block(f, j, P), jp, P)) == 0


def test_low_freq_cutoff(grid64, rng):
    P = build_partition(grid64)
    f = band_field(grid64, rng, 30, mean=True)
    top = low_freq_cutoff(f, P.j_max + 1, P)
    mean_free = f.replace(f.coeffs.copy())
    mean_free.coeffs[:, 0, 0, 0] = 0
    assert l2_norm(top - mean_free) < 1e-12 * l2_norm(f)
    assert l2_norm(low_freq_cutoff(f, P.j_min, P)) == 0
    u = mode_field(grid64, [((8, 0, 0), 1, 1.0)])
    assert np.abs(low_freq_cutoff(u, 5, P).coeffs - u.coeffs).max() < 1e-15
    with pytest.raises(IndexOutOfRange):
        low_freq_cutoff(u, P.j_max + 2, P)


def test_besov_single_mode_values(grid64):
    P = build_partition(grid64)
    u = mode_field(grid64, [((8, 0, 0), 0, 1.0)])
    assert besov(u, 0.0, P=P) == pytest.approx(l2_norm(u), rel=1e-10)
    expected = (2**4 * phi(2.0) + 2**6 * phi(1.0)) * l2_norm(u)
    assert besov(u, 2.0, P=P) == pytest.approx(float(expected), rel=1e-12)
    assert besov(SpectralField.zeros(grid64), 1.5, P=P) == 0


def test_besov_p_norms_consistent(grid32, rng):
    # the physical-space L^2 path agrees with the Parseval path
    P = build_partition(grid32)
    f = band_field(grid32, rng, 12)
    from llb.littlewood_paley import block_lp_norms

    a = dict(block_lp_norms(f, P, 2.0))
    for j in P.indices:
        vals = inverse_transform(dyadic_block(f, j, P))
        assert lebesgue_norm(vals, 2.0) == pytest.approx(a[j], rel=1e-10, abs=1e-13)


def test_norm_report(grid32, rng):
    P = build_partition(grid32)
    f = band_field(grid32, rng, 12)
    rep = besov_norm(f, BesovParams(1.5, 4.0, 2.0), P)
    agg = math.sqrt(sum(v * v for _, v in rep.per_block))
    assert rep.value == pytest.approx(agg, rel=1e-12)
    d = json.loads(json.dumps(besov_norm(f, BesovParams(0.5, math.inf, math.inf), P).to_dict()))
    assert d["p"] == "inf" and d["r"] == "inf"
    assert set(d) >= {"value", "s", "p", "r", "homogeneous", "per_block"}
    with pytest.raises(ValueError):
        BesovParams(1.0, 0.5, 1.0)


def test_r_monotonicity(grid32, rng):
    P = build_partition(grid32)
    for _ in range(5):
        f = band_field(grid32, rng, 14)
        vals = [besov(f, 1.0, 2.0, r, P) for r in (1.0, 2.0, 4.0, math.inf)]
        assert all(a >= b * (1 - 1e-14) for a, b in zip(vals, vals[1:]))


def test_inhomogeneous_includes_mean(grid32):
    P = build_partition(grid32)
    c = mode_field(grid32, [((0, 0, 0), 0, 1.0)])
    assert besov(c, 1.0, P=P) == 0
    rep = besov_norm(c, BesovParams(1.0, 2.0, 1.0, homogeneous=False), P)
    assert rep.value == pytest.approx(0.5 * l2_norm(c))


def test_sobolev(grid32):
    u = mode_field(grid32, [((0, 2, 0), 0, 1.0)])
    assert sobolev_norm(u, 1.0).value == pytest.approx(2 * l2_norm(u))
    assert sobolev_norm(u, 0.0).value == pytest.approx(l2_norm(u))
    c = mode_field(grid32, [((0, 0, 0), 0, 3.0)])
    assert sobolev_norm(c, 2.0).value == 0
    assert sobolev_norm(c, 1.0, homogeneous=False).value == pytest.approx(l2_norm(c))
    with pytest.raises(ValueError):
        sobolev_norm(c, -1.0)


def test_lebesgue(grid32):
    L = 2 * math.pi
    v = np.zeros((3, 32, 32, 32))
    v[0] = 2.0
    assert lebesgue_norm(PhysicalField(grid32, v), 4.0) == pytest.approx(2 * L**0.75, rel=1e-13)
    assert lebesgue_norm(PhysicalField(grid32, np.zeros_like(v)), 3.0) == 0
    x = grid32.coordinates()
    w = np.zeros_like(v)
    w[0] = np.cos(x[0])
    assert lebesgue_norm(PhysicalField(grid32, w), 2.0) == pytest.approx(L**1.5 / math.sqrt(2), rel=1e-13)
    assert lebesgue_norm(PhysicalField(grid32, w), math.inf) == pytest.approx(1.0)


def test_bony_reconstruction(grid32, rng):
    P = build_partition(grid32)
    for comps in (1, 3):
        u, v = band_field(grid32, rng, 10, comps), band_field(grid32, rng, 9, comps)
        total = paraproduct(u, v, P) + paraproduct(v, u, P) + remainder(u, v, P)
        direct = pointwise_product(u, v)
        assert l2_norm(total - direct) < 1e-10 * l2_norm(direct)
        assert l2_norm(remainder(u, v, P) - remainder(v, u, P)) < 1e-12 * l2_norm(direct)


def test_paraproduct_trivial(grid32, rng):
    P = build_partition(grid32)
    v = band_field(grid32, rng, 10, 1)
    const = mode_field(grid32, [((0, 0, 0), 0, 2.0)], components=1)
    assert l2_norm(paraproduct(const, v, P)) == 0
    zero = SpectralField.zeros(grid32, 1)
    assert l2_norm(paraproduct(v, zero, P)) == 0
    assert l2_norm(remainder(zero, v, P)) == 0


def test_block_commutator(grid32, rng):
    P = build_partition(grid32)
    b = band_field(grid32, rng, 10, 1)
    const = mode_field(grid32, [((0, 0, 0), 0, 1.5)], components=1)
    for j in P.indices:
        assert l2_norm(block_commutator(const, b, j, P)) < 1e-12 * l2_norm(b)
    assert l2_norm(block_commutator(b, SpectralField.zeros(grid32, 1), 2, P)) == 0


def test_derivative_equivalence_bracket(grid32):
    # |grad f| in B^s vs f in B^{s+1}: the ratio stays in a fixed positive bracket
    P = build_partition(grid32)
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(20):
        f = band_field(grid32, rng, 15, 1)
        ratios.append(besov(gradient(f), 0.5, P=P) / besov(f, 1.5, P=P))
    lo, hi = min(ratios), max(ratios)
    assert 0.5 < lo <= hi < 2.0
    assert hi / lo < 1.5
