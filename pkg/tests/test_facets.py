"""Morphology on masks, pairs of sets, and support-function certificates."""

import numpy as np
import pytest

from facetflow.anisotropy import EuclideanAnisotropy
from facetflow.facets import (PairDisjointError, PairOfSets, SeparationError,
                              admissibility_check, mask_distance,
                              ordered_support_function, pair_leq, pair_nbhd,
                              pair_of, pair_reverse, rho_neighborhood,
                              signed_distance, smooth_pair_between,
                              support_from_smooth_pair)
from facetflow.grid import Grid, GridFunction


def _disk(g, cx, cy, r_cells):
    c = g.coords()
    dx = np.minimum(np.abs(c[..., 0] - cx), 1 - np.abs(c[..., 0] - cx))
    dy = np.minimum(np.abs(c[..., 1] - cy), 1 - np.abs(c[..., 1] - cy))
    return dx**2 + dy**2 <= (r_cells * g.h) ** 2


def _random_mask(g, rng, fill=0.5):
    from scipy import ndimage
    noise = ndimage.gaussian_filter(rng.standard_normal(g.shape), 3,
                                    mode="wrap")
    return noise > np.quantile(noise, 1 - fill)


def test_neighborhood_nesting():
    g = Grid(2, 64)
    rng = np.random.default_rng(0)
    A = _random_mask(g, rng)
    inner = rho_neighborhood(g, A, -4 * g.h)
    outer = rho_neighborhood(g, A, 4 * g.h)
    assert np.all(~inner | A)
    assert np.all(~A | outer)


def test_neighborhood_complement_duality():
    g = Grid(2, 64)
    rng = np.random.default_rng(1)
    A = _random_mask(g, rng)
    for rho in (-3 * g.h, 3 * g.h):
        lhs = rho_neighborhood(g, ~A, rho)
        rhs = ~rho_neighborhood(g, A, -rho)
        assert np.array_equal(lhs, rhs)


def test_neighborhood_composition_semigroup():
    g = Grid(2, 64)
    rng = np.random.default_rng(2)
    A = _random_mask(g, rng)
    two_step = rho_neighborhood(g, rho_neighborhood(g, A, 3 * g.h), 5 * g.h)
    one_step = rho_neighborhood(g, A, 8 * g.h)
    assert np.array_equal(two_step, one_step)


def test_neighborhood_monotone():
    g = Grid(2, 64)
    rng = np.random.default_rng(3)
    A = _random_mask(g, rng)
    B = A | _random_mask(g, rng)
    for rho in (-4 * g.h, 4 * g.h):
        assert np.all(~rho_neighborhood(g, A, rho)
                      | rho_neighborhood(g, B, rho))


def test_signed_distance_signs_and_values():
    g = Grid(2, 128)
    A = _disk(g, 0.5, 0.5, 20)
    d = signed_distance(g, A).values
    assert np.all(d[A] <= 0)
    assert np.all(d[~A] >= 0)
    # center of the disk is about 20 cells deep
    assert d[64, 64] == pytest.approx(-20 * g.h, abs=2 * g.h)


def test_signed_distance_saturates_for_empty_and_full():
    g = Grid(1, 32)
    assert np.all(signed_distance(g, np.zeros(32, bool)).values == 2.0)
    assert np.all(signed_distance(g, np.ones(32, bool)).values == -2.0)


def test_mask_distance_between_disks():
    g = Grid(2, 128)
    A = _disk(g, 0.25, 0.25, 10)
    B = _disk(g, 0.75, 0.75, 10)
    want = np.hypot(0.5, 0.5) - 20 * g.h
    assert mask_distance(g, A, B) == pytest.approx(want, abs=3 * g.h)


def test_pair_requires_disjoint_components():
    g = Grid(2, 32)
    A = _disk(g, 0.5, 0.5, 6)
    with pytest.raises(PairDisjointError):
        PairOfSets(g, A, A)


def test_pair_of_sign_sets():
    g = Grid(1, 64)
    x = g.coords()[..., 0]
    psi = GridFunction(g, np.sin(2 * np.pi * x))
    pair = pair_of(psi)
    assert np.array_equal(pair.plus, psi.values > 0)
    assert np.array_equal(pair.minus, psi.values < 0)


def test_pair_order_and_reversal():
    g = Grid(2, 64)
    small = PairOfSets(g, _disk(g, 0.2, 0.2, 5), _disk(g, 0.7, 0.7, 5))
    large = PairOfSets(g, _disk(g, 0.2, 0.2, 3), _disk(g, 0.7, 0.7, 8))
    assert pair_leq(small, large)
    assert not pair_leq(large, small)
    rev = pair_reverse(small)
    assert np.array_equal(rev.plus, small.minus)
    assert np.array_equal(rev.minus, small.plus)


def test_pair_neighborhood_moves_wings_oppositely():
    g = Grid(2, 64)
    pair = PairOfSets(g, _disk(g, 0.2, 0.2, 6), _disk(g, 0.7, 0.7, 6))
    grown = pair_nbhd(pair, 3 * g.h)
    assert np.all(~grown.minus | pair.minus)   # minus erodes
    assert np.all(~pair.plus | grown.plus)     # plus dilates


def test_smooth_pair_sandwich():
    g = Grid(2, 128)
    pair = PairOfSets(g, _disk(g, 0.25, 0.25, 14), _disk(g, 0.75, 0.75, 16))
    sp = smooth_pair_between(pair, 2 * g.h, 11 * g.h)
    assert np.all(~pair.plus | sp.plus)        # plus grows
    assert np.all(~sp.minus | pair.minus)      # minus shrinks
    # the smoothed pair stays within the requested neighborhood
    outer = rho_neighborhood(g, pair.plus, 12 * g.h)
    assert np.all(~sp.plus | outer)


def test_smooth_pair_rejects_thin_gap():
    g = Grid(2, 64)
    pair = PairOfSets(g, _disk(g, 0.25, 0.25, 6), _disk(g, 0.75, 0.75, 6))
    with pytest.raises(SeparationError):
        smooth_pair_between(pair, 0.0, 2 * g.h)


def test_support_function_certificate():
    g = Grid(2, 128)
    W = EuclideanAnisotropy(2)
    pair = PairOfSets(g, _disk(g, 0.25, 0.25, 14), _disk(g, 0.75, 0.75, 16))
    sp = smooth_pair_between(pair, 2 * g.h, 11 * g.h)
    cert = support_from_smooth_pair(sp, W)
    v = cert.psi.values
    assert np.all(v[sp.plus] > 0)
    assert np.all(v[sp.minus] < 0)
    assert np.all(v[~(sp.plus | sp.minus)] == 0.0)
    assert np.max(np.abs(v)) == pytest.approx(cert.delta)
    assert cert.report["defect_fraction"] <= 0.005


def test_admissibility_check_flags_bad_field():
    g = Grid(2, 128)
    W = EuclideanAnisotropy(2)
    pair = PairOfSets(g, _disk(g, 0.25, 0.25, 14), _disk(g, 0.75, 0.75, 16))
    sp = smooth_pair_between(pair, 2 * g.h, 11 * g.h)
    cert = support_from_smooth_pair(sp, W)
    # corrupt the field far outside the Wulff set
    cert.z.values[:] = 5.0
    report = admissibility_check(cert, W)
    assert report["defect_fraction"] > 0.5


def test_ordered_support_function_dominates():
    g = Grid(2, 128)
    W = EuclideanAnisotropy(2)
    pair = PairOfSets(g, _disk(g, 0.25, 0.25, 14), _disk(g, 0.75, 0.75, 16))
    sp = smooth_pair_between(pair, 2 * g.h, 11 * g.h)
    cert = support_from_smooth_pair(sp, W)
    theta = GridFunction(g, np.where(_disk(g, 0.75, 0.75, 8), 0.04, 0.0)
                         - np.where(_disk(g, 0.25, 0.25, 8), 0.03, 0.0))
    alpha, beta, cert2 = ordered_support_function(theta, sp, cert)
    assert alpha > 0 and beta > 0
    assert np.all(cert2.psi.values >= theta.values - 1e-12)
