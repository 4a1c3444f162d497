"""Singular resolvent: closed forms, duality gap, order, and curvature."""

import numpy as np
import pytest

from facetflow.anisotropy import EuclideanAnisotropy
from facetflow.grid import Grid, GridFunction
from facetflow.resolvent import (ResolventConfig, curvature_dq, essinf_ball,
                                 esssup_ball, facet_interior,
                                 monotonicity_check, resolve_singular,
                                 resolvent_bruteforce,
                                 total_variation_energy)


def _tent(g, slope=0.5):
    x = g.coords()[..., 0]
    d = np.minimum(np.abs(x - 0.5), 1 - np.abs(x - 0.5))
    return GridFunction(g, slope * (0.25 - d))


def test_total_variation_energy_of_tent():
    g = Grid(1, 256)
    u = _tent(g, 0.5)
    # |u'| = 1/2 on the whole circle, so the energy is 1/2
    assert total_variation_energy(u, EuclideanAnisotropy(1)) == \
        pytest.approx(0.5, rel=1e-10)


def test_resolvent_tent_closed_form():
    """Facet half-length sqrt(2a/s) and peak drop sqrt(2as)."""
    g = Grid(1, 512)
    s, a = 0.5, 0.005
    psi = _tent(g, s)
    psi_a, z, rep = resolve_singular(psi, EuclideanAnisotropy(1),
                                     ResolventConfig(a=a, max_iter=100000,
                                                     rel_gap_tol=1e-10))
    assert rep.converged
    drop = np.max(psi.values) - np.max(psi_a.values)
    assert drop == pytest.approx(np.sqrt(2 * a * s), rel=0.05)
    flat = np.abs(psi_a.values - np.max(psi_a.values)) <= 0.5 * g.h * s
    half_len = 0.5 * np.sum(flat) * g.h
    assert abs(half_len - np.sqrt(2 * a / s)) <= max(3 * g.h,
                                                     0.05 * np.sqrt(2 * a / s))


def test_resolvent_agrees_with_bruteforce():
    g = Grid(1, 128)
    psi = _tent(g, 0.5)
    W = EuclideanAnisotropy(1)
    a = 0.005
    fast, _, rep = resolve_singular(psi, W, ResolventConfig(
        a=a, max_iter=60000, rel_gap_tol=1e-12))
    slow = resolvent_bruteforce(psi, W, a, iterations=200000)
    assert np.max(np.abs(fast.values - slow.values)) < 1e-6


def test_resolvent_error_bound_from_gap():
    g = Grid(1, 128)
    psi = _tent(g, 0.5)
    W = EuclideanAnisotropy(1)
    fast, _, rep = resolve_singular(psi, W, ResolventConfig(
        a=0.005, max_iter=60000, rel_gap_tol=1e-12))
    slow = resolvent_bruteforce(psi, W, 0.005, iterations=300000)
    err = np.sqrt(np.sum((fast.values - slow.values) ** 2) * g.h)
    assert err <= rep.l2_error_bound + 1e-8


def test_resolvent_preserves_mean_and_constants():
    g = Grid(1, 64)
    W = EuclideanAnisotropy(1)
    c = GridFunction.constant(g, 0.7)
    out, _, _ = resolve_singular(c, W, ResolventConfig(a=0.01, max_iter=2000))
    assert np.allclose(out.values, 0.7, atol=1e-8)


def test_resolvent_order_preservation():
    g = Grid(1, 128)
    rng = np.random.default_rng(4)
    from facetflow.grid import mollify
    lo = mollify(GridFunction(g, 0.2 * rng.standard_normal(g.shape)), 4 * g.h)
    hi = GridFunction(g, lo.values + 0.05)
    rep = monotonicity_check(lo, hi, EuclideanAnisotropy(1), 0.005,
                             max_iter=60000, rel_gap_tol=1e-10)
    assert rep["violation"] <= 1e-6


def test_curvature_dq_of_1d_facet():
    """A flat segment of length L at the top moves down at rate 2/L."""
    g = Grid(1, 512)
    x = g.coords()[..., 0]
    L, delta = 0.25, 0.06
    d = np.minimum(np.abs(x - 0.5), 1 - np.abs(x - 0.5))
    psi = GridFunction(g, np.clip(L / 2 + delta - d, 0, delta))
    lam = curvature_dq(psi, EuclideanAnisotropy(1), 2e-4,
                       max_iter=100000, rel_gap_tol=1e-8)
    on_facet = d <= L / 2 - 6 * g.h
    assert np.mean(lam.values[on_facet]) == pytest.approx(-2.0 / L, rel=0.05)


def test_essinf_esssup_ball():
    g = Grid(1, 64)
    u = GridFunction(g, np.sin(2 * np.pi * g.coords()[..., 0]))
    x0 = np.array([0.25])
    assert essinf_ball(u, x0, 3 * g.h) <= 1.0
    assert esssup_ball(u, x0, 3 * g.h) == pytest.approx(1.0, abs=0.05)
    assert essinf_ball(u, x0, 10 * g.h) <= essinf_ball(u, x0, 3 * g.h)


def test_facet_interior_finds_plateau():
    g = Grid(1, 256)
    x = g.coords()[..., 0]
    d = np.minimum(np.abs(x - 0.5), 1 - np.abs(x - 0.5))
    psi = GridFunction(g, np.clip(0.1 + 0.05 - d, 0, 0.05))
    mask = facet_interior(psi, float(np.max(psi.values)))
    assert np.sum(mask) > 0
    assert np.all(psi.values[mask] == np.max(psi.values))
