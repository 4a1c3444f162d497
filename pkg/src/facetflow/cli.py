"""Command-line runner: scenario configs, checks, and reproducible artifacts.

Usage:
    facetflow run <config> [--out DIR] [--seed N] [--quiet]
    facetflow list

Configs are flat key = value text with dotted section keys; `facetflow
list` prints the built-in templates, each of which parses back through
the same reader.  Every run writes a manifest (structured text, one
check per line), a comma-separated monitor table with a leading time
column, and grid snapshots in the FACETFLOW-GRID v1 text format.  All
floating-point output uses 17 significant digits so artifacts round-trip
exactly; reruns with identical config and seed are bit-for-bit
identical.  Wall-clock timing goes to a separate timing file so the
deterministic artifacts stay deterministic.

Exit codes: 0 all checks pass; 2 config/schema error; 3 numerical
failure (solver or stability, manifest still written); 4 check failure.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np
from scipy import ndimage

from . import __version__
from .anisotropy import (EllipticAnisotropy, EuclideanAnisotropy,
                         MollifiedAnisotropy, PowerFourAnisotropy,
                         make_anisotropy)
from .conjugate import (BarrierConstructionError, ParameterError, beta_Aq,
                        build_barrier, choose_parameters)
from .evolution import (EvolutionConfig, StabilityError, evolve,
                        faceted_test_residual, lipschitz_monitor,
                        make_speed_law)
from .facets import PairOfSets, smooth_pair_between, support_from_smooth_pair
from .grid import Grid, GridFunction, lipschitz_constant
from .resolvent import (ConvergenceError, ResolventConfig, curvature_dq,
                        essinf_ball, resolve_singular)


class SchemaError(ValueError):
    """Config file is missing, malformed, or out of documented range."""


def fmt(x) -> str:
    """17 significant digits: exact round-trip for doubles."""
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# config parsing

SCENARIO_KINDS = ("anisotropy-check", "resolvent", "curvature", "monotonicity",
                  "evolve", "compare", "barrier", "viscosity-test")

# documented schema: key -> (type, allowed scenario kinds or None for all)
_SCHEMA = {
    "scenario": (str, None),
    "seed": (int, None),
    "out.dir": (str, None),
    "grid.n": (int, None),
    "grid.N": (int, None),
    "anisotropy.model": (str, None),
    "anisotropy.diag": (str, None),
    "init.kind": (str, None),
    "init.slope": (float, None),
    "init.amplitude": (float, None),
    "init.radius": (float, None),
    "init.level": (float, None),
    "check.samples": (int, ("anisotropy-check",)),
    "resolvent.a": (float, ("resolvent", "monotonicity", "viscosity-test")),
    "resolvent.max-iter": (int, ("resolvent", "curvature", "monotonicity",
                                 "viscosity-test")),
    "resolvent.rel-gap-tol": (float, ("resolvent", "curvature", "monotonicity",
                                      "viscosity-test")),
    "curvature.a": (float, ("curvature",)),
    "curvature.levels": (int, ("curvature",)),
    "check.curvature-rel-tol": (float, ("curvature",)),
    "mono.pairs": (int, ("monotonicity",)),
    "check.violation-tol": (float, ("monotonicity",)),
    "evolve.m": (float, ("evolve", "compare")),
    "evolve.t-end": (float, ("evolve", "compare")),
    "evolve.cfl": (float, ("evolve", "compare")),
    "evolve.speed": (str, ("evolve", "compare", "barrier", "viscosity-test")),
    "evolve.scale": (float, ("evolve", "compare", "barrier", "viscosity-test")),
    "evolve.forcing": (float, ("evolve", "compare")),
    "evolve.record-every": (int, ("evolve", "compare")),
    "check.peak-law": (int, ("evolve",)),
    "check.lipschitz-slack": (float, ("evolve", "compare")),
    "compare.pairs": (int, ("compare",)),
    "check.crossing-cells": (float, ("compare",)),
    "barrier.delta": (float, ("barrier",)),
    "barrier.K": (float, ("barrier",)),
    "barrier.samples": (int, ("barrier",)),
    "barrier.t": (float, ("barrier",)),
    "viscosity.radius": (float, ("viscosity-test",)),
}

_DEFAULTS = {
    "seed": 1234,
    "out.dir": "facetflow-out",
    "grid.n": 1,
    "grid.N": 128,
    "anisotropy.model": "euclidean",
    "init.kind": "tent",
    "init.slope": 0.5,
    "init.amplitude": 0.1,
    "init.radius": 0.2,
    "init.level": 0.0,
    "check.samples": 200,
    "resolvent.a": 0.005,
    "resolvent.max-iter": 100000,
    "resolvent.rel-gap-tol": 1e-10,
    "curvature.a": 0.001,
    "curvature.levels": 2,
    "check.curvature-rel-tol": 0.1,
    "mono.pairs": 5,
    "check.violation-tol": 1e-6,
    "evolve.m": 16.0,
    "evolve.t-end": 0.001,
    "evolve.cfl": 0.4,
    "evolve.speed": "tv_flow",
    "evolve.scale": 1.0,
    "evolve.forcing": 0.0,
    "evolve.record-every": 0,
    "check.peak-law": 0,
    "check.lipschitz-slack": 1e-3,
    "compare.pairs": 3,
    "check.crossing-cells": 10.0,
    "barrier.delta": 0.5,
    "barrier.K": 2.0,
    "barrier.samples": 400,
    "barrier.t": 0.01,
    "viscosity.radius": 0.2,
}


def parse_config(text: str) -> dict:
    """Parse flat key = value config text into a typed dict."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise SchemaError(f"line {lineno}: unknown key '{key}'")
        typ, _kinds = _SCHEMA[key]
        try:
            cfg[key] = typ(val)
        except ValueError as e:
            raise SchemaError(f"line {lineno}: bad value for '{key}': {e}")
    if "scenario" not in cfg:
        raise SchemaError("missing required key 'scenario'")
    kind = cfg["scenario"]
    if kind not in SCENARIO_KINDS:
        raise SchemaError(f"unknown scenario '{kind}'")
    for key in cfg:
        _typ, kinds = _SCHEMA[key]
        if kinds is not None and kind not in kinds:
            raise SchemaError(f"key '{key}' not valid for scenario '{kind}'")
    full = dict(_DEFAULTS)
    full.update(cfg)
    _validate_ranges(full)
    return full


def _validate_ranges(cfg):
    if cfg["grid.n"] not in (1, 2):
        raise SchemaError("grid.n must be 1 or 2")
    if not 8 <= cfg["grid.N"] <= 4096:
        raise SchemaError("grid.N out of range [8, 4096]")
    for key in ("resolvent.a", "curvature.a", "evolve.t-end", "evolve.m",
                "barrier.delta", "barrier.K"):
        if cfg[key] <= 0:
            raise SchemaError(f"{key} must be positive")
    if cfg["anisotropy.model"] not in ("euclidean", "elliptic", "l4"):
        raise SchemaError("anisotropy.model must be euclidean, elliptic or l4")
    if cfg["init.kind"] not in ("tent", "sin", "disk", "constant",
                                "random-smooth"):
        raise SchemaError("unknown init.kind")
    if cfg["evolve.speed"] not in ("tv_flow", "graph_flow", "driven_flow"):
        raise SchemaError("unknown evolve.speed")
    if cfg["evolve.cfl"] <= 0:
        raise SchemaError("evolve.cfl must be positive")


def _build_anisotropy(cfg):
    name = cfg["anisotropy.model"]
    n = cfg["grid.n"]
    params = {}
    if name == "elliptic":
        diag = cfg.get("anisotropy.diag", "4.0,1.0")
        params["diag"] = [float(v) for v in str(diag).split(",")][:n]
    return make_anisotropy(name, n, params)


def _speed_params(cfg):
    name = cfg["evolve.speed"]
    if name == "tv_flow":
        return name, {}
    if name == "graph_flow":
        return name, {"s": cfg["evolve.scale"]}
    return name, {"s": cfg["evolve.scale"], "c": cfg["evolve.forcing"]}


def _build_initial(cfg, grid: Grid, rng) -> GridFunction:
    kind = cfg["init.kind"]
    c = grid.coords()
    if kind == "constant":
        return GridFunction.constant(grid, cfg["init.level"])
    if kind == "tent":
        s = cfg["init.slope"]
        d = np.minimum(np.abs(c[..., 0] - 0.5), 1.0 - np.abs(c[..., 0] - 0.5))
        for i in range(1, grid.n):
            di = np.minimum(np.abs(c[..., i] - 0.5),
                            1.0 - np.abs(c[..., i] - 0.5))
            d = np.maximum(d, di)
        return GridFunction(grid, s * (0.25 - d))
    if kind == "sin":
        v = np.sin(2 * np.pi * c[..., 0])
        for i in range(1, grid.n):
            v = v * np.sin(2 * np.pi * c[..., i])
        return GridFunction(grid, cfg["init.amplitude"] * v)
    if kind == "disk":
        r = cfg["init.radius"]
        d2 = np.zeros(grid.shape)
        for i in range(grid.n):
            di = np.minimum(np.abs(c[..., i] - 0.5),
                            1.0 - np.abs(c[..., i] - 0.5))
            d2 += di**2
        depth = r - np.sqrt(d2)
        delta = cfg["init.amplitude"]
        return GridFunction(grid, np.clip(depth + delta, 0.0, delta))
    # random-smooth: band-limited noise, normalized amplitude
    v = ndimage.gaussian_filter(rng.standard_normal(grid.shape),
                                max(2.0, grid.N / 24), mode="wrap")
    v = v / max(np.max(np.abs(v)), 1e-12)
    return GridFunction(grid, cfg["init.amplitude"] * v)


# ---------------------------------------------------------------------------
# artifacts

class Manifest:
    def __init__(self, cfg):
        self.cfg = cfg
        self.checks = []       # (name, passed, margin, note)
        self.failures = []     # numerical diagnostics

    def check(self, name, passed, margin, note=""):
        self.checks.append((name, bool(passed), float(margin), note))

    def numerical_failure(self, note):
        self.failures.append(note)

    def all_passed(self):
        return all(p for _n, p, _m, _note in self.checks) and not self.failures

    def render(self):
        lines = ["facetflow-manifest v1", f"version = {__version__}"]
        kind = self.cfg["scenario"]
        for key in sorted(self.cfg):
            _typ, kinds = _SCHEMA[key]
            if kinds is None or kind in kinds:
                lines.append(f"config {key} = {self.cfg[key]}")
        for note in self.failures:
            lines.append(f"numerical-failure: {note}")
        for name, passed, margin, note in self.checks:
            status = "pass" if passed else "FAIL"
            extra = f" ({note})" if note else ""
            lines.append(f"check {name}: {status} margin={fmt(margin)}{extra}")
        lines.append(f"checks-total = {len(self.checks)}")
        return "\n".join(lines) + "\n"


def write_snapshot(path, u: GridFunction, t: float):
    g = u.grid
    with open(path, "w") as f:
        f.write(f"FACETFLOW-GRID v1\nn={g.n} N={g.N} t={fmt(t)}\n")
        rows = u.values.reshape(-1, g.N) if g.n > 1 else u.values[None, :]
        for row in rows:
            f.write(" ".join(fmt(v) for v in row) + "\n")


def read_snapshot(path):
    with open(path) as f:
        magic = f.readline().strip()
        if magic != "FACETFLOW-GRID v1":
            raise ValueError(f"not a facetflow snapshot: {path}")
        header = dict(kv.split("=") for kv in f.readline().split())
        n, N = int(header["n"]), int(header["N"])
        vals = np.loadtxt(f).reshape((N,) * n)
    return GridFunction(Grid(n, N), vals), float(header["t"])


def write_series(path, columns, rows):
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# scenarios

def _scenario_anisotropy_check(cfg, out, man, rng):
    W = _build_anisotropy(cfg)
    n = cfg["grid.n"]
    k = cfg["check.samples"]
    p = rng.standard_normal((k, n))
    p = p[np.linalg.norm(p, axis=-1) > 1e-6]
    alphas = rng.uniform(0.1, 10.0, size=p.shape[0])
    hom = np.max(np.abs(W.eval(alphas[:, None] * p) - alphas * W.eval(p))
                 / np.maximum(alphas * W.eval(p), 1e-300))
    man.check("one-homogeneity", hom <= 1e-12, 1e-12 - hom)
    lower = np.min(W.eval(p) - W.lambda0 * np.linalg.norm(p, axis=-1))
    man.check("lower-bound", lower >= -1e-12, lower)
    q = rng.standard_normal(p.shape)
    conv = np.max(W.eval((p + q) / 2) - (W.eval(p) + W.eval(q)) / 2)
    man.check("midpoint-convexity", conv <= 1e-12, -conv)
    euler = np.max(np.abs(np.einsum("kij,kj->ki", W.hess(p), p)))
    man.check("euler-identity", euler <= 1e-8, 1e-8 - euler)
    write_series(out / "series.csv", ["time", "samples"], [(0.0, p.shape[0])])


def _tent_measurements(psi, psi_a, slope):
    g = psi.grid
    drop = float(np.max(psi.values) - np.max(psi_a.values))
    flat = np.abs(psi_a.values - np.max(psi_a.values)) <= 0.5 * g.h * slope
    half_len = 0.5 * float(np.sum(flat)) * g.h
    return half_len, drop


def _scenario_resolvent(cfg, out, man, rng):
    grid = Grid(cfg["grid.n"], cfg["grid.N"])
    W = _build_anisotropy(cfg)
    psi = _build_initial(cfg, grid, rng)
    a = cfg["resolvent.a"]
    rc = ResolventConfig(a=a, max_iter=cfg["resolvent.max-iter"],
                         rel_gap_tol=cfg["resolvent.rel-gap-tol"])
    psi_a, _z, rep = resolve_singular(psi, W, rc)
    write_snapshot(out / "input.grid", psi, 0.0)
    write_snapshot(out / "resolvent.grid", psi_a, a)
    if not rep.converged:
        man.numerical_failure(
            f"resolvent gap {rep.gap:.3e} above tol {rep.gap_tol:.3e} "
            f"after {rep.iterations} iterations")
    cols = ["time", "gap", "iterations", "l2_error_bound"]
    row = [0.0, rep.gap, rep.iterations, rep.l2_error_bound]
    if cfg["init.kind"] == "tent":
        s = cfg["init.slope"]
        half_len, drop = _tent_measurements(psi, psi_a, s)
        tgt_len, tgt_drop = np.sqrt(2 * a / s), np.sqrt(2 * a * s)
        tol_len = max(3 * grid.h, 0.05 * tgt_len)
        man.check("facet-half-length", abs(half_len - tgt_len) <= tol_len,
                  tol_len - abs(half_len - tgt_len),
                  f"measured {fmt(half_len)} target {fmt(tgt_len)}")
        man.check("peak-drop", abs(drop - tgt_drop) <= 0.05 * tgt_drop,
                  0.05 * tgt_drop - abs(drop - tgt_drop),
                  f"measured {fmt(drop)} target {fmt(tgt_drop)}")
        cols += ["half_length", "target_half_length", "drop", "target_drop"]
        row += [half_len, tgt_len, drop, tgt_drop]
    man.check("gap-certified", rep.converged, rep.gap_tol - rep.gap)
    write_series(out / "series.csv", cols, [row])


def _scenario_curvature(cfg, out, man, rng):
    grid = Grid(cfg["grid.n"], cfg["grid.N"])
    W = _build_anisotropy(cfg)
    psi = _build_initial(cfg, grid, rng)
    a = cfg["curvature.a"]
    lam = curvature_dq(psi, W, a, max_iter=cfg["resolvent.max-iter"],
                       rel_gap_tol=cfg["resolvent.rel-gap-tol"])
    write_snapshot(out / "input.grid", psi, 0.0)
    write_snapshot(out / "curvature.grid", lam, 0.0)
    rows = [(0.0, a, float(np.min(lam.values)), float(np.max(lam.values)))]
    if cfg["init.kind"] == "disk" and grid.n == 2:
        R = cfg["init.radius"]
        delta = cfg["init.amplitude"]
        # average over the eroded facet {psi = max}, a disk of radius R
        c = grid.coords()
        d2 = sum(np.minimum(np.abs(c[..., i] - 0.5),
                            1 - np.abs(c[..., i] - 0.5))**2
                 for i in range(2))
        facet = d2 <= (R - delta - 4 * grid.h)**2
        val = float(np.mean(lam.values[facet]))
        target = -2.0 / R
        tol = cfg["check.curvature-rel-tol"] * abs(target)
        man.check("disk-curvature", abs(val - target) <= tol,
                  tol - abs(val - target),
                  f"measured {fmt(val)} target {fmt(target)}")
        rows[0] = rows[0] + (val, target)
    cols = ["time", "a", "min", "max"] + (
        ["facet_mean", "facet_target"] if len(rows[0]) == 6 else [])
    man.check("curvature-finite", np.all(np.isfinite(lam.values)), 1.0)
    write_series(out / "series.csv", cols, rows)


def _scenario_monotonicity(cfg, out, man, rng):
    grid = Grid(cfg["grid.n"], cfg["grid.N"])
    W = _build_anisotropy(cfg)
    a = cfg["resolvent.a"]
    worst = 0.0
    rows = []
    for k in range(cfg["mono.pairs"]):
        lo = _build_initial(dict(cfg, **{"init.kind": "random-smooth"}),
                            grid, rng)
        pad = 0.2 * cfg["init.amplitude"]
        bump = _build_initial(dict(cfg, **{"init.kind": "random-smooth"}),
                              grid, rng)
        hi = GridFunction(grid, lo.values + pad + np.abs(bump.values))
        rc = dict(max_iter=cfg["resolvent.max-iter"],
                  rel_gap_tol=cfg["resolvent.rel-gap-tol"])
        lo_a, _, rep1 = resolve_singular(lo, W, ResolventConfig(a=a, **rc))
        hi_a, _, rep2 = resolve_singular(hi, W, ResolventConfig(a=a, **rc))
        if not (rep1.converged and rep2.converged):
            man.numerical_failure(f"pair {k}: resolvent gap not certified")
        v = float(max(0.0, -np.min(hi_a.values - lo_a.values)))
        worst = max(worst, v)
        rows.append((float(k), v, rep1.gap, rep2.gap))
    tol = cfg["check.violation-tol"]
    man.check("order-preserved", worst <= tol, tol - worst,
              f"worst violation {fmt(worst)}")
    write_series(out / "series.csv", ["time", "violation", "gap_lo", "gap_hi"],
                 rows)


def _cfl_guard(cfg, man):
    if cfg["evolve.cfl"] > 1.0:
        man.numerical_failure(
            f"CFL constant {cfg['evolve.cfl']} exceeds the explicit-scheme "
            "bound 1 (dt would exceed h^2 / (2 n a_m lip_xi))")
        return False
    return True


def _scenario_evolve(cfg, out, man, rng):
    grid = Grid(cfg["grid.n"], cfg["grid.N"])
    W = _build_anisotropy(cfg)
    W_m = MollifiedAnisotropy(W, cfg["evolve.m"])
    name, params = _speed_params(cfg)
    speed = make_speed_law(name, grid.n, params)
    u0 = _build_initial(cfg, grid, rng)
    if not _cfl_guard(cfg, man):
        return
    ec = EvolutionConfig(t_end=cfg["evolve.t-end"], cfl=cfg["evolve.cfl"],
                         record_every=cfg["evolve.record-every"],
                         lipschitz_slack=cfg["check.lipschitz-slack"])
    trace = evolve(u0, W_m, speed, ec)
    write_snapshot(out / "initial.grid", u0, 0.0)
    write_snapshot(out / "final.grid", trace.final(), trace.times[-1])
    rows = []
    # a tent of slope s under speed scale c loses height sqrt(2 s c t)
    scale = speed.xi_scale if speed.xi_scale is not None else 1.0
    s_eff = cfg["init.slope"] * scale
    for t, st, lip in zip(trace.times, trace.states, trace.lipschitz):
        row = [t, float(np.max(st.values)), float(np.min(st.values)), lip]
        if cfg["check.peak-law"]:
            row.append(float(np.max(u0.values)) - np.sqrt(2 * s_eff * t))
        rows.append(row)
    cols = ["time", "peak", "min", "lipschitz"] + (
        ["peak_target"] if cfg["check.peak-law"] else [])
    write_series(out / "series.csv", cols, rows)
    mon = lipschitz_monitor(trace)
    slack = cfg["check.lipschitz-slack"]
    budget = mon["initial"] * (1 + slack) + slack
    man.check("lipschitz-bound", mon["max"] <= budget, budget - mon["max"],
              f"max {fmt(mon['max'])} initial {fmt(mon['initial'])}")
    if cfg["check.peak-law"]:
        t = trace.times[-1]
        target = float(np.max(u0.values)) - np.sqrt(2 * s_eff * t)
        peak = float(np.max(trace.final().values))
        tol = 0.05 * abs(float(np.max(u0.values)) - target)
        man.check("peak-law", abs(peak - target) <= tol,
                  tol - abs(peak - target),
                  f"peak {fmt(peak)} target {fmt(target)}")


def _scenario_compare(cfg, out, man, rng):
    grid = Grid(cfg["grid.n"], cfg["grid.N"])
    W = _build_anisotropy(cfg)
    W_m = MollifiedAnisotropy(W, cfg["evolve.m"])
    name, params = _speed_params(cfg)
    speed = make_speed_law(name, grid.n, params)
    if not _cfl_guard(cfg, man):
        return
    ec = EvolutionConfig(t_end=cfg["evolve.t-end"], cfl=cfg["evolve.cfl"],
                         record_every=cfg["evolve.record-every"] or 200)
    worst = 0.0
    rows = []
    for k in range(cfg["compare.pairs"]):
        lo = _build_initial(dict(cfg, **{"init.kind": "random-smooth"}),
                            grid, rng)
        bump = _build_initial(dict(cfg, **{"init.kind": "random-smooth"}),
                              grid, rng)
        hi = GridFunction(grid, lo.values + 0.02 + np.abs(bump.values))
        tr_lo = evolve(lo, W_m, speed, ec)
        tr_hi = evolve(hi, W_m, speed, ec)
        crossing = 0.0
        for s_lo, s_hi in zip(tr_lo.states, tr_hi.states):
            crossing = max(crossing,
                           float(max(0.0, -np.min(s_hi.values - s_lo.values))))
        worst = max(worst, crossing)
        rows.append((float(k), crossing))
    tol = cfg["check.crossing-cells"] * grid.h
    man.check("no-crossing", worst <= tol, tol - worst,
              f"worst crossing {fmt(worst)}")
    write_series(out / "series.csv", ["time", "crossing"], rows)


def _scenario_barrier(cfg, out, man, rng):
    W = _build_anisotropy(cfg)
    delta, K = cfg["barrier.delta"], cfg["barrier.K"]
    try:
        m0, A, q, mu = choose_parameters(delta, K, W)
    except ParameterError as e:
        man.check("conjugate-lower-bound", False, -1.0, str(e))
        write_series(out / "series.csv", ["time"], [(0.0,)])
        return
    man.check("constant-A", abs(A - delta / (8 * mu)) <= 1e-15, 1e-15,
              f"A={fmt(A)}")
    man.check("constant-q", abs(q - 8 * K / delta) <= 1e-15, 1e-15,
              f"q={fmt(q)}")
    man.check("conjugate-lower-bound", True, 1.0, f"m0={fmt(m0)}")
    name, params = _speed_params(cfg)
    speed = make_speed_law(name, cfg["grid.n"], params)

    def F(p, xi):
        return speed(p, xi)

    try:
        fam = build_barrier(m0, A, q, W, speed=F,
                            n_check=cfg["barrier.samples"])
    except BarrierConstructionError as e:
        man.check("barrier-bounds", False, -1.0, str(e))
        write_series(out / "series.csv", ["time"], [(0.0,)])
        return
    man.check("barrier-bounds", True, 1.0,
              f"beta={fmt(fam.beta)} Lm_max={fmt(fam.provenance['Lm_max'])}")
    # supersolution residual of phi(x,t) = beta t + W*(x): residual =
    # beta + F(grad W*, L_m W*) >= beta - sup|F| >= 1 by construction
    xs = rng.normal(scale=1.0, size=(cfg["barrier.samples"], W.n))
    _v, p, Hc = fam.conjugate(xs, with_derivatives=True)
    Lm = np.einsum("kij,kji->k", fam.W_m.hess(p), Hc)
    resid = fam.beta + np.asarray(F(p, Lm))
    man.check("supersolution-residual", float(np.min(resid)) >= -1e-6,
              float(np.min(resid)) + 1e-6,
              f"min residual {fmt(float(np.min(resid)))}")
    rows = [(cfg["barrier.t"], fam.beta, float(np.min(resid)),
             float(np.max(Lm)))]
    write_series(out / "series.csv",
                 ["time", "beta", "min_residual", "Lm_max"], rows)


def _scenario_viscosity_test(cfg, out, man, rng):
    grid = Grid(2, cfg["grid.N"])
    W = _build_anisotropy(dict(cfg, **{"grid.n": 2}))
    R = cfg["viscosity.radius"]
    c = grid.coords()
    d2 = sum(np.minimum(np.abs(c[..., i] - 0.5),
                        1 - np.abs(c[..., i] - 0.5))**2 for i in range(2))
    plus = d2 <= R**2
    pair = PairOfSets(grid, np.zeros(grid.shape, bool), plus)
    sp = smooth_pair_between(pair, 2 * grid.h, 14 * grid.h)
    cert = support_from_smooth_pair(sp, W)
    man.check("certificate-defects", cert.report["defect_fraction"] <= 0.005,
              0.005 - cert.report["defect_fraction"],
              f"defects {fmt(cert.report['defect_fraction'])}")
    name, params = _speed_params(cfg)
    speed = make_speed_law(name, 2, params)
    a = cfg["resolvent.a"]
    deltas = [3 * grid.h, 6 * grid.h, 12 * grid.h]
    res = faceted_test_residual(0.0, cert.psi, W, np.array([0.5, 0.5]),
                                deltas, a, speed,
                                max_iter=cfg["resolvent.max-iter"],
                                rel_gap_tol=cfg["resolvent.rel-gap-tol"])
    lam = res["curvature"]
    infs = [essinf_ball(lam, np.array([0.5, 0.5]), d) for d in deltas]
    mono = all(b <= a_ + 1e-12 for a_, b in zip(infs, infs[1:]))
    man.check("essinf-monotone", mono,
              min((a_ - b for a_, b in zip(infs, infs[1:])), default=0.0),
              "essential infimum shrinks with radius")
    xi = infs[0]
    margin = 0.05 * max(abs(xi), 1e-12)
    g_sub = -float(np.asarray(speed(np.zeros((1, 2)), np.atleast_1d(xi)))[0]) - margin
    g_sup = g_sub + 2 * margin
    r_sub = g_sub + float(np.asarray(speed(np.zeros((1, 2)),
                                           np.atleast_1d(xi)))[0])
    r_sup = g_sup + float(np.asarray(speed(np.zeros((1, 2)),
                                           np.atleast_1d(xi)))[0])
    man.check("faceted-test-signs", r_sub <= 0 <= r_sup,
              min(-r_sub, r_sup))
    write_snapshot(out / "support.grid", cert.psi, 0.0)
    write_snapshot(out / "curvature.grid", lam, 0.0)
    write_series(out / "series.csv",
                 ["time", "delta", "essinf"],
                 [(0.0, d, v) for d, v in zip(deltas, infs)])


_RUNNERS = {
    "anisotropy-check": _scenario_anisotropy_check,
    "resolvent": _scenario_resolvent,
    "curvature": _scenario_curvature,
    "monotonicity": _scenario_monotonicity,
    "evolve": _scenario_evolve,
    "compare": _scenario_compare,
    "barrier": _scenario_barrier,
    "viscosity-test": _scenario_viscosity_test,
}


# ---------------------------------------------------------------------------
# templates

TEMPLATES = {
    "anisotropy-check": """\
# sampled identities of a surface-energy density
scenario = anisotropy-check
grid.n = 2
anisotropy.model = euclidean
check.samples = 200
seed = 1
""",
    "resolvent-tent-1d": """\
# 1D tent resolvent against the closed-form facet length and drop
scenario = resolvent
grid.n = 1
grid.N = 512
anisotropy.model = euclidean
init.kind = tent
init.slope = 0.5
resolvent.a = 0.005
seed = 1
""",
    "disk-curvature-2d": """\
# calibrable-disk curvature -2/R on a 2D plateau
scenario = curvature
grid.n = 2
grid.N = 256
anisotropy.model = euclidean
init.kind = disk
init.radius = 0.2
init.amplitude = 0.05
curvature.a = 0.0002
resolvent.rel-gap-tol = 1e-5
check.curvature-rel-tol = 0.1
seed = 1
""",
    "monotonicity-2d": """\
# resolvent order preservation on random smooth ordered pairs
scenario = monotonicity
grid.n = 2
grid.N = 64
init.kind = random-smooth
init.amplitude = 0.15
resolvent.a = 0.002
resolvent.rel-gap-tol = 1e-8
mono.pairs = 5
seed = 1
""",
    "evolve-tent-1d": """\
# 1D tent total-variation flow with the peak decay law
scenario = evolve
grid.n = 1
grid.N = 256
init.kind = tent
init.slope = 0.5
evolve.m = 16
evolve.t-end = 0.002
evolve.record-every = 2000
check.peak-law = 1
seed = 1
""",
    "compare-1d": """\
# ordered evolutions stay ordered
scenario = compare
grid.n = 1
grid.N = 64
init.amplitude = 0.1
evolve.m = 8
evolve.t-end = 0.05
compare.pairs = 3
seed = 1
""",
    "barrier-euclidean-2d": """\
# barrier constants, conjugate bounds, and supersolution residual
scenario = barrier
grid.n = 2
anisotropy.model = euclidean
barrier.delta = 0.5
barrier.K = 2.0
barrier.samples = 400
seed = 1
""",
    "viscosity-disk-2d": """\
# faceted test residuals on a disk support function
scenario = viscosity-test
grid.n = 2
grid.N = 128
anisotropy.model = euclidean
viscosity.radius = 0.2
resolvent.a = 0.0005
resolvent.rel-gap-tol = 1e-8
seed = 1
""",
}


def list_scenarios(file=None):
    file = file or sys.stdout
    print("built-in scenario templates "
          "(run with: facetflow run <file>):", file=file)
    for name, text in TEMPLATES.items():
        print(f"\n--- {name} ---", file=file)
        print(text, end="", file=file)


# ---------------------------------------------------------------------------
# entry points

def run(config_path, out_dir=None, seed=None, quiet=False) -> int:
    from pathlib import Path
    try:
        text = Path(config_path).read_text()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except SchemaError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if out_dir is not None:
        cfg["out.dir"] = str(out_dir)
    if seed is not None:
        cfg["seed"] = int(seed)
    out = Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(cfg)
    rng = np.random.default_rng(cfg["seed"])
    t0 = time.perf_counter()
    status = 0
    try:
        _RUNNERS[cfg["scenario"]](cfg, out, man, rng)
    except (ConvergenceError, StabilityError) as e:
        man.numerical_failure(str(e))
    wall = time.perf_counter() - t0
    (out / "manifest.txt").write_text(man.render())
    (out / "timing.txt").write_text(f"wall_clock_s = {wall:.3f}\n")
    if man.failures:
        status = 3
    elif not man.all_passed():
        status = 4
    if not quiet:
        print(man.render(), end="")
        print(f"exit status {status}")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="facetflow",
        description="singular anisotropic curvature flow scenarios")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--quiet", action="store_true")
    sub.add_parser("list", help="print built-in scenario templates")
    args = parser.parse_args(argv)
    if args.command == "list":
        list_scenarios()
        return 0
    return run(args.config, out_dir=args.out, seed=args.seed,
               quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
