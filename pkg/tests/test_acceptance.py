"""End-to-end acceptance gates, one test per criterion.

Each test records a one-line verdict in ``RESULTS``; ``conftest.py`` prints
them in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from neckspec.analysis import (
    compare_graph_limit, fit_log_rate, graph_laplacian_spectrum, small_eigenvalue_columns, sweep,
)
from neckspec.assembly import assemble
from neckspec.cli import run
from neckspec.eigsolve import lobpcg_smallest
from neckspec.localmodel import (
    closed_form_endpoint_p1, displacement_exponent, flow_retraction, log_weight_scale_check,
    lojasiewicz_ratio_min, neck_measure_identity_check,
)
from neckspec.mesh import HOLE_SIDE, build_fiber_mesh, flat_torus_mesh, single_neck_mesh, total_area
from neckspec.potential import log_growth_report
from neckspec.testfn import dirichlet_energy, neck_ramp

from conftest import GRID, chain3, dumbbell

RESULTS = {}


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[n]


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def dumbbell_run():
    cfg = dumbbell(GRID, mesh_h=0.2)
    table, wall = _timed(sweep, cfg)
    return cfg, table, wall


@pytest.fixture(scope="module")
def chain_run():
    cfg = chain3(GRID, mesh_h=0.2)
    table, wall = _timed(sweep, cfg)
    return cfg, table, wall


def k4_constant(cfg):
    """A priori bound for ``bound * log(1/eps)``: ramp energy over component area.

    Each test function carries ``deg`` ramps of energy ``4 pi / log(1/eps)``
    and at least the component's area as mass; 10% covers discretization.
    """
    vals = [4 * math.pi * cfg.degree(v.id) / (v.mass - cfg.degree(v.id) * HOLE_SIDE ** 2)
            for v in cfg.vertices]
    return 1.1 * max(vals)


def test_criterion_01_rate_sandwich(dumbbell_run):
    _, table, wall = dumbbell_run
    fit = fit_log_rate(table, 1)
    lam2 = table.column(2)
    variation = (lam2.max() - lam2.min()) / lam2.min()
    ok = fit.r2 >= 0.95 and fit.slope > 0 and variation <= 0.5 and wall <= 300
    record(1, ok, f"1/lambda1 fit A={fit.slope:.4f} r2={fit.r2:.6f}; "
                  f"lambda2 variation {variation:.2%}; sweep {wall:.1f}s")


def test_criterion_02_small_count(chain_run):
    _, table, _ = chain_run
    cols = small_eigenvalue_columns(table)
    n_small = sum(c["small"] for c in cols)
    lam3 = table.column(3)
    ok = n_small == 2 and not cols[-1]["small"] and lam3.min() >= 0.5 * lam3[0]
    record(2, ok, f"small columns {[c['k'] for c in cols if c['small']]} "
                  f"(r2 {[round(c['r2'], 4) for c in cols]}); "
                  f"min lambda3 / lambda3(s_max) = {lam3.min() / lam3[0]:.4f}")


def test_criterion_03_minmax(dumbbell_run, chain_run):
    worst_margin, products, ok = np.inf, [], True
    for cfg, table, _ in (dumbbell_run, chain_run):
        C = k4_constant(cfg)
        for row in table.rows:
            n = len(row.bounds)
            margin = np.min(row.bounds - row.eigenvalues[1:n + 1])
            worst_margin = min(worst_margin, margin)
            prod = row.bounds.max() * math.log(1 / row.eps)
            products.append(prod)
            ok &= margin >= 0 and prod <= C
    record(3, ok, f"min(bound - lambda) = {worst_margin:.4g}; "
                  f"bound*log(1/eps) in [{min(products):.3f}, {max(products):.3f}], "
                  f"constants {k4_constant(dumbbell()):.3f} / {k4_constant(chain3()):.3f}")


def test_criterion_04_oracles():
    t0 = time.perf_counter()
    eps = math.exp(-8.0)
    neck = single_neck_mesh(math.exp(-12.0), 0.1)
    Kn, Mn = assemble(neck)
    energy = dirichlet_energy(Kn, neck_ramp(neck, eps))
    e_err = abs(energy / (4 * math.pi / math.log(1 / eps)) - 1)

    torus = flat_torus_mesh(4.0, 0.1)
    Kt, Mt = assemble(torus)
    lam1 = lobpcg_smallest(Kt, Mt, 5).eigenvalues[1]
    t_err = abs(lam1 / (math.pi ** 2 / 4) - 1)

    mass_err = 0.0
    for mesh, M in ((neck, Mn), (torus, Mt)):
        one = np.ones(mesh.n_nodes)
        mass_err = max(mass_err, abs(one @ (M @ one) / total_area(mesh) - 1))
    mesh = build_fiber_mesh(dumbbell(), 1e-3)
    _, M = assemble(mesh)
    one = np.ones(mesh.n_nodes)
    mass_err = max(mass_err, abs(one @ (M @ one) / total_area(mesh) - 1))
    wall = time.perf_counter() - t0
    ok = e_err <= 0.03 and t_err <= 0.02 and mass_err <= 1e-10 and wall <= 30
    record(4, ok, f"ramp energy err {e_err:.2%}; torus lambda1 err {t_err:.2%}; "
                  f"mass/area err {mass_err:.1e}; {wall:.1f}s")


def test_criterion_05_graph_limit(dumbbell_run):
    cfg, table, _ = dumbbell_run
    comp = compare_graph_limit(table, graph_laplacian_spectrum(cfg)[1])["comparisons"][0]
    gap = comp["gap_at_smallest_s"]
    ok = gap <= 0.35 and comp["monotone_approach"]
    record(5, ok, f"log(1/s)*lambda1 at s=1e-5 = {comp['rescaled'][-1]:.4f} vs pi/4; "
                  f"gap {gap:.2%}; monotone {comp['monotone_approach']}")


def test_criterion_06_flow():
    t0 = time.perf_counter()
    tr = flow_retraction(1, 1e-2)
    end_err = float(np.abs(tr.endpoint - closed_form_endpoint_p1(1e-2)).max())
    slopes = [displacement_exponent(p, GRID)[0] for p in (1, 2)]
    defect = max(flow_retraction(p, s, th).defect.max()
                 for p in (1, 2) for s in GRID for th in (0.0, 1.0))
    wall = time.perf_counter() - t0
    ok = end_err <= 1e-8 and min(slopes) >= 0.70 and defect <= 1e-9 and wall <= 10
    record(6, ok, f"endpoint err {end_err:.1e}; exponents p=1 {slopes[0]:.4f}, "
                  f"p=2 {slopes[1]:.4f}; max pi-defect {defect:.1e}; {wall:.2f}s")


def test_criterion_07_lojasiewicz():
    r1 = lojasiewicz_ratio_min(1, 100_000, seed=0)
    r2 = lojasiewicz_ratio_min(2, 100_000, seed=0)
    record(7, r1 == 1.0 and r2 >= 0.5, f"p=1 min {r1!r}; p=2 min {r2:.4f}")


def test_criterion_08_measure():
    pairs = {s: neck_measure_identity_check(s, quad_tol=1e-8) for s in (1e-1, 1e-3)}
    dev = max(abs(x - 1) for pr in pairs.values() for x in pr)
    w = {p: log_weight_scale_check(p, 1e-6, 5) for p in (1, 2)}
    ok = dev <= 1e-6 and all(w[p] <= 4 ** (2 * p) * 1.05 for p in (1, 2))
    record(8, ok, f"measure ratio deviation {dev:.1e}; "
                  f"worst weight ratios p=1 {w[1]:.6f} (<= 16.8), p=2 {w[2]:.4f} (<= 268.8)")


def test_criterion_09_potential():
    report, wall = _timed(log_growth_report, dumbbell(GRID, mesh_h=0.2))
    g, p = report["green_min_fit"], report["poisson_fit"]
    sups = [max(r["eigenfunction_sup"]) for r in report["rows"]]
    bounded = all(math.isfinite(x) for x in sups) and max(sups) <= 2 * sups[0]
    ok = (g["r2"] >= 0.95 and g["A"] < 0 and math.isfinite(p["A"]) and p["r2"] >= 0.95
          and p["max_relative_excess"] <= 0.10 and bounded and wall <= 300)
    record(9, ok, f"min G slope {g['A']:.4f} r2={g['r2']:.6f}; Poisson slope {p['A']:.4f} "
                  f"r2={p['r2']:.6f}; eigenfunction sup {min(sups):.3f}..{max(sups):.3f}; {wall:.1f}s")


def test_criterion_10_determinism(tmp_path):
    from pathlib import Path

    src = Path(__file__).resolve().parents[1] / "configs" / "dumbbell.json"
    cfg = tmp_path / "dumbbell.json"
    cfg.write_text(src.read_text())
    outs = [tmp_path / f"sweep{i}.csv" for i in range(2)]
    codes = [run(["sweep", "--config", str(cfg), "--out", str(o), "--seed", "3"]) for o in outs]
    same = outs[0].read_bytes() == outs[1].read_bytes()
    record(10, codes == [0, 0] and same,
           f"exit codes {codes}; byte-identical {same} ({outs[0].stat().st_size} bytes)")
