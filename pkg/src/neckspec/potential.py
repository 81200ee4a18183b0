"""Fiberwise Poisson problems and discrete Green functions.

``K`` is singular with kernel the constants, so every solve runs a
Jacobi-preconditioned conjugate gradient method inside the Euclidean
complement of the constants and shifts the result to mass-weighted mean
zero afterwards.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .analysis import MODEL_NOTE, fit_affine
from .assembly import assemble
from .config import ConfigGraph
from .eigsolve import lobpcg_smallest
from .errors import CompatibilityError, DataError, DomainError, SolverError
from .mesh import COMPONENT, build_fiber_mesh

log = logging.getLogger(__name__)

CG_RTOL = 1e-9
MEAN_RTOL = 1e-10
MAX_BASE_NODES = 8


def _mass_vector(M):
    return np.asarray(M.sum(axis=1)).ravel() if sp.issparse(M) else np.asarray(M).sum(axis=1)


def projected_cg(K, b, rtol: float = CG_RTOL, maxiter: int | None = None):
    """Solve ``K x = b`` for ``b`` orthogonal to the constants.

    Search directions are kept orthogonal to the constant vector, on which
    ``K`` is positive definite. Returns ``(x, iterations)`` with ``x``
    summing to zero.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = maxiter or max(20 * n, 1000)
    b = b - b.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, 0
    diag = K.diagonal() if sp.issparse(K) else np.diag(K)
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    r = b.copy()
    z = inv_diag * r
    z -= z.mean()
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        if np.linalg.norm(r) <= rtol * bnorm:
            # confirm with the true residual
            r_true = b - K @ x
            if np.linalg.norm(r_true) <= rtol * bnorm:
                return x - x.mean(), it
            r = r_true
        z = inv_diag * r
        z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - K @ x) / bnorm
    raise SolverError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})",
                      residuals=np.array([res]))


def _to_mass_mean_zero(u, m):
    return u - (m @ u) / m.sum()


def solve_poisson(K, M, g):
    """Solve ``K u = M g`` with mass-weighted mean of ``u`` equal to zero.

    Raises
    ------
    CompatibilityError
        If the mass-weighted mean of ``g`` is not zero (relative 1e-10).
    """
    g = np.asarray(g, dtype=float)
    rhs = M @ g
    total = float(np.sum(rhs))
    scale = float(np.sum(np.abs(rhs)))
    if scale > 0 and abs(total) > MEAN_RTOL * scale:
        raise CompatibilityError(
            f"right-hand side has nonzero mass-weighted mean {total / _mass_vector(M).sum():.3e}"
        )
    if scale == 0:
        return np.zeros_like(g)
    u, _ = projected_cg(K, rhs)
    return _to_mass_mean_zero(u, _mass_vector(M))


@dataclass(frozen=True)
class GreenColumn:
    """``G(x, .)`` with ``K G(x, .) = e_x - m / total`` and ``m^T G(x, .) = 0``."""

    base: int
    values: np.ndarray


def green_column(K, M, x: int) -> GreenColumn:
    """Discrete Green function with the counting delta at node ``x``."""
    m = _mass_vector(M)
    n = len(m)
    if not 0 <= x < n:
        raise DomainError(f"node {x} out of range [0, {n})")
    b = -m / m.sum()
    b[x] += 1.0
    u, _ = projected_cg(K, b)
    return GreenColumn(x, _to_mass_mean_zero(u, m))


def _base_nodes(mesh):
    nodes = []
    for ci, region in enumerate(mesh.regions):
        if region.kind != COMPONENT:
            continue
        idx = np.flatnonzero((mesh.node_region == ci) & np.all(mesh.nodes == 0.0, axis=1))
        nodes.extend(idx[:1].tolist())
    for r, grid in sorted(mesh.neck_grids.items()):
        nodes.append(int(grid[len(grid) // 2, 0]))
    return nodes[:MAX_BASE_NODES]


def _bump(mesh, cfg):
    """Indicator of the first component, shifted to global mass-mean zero."""
    ci = mesh.region_index(COMPONENT, cfg.vertices[0].id)
    return (mesh.node_region == ci).astype(float)


def _componentwise_zero_mean(mesh, cfg, m):
    """``cos(2 pi x / a)`` on each component, minus its component mean; zero on necks."""
    g = np.zeros(mesh.n_nodes)
    for v in cfg.vertices:
        ci = mesh.region_index(COMPONENT, v.id)
        idx = mesh.node_region == ci
        vals = np.cos(2.0 * math.pi * mesh.nodes[idx, 0] / v.side)
        g[idx] = vals - (m[idx] @ vals) / m[idx].sum()
    return g


def log_growth_report(cfg: ConfigGraph) -> dict:
    """Green-function minima, Poisson sup ratios and eigenfunction sup norms over the grid.

    Fits (a) the minimum of ``G_s`` over sampled base nodes and (b) the
    ratio ``||u_s||_inf / ||g||_inf`` affinely in ``log(1/s)``; (c) lists
    ``||phi_k||_inf * sqrt(area)`` for the small eigenfunctions.
    """
    if len(cfg.s_grid) < 3:
        raise DataError(f"need at least 3 grid points, got {len(cfg.s_grid)}")
    rows = []
    for s in cfg.s_grid:
        mesh = build_fiber_mesh(cfg, s)
        K, M = assemble(mesh)
        m = _mass_vector(M)
        area = float(m.sum())
        base = _base_nodes(mesh)
        minima = [float(green_column(K, M, x).values.min()) for x in base]

        b = _bump(mesh, cfg)
        g = b - (m @ b) / area
        u = solve_poisson(K, M, g)
        sup_ratio = float(np.abs(u).max() / np.abs(g).max())

        g0 = _componentwise_zero_mean(mesh, cfg, m)
        u0 = solve_poisson(K, M, g0)
        refined = float(np.abs(u0).max() / np.abs(g0).max() / math.sqrt(math.log(1.0 / s)))

        n_small = cfg.n_components - 1
        eig_sup = []
        if n_small:
            spec = lobpcg_smallest(K, M, cfg.n_components, cfg.tolerances.eig_residual, cfg.seed)
            eig_sup = [float(np.abs(spec.eigenvectors[:, k]).max() * math.sqrt(area))
                       for k in range(1, n_small + 1)]
        log.info("s=%g: min G=%.4f sup ratio=%.4f", s, min(minima), sup_ratio)
        rows.append({
            "s": s,
            "log_inv_s": math.log(1.0 / s),
            "base_nodes": base,
            "green_minima": minima,
            "green_min": min(minima),
            "poisson_sup_ratio": sup_ratio,
            "refined_ratio": refined,
            "eigenfunction_sup": eig_sup,
        })

    x = [r["log_inv_s"] for r in rows]
    green_fit = fit_affine(x, [r["green_min"] for r in rows], model="min G_s affine in log(1/s)")
    poisson_fit = fit_affine(x, [r["poisson_sup_ratio"] for r in rows],
                             model="sup|u_s|/sup|g| affine in log(1/s)")
    fitted = np.array(x) * poisson_fit.slope + poisson_fit.intercept
    ratios = np.array([r["poisson_sup_ratio"] for r in rows])
    excess = float(np.max((ratios - fitted) / np.abs(fitted)))
    refined = [r["refined_ratio"] for r in rows]
    sup_all = [v for r in rows for v in r["eigenfunction_sup"]]
    return {
        "model_note": MODEL_NOTE,
        "rows": rows,
        "green_min_fit": green_fit.to_dict(),
        "poisson_fit": {**poisson_fit.to_dict(), "max_relative_excess": excess},
        "eigenfunction_sup_max": max(sup_all) if sup_all else None,
        "refined_diagnostic": {
            "sequence": refined,
            "monotone_decrease": bool(np.all(np.diff(refined) < 0)),
        },
    }


def write_green_minima_csv(report: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "base_node", "green_min"])
        for r in report["rows"]:
            for node, val in zip(r["base_nodes"], r["green_minima"]):
                w.writerow([f"{r['s']:.17g}", node, f"{val:.17g}"])
