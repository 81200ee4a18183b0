"""Parameter sweeps, rate fits and the weighted dual-graph limit."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble
from .config import ConfigGraph
from .eigsolve import dense_jacobi_eig, lobpcg_smallest
from .errors import DataError, DomainError, NeckspecError
from .mesh import build_fiber_mesh
from .testfn import build_component_testfn, eps_for_s, minmax_upper_bound

log = logging.getLogger(__name__)

NECK_CONDUCTANCE = 2.0 * math.pi
R2_GATE = 0.95
MODEL_NOTE = (
    "Components are flat square tori and necks carry the induced metric of "
    "{xy = s}; fitted constants depend on this model, the 1/log(1/s) rate does not."
)


@dataclass(frozen=True)
class SweepRow:
    s: float
    eigenvalues: np.ndarray
    residuals: np.ndarray
    bounds: np.ndarray
    eps: float
    k4_check: float
    wall_time: float | None = None


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    n_components: int
    eig_count: int

    def __len__(self):
        return len(self.rows)

    @property
    def s(self) -> np.ndarray:
        return np.array([r.s for r in self.rows])

    def column(self, k: int) -> np.ndarray:
        return np.array([r.eigenvalues[k] for r in self.rows])


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit ``y = A log(1/s) + B``; ``model`` names ``y``.

    ``degenerate`` is set when the data have no spread, in which case
    ``r2`` is reported as 0.
    """

    slope: float
    intercept: float
    r2: float
    n: int
    degenerate: bool = False
    model: str = "affine in log(1/s)"

    def to_dict(self):
        return {"A": self.slope, "B": self.intercept, "r2": self.r2, "n": self.n,
                "degenerate": self.degenerate, "model": self.model}


@dataclass(frozen=True)
class GraphLap:
    """Weighted graph Laplacian ``(Lf)(v) = mu(v)^-1 sum_w c_vw (f(v) - f(w))``."""

    vertices: tuple[str, ...]
    masses: np.ndarray
    laplacian: np.ndarray  # unweighted, sum_e c_e (e_v - e_w)(e_v - e_w)^T
    conductances: dict = field(default_factory=dict)

    def apply(self, f):
        return (self.laplacian @ np.asarray(f, dtype=float)) / self.masses

    def symmetrized(self):
        r = 1.0 / np.sqrt(self.masses)
        return self.laplacian * r[:, None] * r[None, :]


def _solve_row(cfg: ConfigGraph, s: float, shape: str) -> SweepRow:
    t0 = time.perf_counter()
    try:
        mesh = build_fiber_mesh(cfg, s)
        K, M = assemble(mesh)
        spec = lobpcg_smallest(K, M, cfg.eig_count, cfg.tolerances.eig_residual, cfg.seed)
        eps = eps_for_s(s)
        if cfg.n_components >= 2:
            tfs = [build_component_testfn(mesh, v.id, eps, shape) for v in cfg.vertices]
            mm = minmax_upper_bound(K, M, tfs)
            bounds, k4 = mm.bounds, mm.k4_check
        else:
            bounds, k4 = np.zeros(0), math.nan
    except NeckspecError as exc:
        exc.args = (f"at s={s:g}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        exc.s = s
        raise
    wall = time.perf_counter() - t0
    log.info("s=%g: n=%d lambda1=%s iters=%d (%.2fs)", s, mesh.n_nodes,
             spec.eigenvalues[1] if len(spec) > 1 else None, spec.iterations, wall)
    return SweepRow(s, spec.eigenvalues, spec.residuals, bounds, eps, k4, wall)


def _solve_row_star(args):
    return _solve_row(*args)


def sweep(cfg: ConfigGraph, jobs: int = 1, shape: str = "ramp") -> SweepTable:
    """Eigenvalues and min-max bounds for every ``s`` in ``cfg.s_grid``.

    Rows are computed independently (in worker processes when ``jobs > 1``)
    and returned in the grid's decreasing-``s`` order.
    """
    tasks = [(cfg, s, shape) for s in cfg.s_grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_solve_row_star, tasks))
    else:
        rows = [_solve_row(*t) for t in tasks]
    return SweepTable(tuple(rows), cfg.n_components, cfg.eig_count)


def fit_affine(x, y, model: str = "affine in log(1/s)") -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise DataError(f"need at least 3 points for a fit, got {len(x)}")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - A @ np.array([slope, intercept])) ** 2))
    scale = max(float(np.abs(y).max()), 1e-300)
    if ss_tot <= (1e-12 * scale) ** 2 * len(y):
        return FitResult(float(slope), float(intercept), 0.0, len(x), degenerate=True, model=model)
    r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return FitResult(float(slope), float(intercept), r2, len(x), model=model)


def fit_log_rate(table: SweepTable, k: int) -> FitResult:
    """Fit ``1/lambda_k`` affinely against ``log(1/s)``."""
    if len(table) < 3:
        raise DataError(f"need at least 3 sweep rows, got {len(table)}")
    lam = table.column(k)
    if np.any(~(lam > 0)):
        raise DataError(f"lambda_{k} is not positive in every row")
    return fit_affine(np.log(1.0 / table.s), 1.0 / lam, model="1/lambda affine in log(1/s)")


def small_eigenvalue_columns(table: SweepTable, r2_min: float = R2_GATE) -> list[dict]:
    """Rate fits for columns 1..N; a column is 'small' if A > 0 and r2 >= r2_min."""
    out = []
    for k in range(1, min(table.n_components + 1, table.eig_count)):
        fit = fit_log_rate(table, k)
        out.append({"k": k, **fit.to_dict(),
                    "small": bool(fit.slope > 0 and fit.r2 >= r2_min and not fit.degenerate)})
    return out


def build_graph_laplacian(cfg: ConfigGraph, conductance: float = NECK_CONDUCTANCE,
                          mass_scale: float = 1.0) -> GraphLap:
    ids = tuple(cfg.vertex_ids)
    pos = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    L = np.zeros((n, n))
    cond = {}
    for e in cfg.edges:
        a, b = pos[e.endpoints[0]], pos[e.endpoints[1]]
        cond[e.id] = conductance
        if a == b:
            continue
        L[a, a] += conductance
        L[b, b] += conductance
        L[a, b] -= conductance
        L[b, a] -= conductance
    masses = mass_scale * np.array([cfg.vertex(v).mass for v in ids])
    return GraphLap(ids, masses, L, cond)


def graph_laplacian_spectrum(cfg: ConfigGraph, conductance: float = NECK_CONDUCTANCE,
                             mass_scale: float = 1.0):
    """Weighted dual-graph Laplacian and its eigenvalues (ascending, first is 0)."""
    glap = build_graph_laplacian(cfg, conductance, mass_scale)
    w, _ = dense_jacobi_eig(glap.symmetrized())
    return glap, w


def compare_graph_limit(table: SweepTable, graph_eigs) -> dict:
    """Rescaled small eigenvalues ``log(1/s) lambda_k(s)`` next to the graph spectrum.

    Informational for N >= 3; the gate applied elsewhere is the two-sided
    boundedness of the rescaled sequence.
    """
    if len(table) == 0:
        raise DomainError("sweep table is empty")
    report = {"model_note": MODEL_NOTE, "s": table.s.tolist(), "comparisons": []}
    n_small = table.n_components - 1
    if n_small == 0:
        report["message"] = "no small eigenvalues"
        return report
    L = np.log(1.0 / table.s)
    for k in range(1, n_small + 1):
        target = float(graph_eigs[k])
        rescaled = L * table.column(k)
        gaps = np.abs(rescaled - target) / target
        report["comparisons"].append({
            "k": k,
            "graph_eigenvalue": target,
            "rescaled": rescaled.tolist(),
            "relative_gap": gaps.tolist(),
            "gap_at_smallest_s": float(gaps[-1]),
            "monotone_approach": bool(len(gaps) < 2 or np.all(np.diff(gaps) < 0)),
            "within_decade_band": bool(np.all((rescaled >= 0.1 * target) & (rescaled <= 10 * target))),
        })
    return report


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_sweep_csv(table: SweepTable, path) -> None:
    """Write the table with 17 significant digits; wall times are omitted."""
    k = table.eig_count
    nb = max(table.n_components - 1, 0)
    header = (["s"] + [f"lambda{j}" for j in range(k)] + [f"res{j}" for j in range(k)]
              + [f"bound{j}" for j in range(1, nb + 1)] + ["eps", "k4_check"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in table.rows:
            bounds = list(r.bounds) if len(r.bounds) else [math.nan] * nb
            w.writerow([_fmt(r.s)] + [_fmt(x) for x in r.eigenvalues]
                       + [_fmt(x) for x in r.residuals] + [_fmt(x) for x in bounds]
                       + [_fmt(r.eps), _fmt(r.k4_check)])


def read_sweep_csv(path) -> SweepTable:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "s" not in fields:
            raise DataError(f"{path}: missing 's' column")
        k = sum(1 for f in fields if f.startswith("lambda"))
        nb = sum(1 for f in fields if f.startswith("bound"))
        rows = []
        for rec in reader:
            rows.append(SweepRow(
                s=float(rec["s"]),
                eigenvalues=np.array([float(rec[f"lambda{j}"]) for j in range(k)]),
                residuals=np.array([float(rec.get(f"res{j}", "nan")) for j in range(k)]),
                bounds=np.array([float(rec[f"bound{j}"]) for j in range(1, nb + 1)]),
                eps=float(rec.get("eps", "nan")),
                k4_check=float(rec.get("k4_check", "nan")),
            ))
    return SweepTable(tuple(rows), nb + 1, k)


def plot_sweep_svg(table: SweepTable, path, columns=None) -> None:
    """Line plot of ``1/lambda_k`` against ``log(1/s)``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if columns is None:
        columns = range(1, min(table.n_components + 1, table.eig_count))
    x = np.log(1.0 / table.s)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k in columns:
        ax.plot(x, 1.0 / table.column(k), "o-", label=f"k={k}")
    ax.set_xlabel("log(1/s)")
    ax.set_ylabel("1 / lambda_k")
    ax.legend()
    fig.tight_layout()
    plt.rcParams["svg.hashsalt"] = "neckspec"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
