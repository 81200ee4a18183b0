"""Command-line driver.

Exit codes: 0 success, 2 validation error, 3 numerical non-convergence.
Set ``NECKSPEC_LOG`` (e.g. ``INFO``, ``DEBUG``) for progress logging.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    compare_graph_limit,
    fit_log_rate,
    graph_laplacian_spectrum,
    plot_sweep_svg,
    read_sweep_csv,
    small_eigenvalue_columns,
    sweep,
    write_sweep_csv,
)
from .assembly import assemble, export_matrix_market
from .config import parse_config
from .eigsolve import lobpcg_smallest
from .errors import ConvergenceError, NeckspecError, ValidationError
from .localmodel import (
    closed_form_endpoint_p1,
    displacement_exponent,
    flow_retraction,
    lojasiewicz_ratio_min,
    log_weight_scale_check,
    neck_measure_identity_check,
    write_flow_csv,
)
from .mesh import build_fiber_mesh, closed_form_area, euler_characteristic, total_area, write_off
from .potential import log_growth_report, write_green_minima_csv
from .testfn import build_component_testfn, eps_for_s, minmax_upper_bound, write_testfn_csv

log = logging.getLogger("neckspec")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit_json(doc, out):
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


class _Run:
    def __init__(self, args):
        self.args = args
        self.outputs: list[str] = []
        self.config_hash = None
        self.seed = getattr(args, "seed", None)
        self.t0 = time.perf_counter()

    def load_config(self):
        raw = Path(self.args.config).read_bytes()
        self.config_hash = hashlib.sha256(raw).hexdigest()
        cfg = parse_config(raw, lenient=self.args.lenient)
        if self.args.seed is not None:
            cfg = cfg.with_updates(seed=self.args.seed)
        self.seed = cfg.seed
        return cfg

    def output(self, path):
        if path:
            self.outputs.append(str(path))
        return path

    def manifest(self):
        return {
            "command": self.args.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": __version__,
            "wall_time": time.perf_counter() - self.t0,
            "outputs": self.outputs,
        }


def cmd_mesh(run: _Run):
    a = run.args
    cfg = run.load_config()
    mesh = build_fiber_mesh(cfg, a.s, a.h)
    if a.off:
        write_off(mesh, run.output(a.off))
    report = {
        "s": a.s,
        "h": mesh.h,
        "n_nodes": mesh.n_nodes,
        "n_triangles": mesh.n_triangles,
        "euler_characteristic": euler_characteristic(mesh),
        "expected_euler_characteristic": mesh.expected_euler,
        "total_area": total_area(mesh),
        "closed_form_area": closed_form_area(cfg, a.s),
    }
    _emit_json(report, run.output(a.out))


def cmd_spectrum(run: _Run):
    a = run.args
    cfg = run.load_config()
    mesh = build_fiber_mesh(cfg, a.s)
    K, M = assemble(mesh)
    spec = lobpcg_smallest(K, M, a.k or cfg.eig_count, cfg.tolerances.eig_residual, cfg.seed)
    report = {
        "s": a.s,
        "n_nodes": mesh.n_nodes,
        "eigenvalues": spec.eigenvalues,
        "residuals": spec.residuals,
    }
    if cfg.n_components >= 2:
        eps = eps_for_s(a.s)
        tfs = [build_component_testfn(mesh, v.id, eps, a.shape) for v in cfg.vertices]
        mm = minmax_upper_bound(K, M, tfs)
        report.update({"eps": eps, "minmax_bounds": mm.bounds, "k4_check": mm.k4_check})
        if a.testfn_dir:
            os.makedirs(a.testfn_dir, exist_ok=True)
            for tf in tfs:
                write_testfn_csv(tf, run.output(os.path.join(a.testfn_dir, f"testfn_{tf.component}.csv")))
    if a.mtx_prefix:
        export_matrix_market(K, run.output(f"{a.mtx_prefix}K.mtx"), comment="stiffness")
        export_matrix_market(M, run.output(f"{a.mtx_prefix}M.mtx"), comment="lumped mass")
    _emit_json(report, run.output(a.out))


def cmd_sweep(run: _Run):
    a = run.args
    cfg = run.load_config()
    table = sweep(cfg, jobs=a.jobs or os.cpu_count() or 1, shape=a.shape)
    if a.out:
        write_sweep_csv(table, run.output(a.out))
    else:
        import tempfile

        with tempfile.NamedTemporaryFile("r", suffix=".csv") as tmp:
            write_sweep_csv(table, tmp.name)
            sys.stdout.write(Path(tmp.name).read_text())
    svg = a.svg or (str(Path(a.out).with_suffix(".svg")) if a.out else None)
    if svg and len(table):
        plot_sweep_svg(table, run.output(svg))
    if a.report:
        doc = {"columns": small_eigenvalue_columns(table) if len(table) >= 3 else []}
        if cfg.n_components >= 2 and len(table):
            doc["graph_limit"] = compare_graph_limit(table, graph_laplacian_spectrum(cfg)[1])
        _emit_json(doc, run.output(a.report))


def cmd_fit(run: _Run):
    a = run.args
    table = read_sweep_csv(getattr(a, "in"))
    _emit_json({"k": a.k, **fit_log_rate(table, a.k).to_dict()}, run.output(a.out))


def cmd_graph(run: _Run):
    a = run.args
    cfg = run.load_config()
    glap, eigs = graph_laplacian_spectrum(cfg)
    doc = {
        "vertices": list(glap.vertices),
        "masses": glap.masses,
        "conductances": glap.conductances,
        "eigenvalues": eigs,
    }
    if a.sweep:
        doc["graph_limit"] = compare_graph_limit(read_sweep_csv(a.sweep), eigs)
    _emit_json(doc, run.output(a.out))


def cmd_potential(run: _Run):
    a = run.args
    cfg = run.load_config()
    report = log_growth_report(cfg)
    if a.csv:
        write_green_minima_csv(report, run.output(a.csv))
    _emit_json(report, run.output(a.out))


def cmd_flow(run: _Run):
    a = run.args
    trace = flow_retraction(a.p, a.s, a.theta, tol=a.tol)
    if a.csv:
        write_flow_csv(trace, run.output(a.csv))
    doc = {
        "p": a.p,
        "s": a.s,
        "theta": a.theta,
        "steps": trace.n_steps,
        "endpoint_re": trace.endpoint.real,
        "endpoint_im": trace.endpoint.imag,
        "displacement": trace.displacement,
        "max_pi_defect": float(trace.defect.max()),
    }
    _emit_json(doc, run.output(a.out))


def run_checks(seed: int = 0, ode_tol: float = 1e-10, quad_tol: float = 1e-8) -> dict:
    """The local-chart suite: flow, Lojasiewicz sampling and log-measure checks."""
    s_grid = [1e-2, 1e-3, 1e-4, 1e-5]
    tr = flow_retraction(1, 1e-2, 0.0, tol=ode_tol)
    exact = closed_form_endpoint_p1(1e-2)
    slopes = {}
    defects = [float(tr.defect.max())]
    for p in (1, 2):
        slope, disp = displacement_exponent(p, s_grid, tol=ode_tol)
        slopes[p] = {"slope": slope, "displacements": disp}
        defects += [float(flow_retraction(p, s, tol=ode_tol).defect.max()) for s in s_grid]
    return {
        "flow": {
            "endpoint_error_p1": float(np.max(np.abs(tr.endpoint - exact))),
            "displacement_p1_s1e-2": tr.displacement,
            "exponent": slopes,
            "max_pi_defect": max(defects),
        },
        "lojasiewicz": {
            "p1_min": lojasiewicz_ratio_min(1, 100_000, seed),
            "p2_min": lojasiewicz_ratio_min(2, 100_000, seed),
        },
        "measure": {
            str(s): neck_measure_identity_check(s, quad_tol) for s in (1e-1, 1e-3)
        },
        "log_weight": {
            "p1_worst": log_weight_scale_check(1, 1e-6, 5),
            "p2_worst": log_weight_scale_check(2, 1e-6, 5),
        },
    }


def cmd_checks(run: _Run):
    a = run.args
    run.seed = a.seed or 0
    _emit_json(run_checks(run.seed), run.output(a.out))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neckspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"neckspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON configuration file")
            p.add_argument("--lenient", action="store_true", help="ignore unknown config keys")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--manifest", help="write the run manifest JSON here")
        return p

    p = common(sub.add_parser("mesh", help="build a fiber mesh and report chi / area"))
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--off", help="write the mesh in OFF format")
    p.set_defaults(func=cmd_mesh)

    p = common(sub.add_parser("spectrum", help="eigenvalues at a single s"))
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--shape", choices=("ramp", "quintic"), default="ramp")
    p.add_argument("--mtx-prefix", help="export K and M as <prefix>K.mtx, <prefix>M.mtx")
    p.add_argument("--testfn-dir", help="export test functions as CSV into this directory")
    p.set_defaults(func=cmd_spectrum)

    p = common(sub.add_parser("sweep", help="sweep the s grid, write CSV"))
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: cores)")
    p.add_argument("--shape", choices=("ramp", "quintic"), default="ramp")
    p.add_argument("--svg", help="plot of 1/lambda_k against log(1/s) (default: next to --out)")
    p.add_argument("--report", help="write rate fits and graph-limit comparison JSON")
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("fit", help="fit 1/lambda_k against log(1/s) from a sweep CSV"),
               config=False)
    p.add_argument("--in", required=True, help="sweep CSV")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("graph", help="weighted dual-graph Laplacian spectrum"))
    p.add_argument("--sweep", help="compare against a sweep CSV")
    p.set_defaults(func=cmd_graph)

    p = common(sub.add_parser("potential", help="Green / Poisson log-growth report"))
    p.add_argument("--csv", help="per-s sampled Green minima")
    p.set_defaults(func=cmd_potential)

    p = common(sub.add_parser("flow", help="integrate the retraction flow"), config=False)
    p.add_argument("--p", type=int, choices=(1, 2), default=1)
    p.add_argument("--s", type=float, default=1e-2)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--csv", help="write the trace as CSV")
    p.set_defaults(func=cmd_flow)

    p = common(sub.add_parser("checks", help="local-chart suite"), config=False)
    p.set_defaults(func=cmd_checks)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = os.environ.get("NECKSPEC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    r = _Run(args)
    try:
        args.func(r)
    except ValidationError as exc:
        print(f"neckspec: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"neckspec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NeckspecError as exc:
        print(f"neckspec: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"neckspec: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    manifest = r.manifest()
    if args.manifest:
        Path(args.manifest).write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps({"manifest": manifest}, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
