"""Triangulated model fibers.

Every vertex of the dual graph becomes a flat square torus with one square
hole per incident neck end; every edge becomes a cylinder in log
coordinates ``(u, theta)``, ``u`` in ``[log s, 0]``, carrying the conformal
weight ``rho(u) = exp(2u) + s**2 exp(-2u)`` of the induced metric on
``{xy = s}``. Holes have side pi/2, so their perimeter equals the neck
circumference 2*pi and boundary nodes can be identified one to one.

Triangles keep their own chart coordinates (``tri_coords``); glued and
periodic nodes are shared by index only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigGraph
from .errors import DomainError, MeshError, TopologyError

HOLE_SIDE = math.pi / 2
MIN_HOLE_SEGMENTS = 8
COMPONENT = "component"
NECK = "neck"


def neck_weight(u, s):
    """Induced-metric density ``exp(2u) + s^2 exp(-2u)`` on the neck chart."""
    u = np.asarray(u, dtype=float)
    return np.exp(2.0 * u) + s * s * np.exp(-2.0 * u)


@dataclass(frozen=True)
class Region:
    kind: str  # COMPONENT or NECK
    id: str
    # necks: vertex glued at u = 0 and vertex glued at u = log s
    ends: tuple[str, str] | None = None


@dataclass(frozen=True)
class NeckChart:
    s: float
    k_theta: int
    n_u: int

    def __post_init__(self):
        if self.k_theta < 8:
            raise MeshError(f"k_theta must be >= 8, got {self.k_theta}")

    @property
    def u_range(self) -> tuple[float, float]:
        return (math.log(self.s), 0.0)

    def weight(self, u):
        return neck_weight(u, self.s)


@dataclass
class FiberMesh:
    """Glued triangulation of a model fiber.

    Attributes
    ----------
    nodes : (n, 2) array
        Coordinates of each node in the chart of its owning region.
    node_region : (n,) int array
        Index into ``regions``; seam nodes belong to the component.
    node_u : (n,) array
        Neck log coordinate ``u`` for neck-owned nodes, NaN elsewhere.
    triangles : (f, 3) int array
    tri_coords : (f, 3, 2) array
        Corner coordinates in the triangle's own chart, counter-clockwise.
    tri_region : (f,) int array
    tri_weight : (f,) array
        Conformal weight sampled at the chart centroid.
    """

    nodes: np.ndarray
    node_region: np.ndarray
    node_u: np.ndarray
    triangles: np.ndarray
    tri_coords: np.ndarray
    tri_region: np.ndarray
    tri_weight: np.ndarray
    regions: list[Region]
    s: float | None = None
    h: float | None = None
    closed: bool = True
    expected_euler: int | None = None
    # hole boundary node indices per (vertex id, hole slot)
    hole_nodes: dict = field(default_factory=dict)
    # (n_u + 1, k_theta) node index grid per neck region index
    neck_grids: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def chart_areas(self) -> np.ndarray:
        """Signed flat areas of the triangles in their charts."""
        p = self.tri_coords
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_index(self, kind: str, rid: str) -> int:
        for i, r in enumerate(self.regions):
            if r.kind == kind and r.id == rid:
                return i
        raise KeyError((kind, rid))


class _Builder:
    def __init__(self):
        self.coords: list[tuple[float, float]] = []
        self.node_region: list[int] = []
        self.node_u: list[float] = []
        self.tris: list[tuple[int, int, int]] = []
        self.tri_coords: list[np.ndarray] = []
        self.tri_region: list[int] = []
        self.tri_weight: list[float] = []
        self.regions: list[Region] = []

    def add_node(self, xy, region, u=math.nan):
        self.coords.append(xy)
        self.node_region.append(region)
        self.node_u.append(u)
        return len(self.coords) - 1

    def add_tri(self, idx, pts, region, weight):
        self.tris.append(idx)
        self.tri_coords.append(pts)
        self.tri_region.append(region)
        self.tri_weight.append(weight)

    def finish(self, **kw) -> FiberMesh:
        return FiberMesh(
            nodes=np.array(self.coords, dtype=float).reshape(-1, 2),
            node_region=np.array(self.node_region, dtype=np.int64),
            node_u=np.array(self.node_u, dtype=float),
            triangles=np.array(self.tris, dtype=np.int64).reshape(-1, 3),
            tri_coords=np.array(self.tri_coords, dtype=float).reshape(-1, 3, 2),
            tri_region=np.array(self.tri_region, dtype=np.int64),
            tri_weight=np.array(self.tri_weight, dtype=float),
            regions=self.regions,
            **kw,
        )


def hole_segments(h: float) -> int:
    """Segments per hole side at target size ``h``; raises if below 8."""
    n = math.ceil(HOLE_SIDE / h - 1e-12)
    if n < MIN_HOLE_SEGMENTS:
        raise MeshError(
            f"h = {h} resolves a hole side with {n} segments, need >= {MIN_HOLE_SEGMENTS}"
        )
    return n


def _subdivide(a, b, h, n=None):
    if n is None:
        n = max(1, math.ceil((b - a) / h - 1e-12))
    return [a + (b - a) * i / n for i in range(n)]


def _torus_axis(side, n_holes, h, n_hole):
    """Grid lines along one axis and the index ranges of the hole sides."""
    if n_holes == 0:
        xs = _subdivide(0.0, side, h)
        return np.array(xs + [side]), []
    block = side / n_holes
    xs: list[float] = []
    spans = []
    for j in range(n_holes):
        b0 = j * block
        x0 = b0 + 0.5 * (block - HOLE_SIDE)
        x1 = x0 + HOLE_SIDE
        xs += _subdivide(b0, x0, h)
        i0 = len(xs)
        xs += _subdivide(x0, x1, h, n_hole)
        spans.append((i0, len(xs)))
        xs += _subdivide(x1, b0 + block, h)
    return np.array(xs + [side]), spans


def _add_torus(b: _Builder, region, side, n_holes, h, n_hole=None):
    """Mesh a flat torus with ``n_holes`` square holes on its diagonal.

    Returns the hole boundary node lists, each counter-clockwise starting at
    the lower-left corner.
    """
    if n_hole is None:
        n_hole = hole_segments(h) if n_holes else 0
    xs, spans = _torus_axis(side, n_holes, h, n_hole)
    nx = len(xs) - 1

    def in_hole(i, j):
        return any(i0 <= i < i1 and i0 <= j < i1 for i0, i1 in spans)

    used = np.zeros((nx, nx), dtype=bool)
    cells = [(i, j) for j in range(nx) for i in range(nx) if not in_hole(i, j)]
    for i, j in cells:
        for di in (0, 1):
            for dj in (0, 1):
                used[(i + di) % nx, (j + dj) % nx] = True
    index = -np.ones((nx, nx), dtype=np.int64)
    for j in range(nx):
        for i in range(nx):
            if used[i, j]:
                index[i, j] = b.add_node((xs[i], xs[j]), region)

    for i, j in cells:
        p00 = index[i, j]
        p10 = index[(i + 1) % nx, j]
        p11 = index[(i + 1) % nx, (j + 1) % nx]
        p01 = index[i, (j + 1) % nx]
        c00 = (xs[i], xs[j])
        c10 = (xs[i + 1], xs[j])
        c11 = (xs[i + 1], xs[j + 1])
        c01 = (xs[i], xs[j + 1])
        b.add_tri((p00, p10, p11), np.array([c00, c10, c11]), region, 1.0)
        b.add_tri((p00, p11, p01), np.array([c00, c11, c01]), region, 1.0)

    holes = []
    for i0, i1 in spans:
        ring = [index[i, i0] for i in range(i0, i1)]
        ring += [index[i1, j] for j in range(i0, i1)]
        ring += [index[i, i1] for i in range(i1, i0, -1)]
        ring += [index[i0, j] for j in range(i1, i0, -1)]
        holes.append(np.array(ring, dtype=np.int64))
    return holes


def _add_neck(b: _Builder, region, s, h, k_theta, end0=None, end_log_s=None):
    """Mesh a neck cylinder; ``end0``/``end_log_s`` are rings to glue to.

    Returns the ``(n_u + 1, k_theta)`` node index grid; row 0 is ``u = log s``.
    """
    log_s = math.log(s)
    length = -log_s
    n_u = max(1, math.ceil(length / h - 1e-12))
    us = np.array([log_s + length * k / n_u for k in range(n_u)] + [0.0])
    thetas = 2.0 * math.pi * np.arange(k_theta + 1) / k_theta
    grid = -np.ones((n_u + 1, k_theta), dtype=np.int64)
    for k in range(n_u + 1):
        if k == 0 and end_log_s is not None:
            grid[k] = end_log_s
            continue
        if k == n_u and end0 is not None:
            grid[k] = end0
            continue
        for j in range(k_theta):
            grid[k, j] = b.add_node((us[k], thetas[j]), region, us[k])
    for k in range(n_u):
        uc = (2.0 * us[k] + us[k + 1]) / 3.0
        uc2 = (us[k] + 2.0 * us[k + 1]) / 3.0
        w1 = float(neck_weight(uc2, s))
        w2 = float(neck_weight(uc, s))
        for j in range(k_theta):
            jn = (j + 1) % k_theta
            p00, p10 = grid[k, j], grid[k + 1, j]
            p11, p01 = grid[k + 1, jn], grid[k, jn]
            c00 = (us[k], thetas[j])
            c10 = (us[k + 1], thetas[j])
            c11 = (us[k + 1], thetas[j + 1])
            c01 = (us[k], thetas[j + 1])
            b.add_tri((p00, p10, p11), np.array([c00, c10, c11]), region, w1)
            b.add_tri((p00, p11, p01), np.array([c00, c11, c01]), region, w2)
    return grid


def expected_euler_characteristic(cfg: ConfigGraph) -> int:
    """Closed-surface value: each torus with k holes has chi = -k, necks 0."""
    return -sum(cfg.degree(v.id) for v in cfg.vertices)


def closed_form_area(cfg: ConfigGraph, s: float) -> float:
    """Exact area of the model fiber with the induced neck metric."""
    tori = sum(v.mass - HOLE_SIDE ** 2 * cfg.degree(v.id) for v in cfg.vertices)
    return tori + len(cfg.edges) * neck_area(s)


def neck_area(s: float) -> float:
    """``2 pi * integral_{log s}^0 rho(u) du = 2 pi (1 - s^2)``."""
    return 2.0 * math.pi * (1.0 - s * s)


def build_fiber_mesh(cfg: ConfigGraph, s: float, h: float | None = None) -> FiberMesh:
    """Build the glued fiber ``X_s`` for the configuration.

    Parameters
    ----------
    cfg : ConfigGraph
    s : float
        Degeneration parameter in (0, 1).
    h : float, optional
        Target element size, at most 0.5; defaults to ``cfg.mesh_h``.
    """
    h = cfg.mesh_h if h is None else h
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if not 0.0 < h <= 0.5:
        raise MeshError(f"h must lie in (0, 0.5], got {h}")
    n_hole = hole_segments(h) if cfg.edges else None

    b = _Builder()
    rings: dict[str, list[np.ndarray]] = {}
    for v in cfg.vertices:
        region = len(b.regions)
        b.regions.append(Region(COMPONENT, v.id))
        rings[v.id] = _add_torus(b, region, v.side, cfg.degree(v.id), h, n_hole)

    hole_nodes = {}
    slot = {v.id: 0 for v in cfg.vertices}
    neck_grids = {}
    for e in cfg.edges:
        v, w = e.endpoints
        ring_v = rings[v][slot[v]]
        hole_nodes[(v, slot[v])] = ring_v
        slot[v] += 1
        ring_w = rings[w][slot[w]]
        hole_nodes[(w, slot[w])] = ring_w
        slot[w] += 1
        region = len(b.regions)
        b.regions.append(Region(NECK, e.id, (v, w)))
        # the u = log s end is traversed clockwise to keep a consistent orientation
        ring_w_rev = np.roll(ring_w[::-1], 1)
        neck_grids[region] = _add_neck(
            b, region, s, h, 4 * n_hole, end0=ring_v, end_log_s=ring_w_rev
        )

    mesh = b.finish(
        s=s,
        h=h,
        closed=True,
        expected_euler=expected_euler_characteristic(cfg),
        hole_nodes=hole_nodes,
        neck_grids=neck_grids,
    )
    check_mesh(mesh)
    return mesh


def flat_torus_mesh(side: float, h: float) -> FiberMesh:
    """Diagnostic: a flat torus without holes."""
    b = _Builder()
    b.regions.append(Region(COMPONENT, "torus"))
    _add_torus(b, 0, side, 0, h)
    mesh = b.finish(h=h, closed=True, expected_euler=0)
    check_mesh(mesh)
    return mesh


def single_neck_mesh(s: float, h: float, k_theta: int | None = None) -> FiberMesh:
    """Diagnostic: one neck cylinder with open boundary circles."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if k_theta is None:
        k_theta = 4 * hole_segments(h)
    NeckChart(s, k_theta, 1)
    b = _Builder()
    b.regions.append(Region(NECK, "neck", None))
    grid = _add_neck(b, 0, s, h, k_theta)
    mesh = b.finish(s=s, h=h, closed=False, expected_euler=0, neck_grids={0: grid})
    check_mesh(mesh)
    return mesh


def _edge_counts(triangles):
    directed = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    und = np.sort(directed, axis=1)
    keys, counts = np.unique(und, axis=0, return_counts=True)
    return directed, keys, counts


def euler_characteristic(mesh: FiberMesh) -> int:
    """``V - E + F`` of the glued complex.

    Raises
    ------
    TopologyError
        If an edge bounds more than two triangles (or fewer than two on a
        closed mesh).
    """
    _, keys, counts = _edge_counts(mesh.triangles)
    bad = counts > 2 if not mesh.closed else counts != 2
    if np.any(bad):
        e = keys[np.argmax(bad)]
        raise TopologyError(
            f"non-manifold edge ({e[0]}, {e[1]}) bounds {counts[np.argmax(bad)]} triangles"
        )
    used = np.unique(mesh.triangles)
    return len(used) - len(keys) + mesh.n_triangles


def check_mesh(mesh: FiberMesh) -> None:
    """Validate orientation, manifoldness, weights and the Euler count."""
    areas = mesh.chart_areas()
    if np.any(areas <= 0):
        t = int(np.argmax(areas <= 0))
        raise TopologyError(f"triangle {t} has non-positive chart area {areas[t]}")
    if np.any(~(mesh.tri_weight > 0)):
        raise TopologyError("non-positive conformal weight")
    chi = euler_characteristic(mesh)
    directed, _, _ = _edge_counts(mesh.triangles)
    if len(np.unique(directed, axis=0)) != len(directed):
        raise TopologyError("inconsistent orientation across a glued edge")
    if mesh.expected_euler is not None and chi != mesh.expected_euler:
        raise TopologyError(f"Euler characteristic {chi} != expected {mesh.expected_euler}")


def total_area(mesh: FiberMesh) -> float:
    """Weighted area ``sum(area * rho)`` over all triangles."""
    return float(np.sum(mesh.chart_areas() * mesh.tri_weight))


def write_off(mesh: FiberMesh, path) -> None:
    """Dump chart coordinates and triangles in OFF format.

    Nodes carry their owning chart's coordinates (z = region index), so
    the picture is a chart atlas rather than an embedding. Per-triangle
    weights follow as ``# weight <t> <rho>`` comment lines.
    """
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_nodes} {mesh.n_triangles} 0\n")
        for (x, y), r in zip(mesh.nodes, mesh.node_region):
            fh.write(f"{x:.17g} {y:.17g} {int(r)}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        for i, w in enumerate(mesh.tri_weight):
            fh.write(f"# weight {i} {w:.17g}\n")
