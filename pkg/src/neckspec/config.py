"""Degeneration description: dual graph, geometry and solver settings.

A configuration is a JSON object::

    {
      "vertices": [{"id": "a", "side": 4.0}, {"id": "b", "side": 4.0}],
      "edges": [{"id": "e", "endpoints": ["a", "b"]}],
      "s_grid": [1e-2, 1e-3],
      "mesh_h": 0.2,
      "eig_count": 5,
      "seed": 0,
      "tolerances": {"eig_residual": 1e-7, "ode_tol": 1e-10, "quad_tol": 1e-8}
    }

Each vertex is a flat square torus of the given side (mass ``side**2``), each
edge a plumbing neck. Only ``vertices`` and ``s_grid`` are required.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError, ConfigParseError

DEFAULT_MESH_H = 0.2
DEFAULT_TOLERANCES = {"eig_residual": 1e-7, "ode_tol": 1e-10, "quad_tol": 1e-8}
MIN_SIDE_PER_NECK = 4.0

_TOP_KEYS = {"name", "vertices", "edges", "s_grid", "mesh_h", "eig_count", "seed", "tolerances"}
_VERTEX_KEYS = {"id", "side"}
_EDGE_KEYS = {"id", "endpoints"}


@dataclass(frozen=True)
class ToleranceSet:
    eig_residual: float = DEFAULT_TOLERANCES["eig_residual"]
    ode_tol: float = DEFAULT_TOLERANCES["ode_tol"]
    quad_tol: float = DEFAULT_TOLERANCES["quad_tol"]

    def __post_init__(self):
        for name in ("eig_residual", "ode_tol", "quad_tol"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 < value < 1.0):
                raise ConfigError(f"tolerances.{name}", f"must lie in (0, 1), got {value!r}")


@dataclass(frozen=True)
class Vertex:
    id: str
    side: float

    @property
    def mass(self) -> float:
        return self.side * self.side


@dataclass(frozen=True)
class Edge:
    id: str
    endpoints: tuple[str, str]


@dataclass(frozen=True)
class ConfigGraph:
    """Validated degeneration description.

    Instances are immutable; construct them through :func:`parse_config` or
    :meth:`ConfigGraph.build`, both of which run the full validation.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    s_grid: tuple[float, ...]
    mesh_h: float = DEFAULT_MESH_H
    eig_count: int = 0
    seed: int = 0
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)
    name: str = ""

    @classmethod
    def build(cls, vertices, edges=(), s_grid=(), mesh_h=DEFAULT_MESH_H, eig_count=None,
              seed=0, tolerances=None, name=""):
        """Convenience constructor from plain Python values."""
        doc = {
            "name": name,
            "vertices": [{"id": v, "side": a} for v, a in vertices],
            "edges": [{"id": e, "endpoints": list(ends)} for e, ends in edges],
            "s_grid": list(s_grid),
            "mesh_h": mesh_h,
            "seed": seed,
        }
        if eig_count is not None:
            doc["eig_count"] = eig_count
        if tolerances is not None:
            doc["tolerances"] = dict(tolerances)
        return from_dict(doc)

    @property
    def n_components(self) -> int:
        return len(self.vertices)

    @property
    def vertex_ids(self) -> list[str]:
        return [v.id for v in self.vertices]

    def vertex(self, vid: str) -> Vertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def masses(self) -> dict[str, float]:
        return {v.id: v.mass for v in self.vertices}

    def degree(self, vid: str) -> int:
        # a self-plumbing contributes two holes
        return sum((e.endpoints[0] == vid) + (e.endpoints[1] == vid) for e in self.edges)

    def incident_edges(self, vid: str) -> list[Edge]:
        return [e for e in self.edges if vid in e.endpoints]

    def with_updates(self, **changes) -> "ConfigGraph":
        doc = to_dict(self)
        doc.update(changes)
        return from_dict(doc)


def _connected_components(ids, edges):
    parent = {v: v for v in ids}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for v in ids:
        groups.setdefault(find(v), []).append(v)
    return list(groups.values())


def _check_keys(obj, allowed, where, lenient):
    if not isinstance(obj, dict):
        raise ConfigError(where, f"expected an object, got {type(obj).__name__}")
    if lenient:
        return
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where else unknown[0], "unknown key")


def _positive_real(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(where, f"expected a finite number, got {value!r}")
    if value <= 0:
        raise ConfigError(where, f"must be positive, got {value!r}")
    return float(value)


def from_dict(doc: dict[str, Any], lenient: bool = False) -> ConfigGraph:
    """Validate a decoded JSON document and fill defaults."""
    _check_keys(doc, _TOP_KEYS, "", lenient)
    if "vertices" not in doc:
        raise ConfigError("vertices", "missing required key")
    raw_vertices = doc["vertices"]
    if not isinstance(raw_vertices, list) or not raw_vertices:
        raise ConfigError("vertices", "expected a non-empty list")

    vertices = []
    seen = set()
    for i, rv in enumerate(raw_vertices):
        where = f"vertices[{i}]"
        _check_keys(rv, _VERTEX_KEYS, where, lenient)
        if "id" not in rv or not isinstance(rv["id"], str) or not rv["id"]:
            raise ConfigError(f"{where}.id", "expected a non-empty string")
        vid = rv["id"]
        if vid in seen:
            raise ConfigError(f"{where}.id", f"duplicate vertex id {vid!r}")
        seen.add(vid)
        if "side" not in rv:
            raise ConfigError(f"{where}.side", "missing required key")
        vertices.append(Vertex(vid, _positive_real(rv["side"], f"{where}.side")))

    edges = []
    seen_edges = set()
    for i, re_ in enumerate(doc.get("edges", [])):
        where = f"edges[{i}]"
        _check_keys(re_, _EDGE_KEYS, where, lenient)
        eid = re_.get("id", f"e{i}")
        if not isinstance(eid, str) or not eid:
            raise ConfigError(f"{where}.id", "expected a non-empty string")
        if eid in seen_edges:
            raise ConfigError(f"{where}.id", f"duplicate edge id {eid!r}")
        seen_edges.add(eid)
        ends = re_.get("endpoints")
        if not isinstance(ends, list) or len(ends) != 2:
            raise ConfigError(f"{where}.endpoints", "expected a pair of vertex ids")
        for end in ends:
            if end not in seen:
                raise ConfigError(f"{where}.endpoints", f"unknown vertex id {end!r}")
        edges.append(Edge(eid, (ends[0], ends[1])))

    components = _connected_components([v.id for v in vertices], [e.endpoints for e in edges])
    if len(components) > 1:
        listing = "; ".join("{" + ", ".join(c) + "}" for c in components)
        raise ConfigError("edges", f"dual graph is disconnected, components: {listing}")

    degree = Counter()
    for e in edges:
        degree[e.endpoints[0]] += 1
        degree[e.endpoints[1]] += 1
    for i, v in enumerate(vertices):
        need = MIN_SIDE_PER_NECK * degree[v.id]
        if v.side < need:
            raise ConfigError(
                f"vertices[{i}].side",
                f"vertex {v.id!r} has side {v.side} < {need} required for {degree[v.id]} neck(s)",
            )

    if "s_grid" not in doc:
        raise ConfigError("s_grid", "missing required key")
    raw_grid = doc["s_grid"]
    if not isinstance(raw_grid, list):
        raise ConfigError("s_grid", "expected a list")
    s_grid = []
    for i, s in enumerate(raw_grid):
        s = _positive_real(s, f"s_grid[{i}]")
        if not s < 1.0:
            raise ConfigError(f"s_grid[{i}]", f"must lie in (0, 1), got {s}")
        if s_grid and not s < s_grid[-1]:
            raise ConfigError(f"s_grid[{i}]", "values must be distinct and sorted decreasing")
        s_grid.append(s)

    mesh_h = _positive_real(doc.get("mesh_h", DEFAULT_MESH_H), "mesh_h")

    n = len(vertices)
    eig_count = doc.get("eig_count", n + 3)
    if isinstance(eig_count, bool) or not isinstance(eig_count, int):
        raise ConfigError("eig_count", f"expected an integer, got {eig_count!r}")
    if eig_count < n + 2:
        raise ConfigError("eig_count", f"must be >= N + 2 = {n + 2}, got {eig_count}")

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"expected a non-negative integer, got {seed!r}")

    raw_tol = doc.get("tolerances", {})
    _check_keys(raw_tol, set(DEFAULT_TOLERANCES), "tolerances", lenient)
    tol_values = {k: raw_tol.get(k, d) for k, d in DEFAULT_TOLERANCES.items()}
    for k, value in tol_values.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"tolerances.{k}", f"expected a number, got {value!r}")
    tolerances = ToleranceSet(**{k: float(v) for k, v in tol_values.items()})

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")

    return ConfigGraph(
        vertices=tuple(vertices),
        edges=tuple(edges),
        s_grid=tuple(s_grid),
        mesh_h=mesh_h,
        eig_count=eig_count,
        seed=seed,
        tolerances=tolerances,
        name=name,
    )


def parse_config(text: str | bytes, lenient: bool = False) -> ConfigGraph:
    """Parse and validate a JSON configuration document.

    Raises
    ------
    ConfigParseError
        If ``text`` is not valid JSON; ``offset`` is the byte offset.
    ConfigError
        If a field fails validation; ``field`` names it.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        # JSONDecodeError.pos counts characters, not bytes
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigParseError(exc.msg, offset) from None
    return from_dict(doc, lenient=lenient)


def to_dict(cfg: ConfigGraph) -> dict[str, Any]:
    return {
        "name": cfg.name,
        "vertices": [{"id": v.id, "side": v.side} for v in cfg.vertices],
        "edges": [{"id": e.id, "endpoints": list(e.endpoints)} for e in cfg.edges],
        "s_grid": list(cfg.s_grid),
        "mesh_h": cfg.mesh_h,
        "eig_count": cfg.eig_count,
        "seed": cfg.seed,
        "tolerances": {
            "eig_residual": cfg.tolerances.eig_residual,
            "ode_tol": cfg.tolerances.ode_tol,
            "quad_tol": cfg.tolerances.quad_tol,
        },
    }


def serialize_config(cfg: ConfigGraph) -> str:
    return json.dumps(to_dict(cfg), indent=2)
