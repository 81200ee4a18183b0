"""Logarithmic cutoff test functions and the min-max upper bound.

The cutoff in a neck is a function of ``t = exp(u)``, the modulus of the
neck coordinate measured from a component's end: it vanishes for
``t <= eps``, equals one for ``t >= sqrt(eps)`` and interpolates in
``log t`` in between. Its Dirichlet energy is ``O(1 / log(1/eps))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .eigsolve import dense_generalized_eig
from .errors import DegeneracyError, DomainError, PencilError
from .mesh import COMPONENT, NECK, FiberMesh

EPS_MAX = math.exp(-2.0)
# largest eps used by eps_for_s; strictly inside (0, e^-2)
EPS_CAP = 0.13
SHAPES = ("ramp", "quintic")


def eps_for_s(s: float) -> float:
    """Cutoff scale ``s**(1/4)``, capped below ``e**-2``."""
    return min(s ** 0.25, EPS_CAP)


def _check_eps(eps):
    if not 0.0 < eps < EPS_MAX:
        raise DomainError(f"eps must lie in (0, e^-2), got {eps}")


def cutoff_profile(t, eps: float, shape: str = "ramp"):
    """Evaluate ``eta(u_eps(t))`` with ``u_eps(t) = (log t - log eps) / (-log(eps) / 2)``.

    ``shape="ramp"`` clamps ``u_eps`` to [0, 1]; ``shape="quintic"`` applies
    ``6x^5 - 15x^4 + 10x^3`` to the clamped value.
    """
    _check_eps(eps)
    if shape not in SHAPES:
        raise DomainError(f"unknown cutoff shape {shape!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise DomainError("t must be positive")
    log_eps = math.log(eps)
    x = np.clip((np.log(t_arr) - log_eps) / (-0.5 * log_eps), 0.0, 1.0)
    if shape == "quintic":
        x = x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    return float(x) if np.ndim(x) == 0 else x


def _profile_log(log_t, eps, shape):
    """Cutoff as a function of ``log t``; avoids exp/log round trips."""
    log_eps = math.log(eps)
    x = np.clip((np.asarray(log_t) - log_eps) / (-0.5 * log_eps), 0.0, 1.0)
    if shape == "quintic":
        x = x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    return x


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    component: str
    values: np.ndarray
    eps: float
    shape: str = "ramp"

    @property
    def support(self) -> np.ndarray:
        return self.values > 0


def build_component_testfn(mesh: FiberMesh, component: str, eps: float,
                           shape: str = "ramp") -> TestFunction:
    """Nodal test function of one component.

    One on the component's nodes (hole rings included), the cutoff of the
    distance-to-end coordinate on each incident neck, zero elsewhere.
    """
    _check_eps(eps)
    if shape not in SHAPES:
        raise DomainError(f"unknown cutoff shape {shape!r}")
    if mesh.s is not None and eps < mesh.s:
        raise DomainError(f"eps = {eps} < s = {mesh.s}: the cutoff ramp leaves the neck")
    try:
        ci = mesh.region_index(COMPONENT, component)
    except KeyError:
        raise DomainError(f"unknown component {component!r}") from None

    values = np.zeros(mesh.n_nodes)
    values[mesh.node_region == ci] = 1.0
    log_s = math.log(mesh.s) if mesh.s is not None else None
    for r, region in enumerate(mesh.regions):
        if region.kind != NECK or region.ends is None or component not in region.ends:
            continue
        idx = np.flatnonzero(mesh.node_region == r)
        u = mesh.node_u[idx]
        prof = np.zeros(len(idx))
        if region.ends[0] == component:
            prof = np.maximum(prof, _profile_log(u, eps, shape))
        if region.ends[1] == component:
            prof = np.maximum(prof, _profile_log(log_s - u, eps, shape))
        values[idx] = prof
    return TestFunction(component, values, eps, shape)


def neck_ramp(mesh: FiberMesh, eps: float, shape: str = "ramp") -> np.ndarray:
    """Cutoff measured from the ``u = 0`` end on every neck node (diagnostic meshes)."""
    _check_eps(eps)
    values = np.zeros(mesh.n_nodes)
    neck = np.isfinite(mesh.node_u)
    values[neck] = _profile_log(mesh.node_u[neck], eps, shape)
    return values


def rayleigh(K, M, u) -> float:
    """Rayleigh quotient ``u^T K u / u^T M u``."""
    u = np.asarray(u, dtype=float)
    denom = float(u @ (M @ u))
    if not denom > 0:
        raise DomainError("vector has zero M-norm")
    return float(u @ (K @ u)) / denom


def dirichlet_energy(K, u) -> float:
    u = np.asarray(u, dtype=float)
    return float(u @ (K @ u))


@dataclass(frozen=True)
class MinMaxBound:
    """Projected-pencil eigenvalues over the span of the test functions.

    ``bounds[k - 1]`` certifies ``lambda_k <= bounds[k - 1]`` for
    ``k = 1 .. N - 1``; ``values`` holds all N projected eigenvalues.
    ``k4_check`` is ``max_i ||d chi_i||^2 * log(1/eps)``.
    """

    bounds: np.ndarray
    values: np.ndarray
    k4_check: float
    eps: float


def minmax_upper_bound(K, M, testfns: list[TestFunction]) -> MinMaxBound:
    """Upper bounds for the small eigenvalues by the min-max principle."""
    if len(testfns) < 2:
        raise DomainError(f"need at least 2 test functions, got {len(testfns)}")
    supports = np.array([tf.support for tf in testfns])
    if np.any(supports.sum(axis=0) > 1):
        raise DomainError("test function supports overlap")
    T = np.column_stack([tf.values for tf in testfns])
    Kp = T.T @ (K @ T)
    Mp = T.T @ (M @ T)
    try:
        mu, _ = dense_generalized_eig(0.5 * (Kp + Kp.T), 0.5 * (Mp + Mp.T))
    except PencilError:
        raise DegeneracyError("test functions are linearly dependent") from None
    eps = testfns[0].eps
    k4 = max(dirichlet_energy(K, tf.values) for tf in testfns) * math.log(1.0 / eps)
    return MinMaxBound(bounds=mu[1:], values=mu, k4_check=k4, eps=eps)


def write_testfn_csv(tf: TestFunction, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "value"])
        for i, v in enumerate(tf.values):
            w.writerow([i, f"{v:.17g}"])
