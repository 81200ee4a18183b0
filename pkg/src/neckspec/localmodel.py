"""Coordinate-chart models ``pi = z_0 z_1 ... z_p`` near the central fiber.

Covers the horizontal retraction flow, sampling of the lower bound
``||d pi||^2 >= c d(z, Sing)^(2p)``, and the log-measure bookkeeping on
neck charts. All metrics are Euclidean.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FlowError, ODEError

POLYDISC_RADIUS = 3.0
MIN_LOJASIEWICZ_SAMPLES = 10_000


def projection(z) -> complex:
    return complex(np.prod(z))


def dpi(z) -> np.ndarray:
    """Holomorphic partials ``d pi / d z_j = prod_{i != j} z_i``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    for j in range(len(z)):
        out[j] = np.prod(np.delete(z, j))
    return out


def dist_to_sing(z) -> float:
    """Distance to the union of the planes ``{z_i = z_j = 0}``."""
    sq = np.sort(np.abs(np.asarray(z)) ** 2)
    return math.sqrt(sq[0] + sq[1])


def horizontal_field(z, theta: float) -> np.ndarray:
    """``exp(i theta) conj(d pi) / ||d pi||^2``, so ``d pi(field) = exp(i theta)``."""
    g = dpi(z)
    return np.exp(1j * theta) * np.conj(g) / np.real(np.vdot(g, g))


@dataclass(frozen=True)
class FlowTrace:
    p: int
    s: float
    theta: float
    eta: np.ndarray
    z: np.ndarray  # (steps + 1, p + 1) complex
    defect: np.ndarray  # |pi(z(eta)) - eta exp(i theta)|
    tol: float

    @property
    def n_steps(self) -> int:
        return len(self.eta) - 1

    @property
    def endpoint(self) -> np.ndarray:
        return self.z[-1]

    @property
    def displacement(self) -> float:
        return float(np.linalg.norm(self.z[-1] - self.z[0]))


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def adaptive_rk4(f, y0, t_end: float, tol: float, h0: float | None = None):
    """Integrate the autonomous system ``y' = f(y)`` on ``[0, t_end]``.

    Classical RK4 with step doubling: a step of size ``h`` is accepted when
    it agrees with two half steps to ``15 * tol`` in the max norm. Yields
    ``(t, y)`` after every accepted step; the last ``t`` is exactly ``t_end``.

    Raises
    ------
    ODEError
        If the step size underflows.
    """
    y = np.array(y0)
    t, h = 0.0, (t_end / 8.0 if h0 is None else h0)
    h_min = 1e-14 * t_end
    while t < t_end:
        h = min(h, t_end - t)
        full = _rk4(f, y, h)
        half = _rk4(f, _rk4(f, y, 0.5 * h), 0.5 * h)
        err = np.max(np.abs(half - full)) / 15.0
        if err <= tol:
            # land exactly on t_end on the final step
            t = t_end if h >= t_end - t else t + h
            y = half
            yield t, y
        factor = 0.9 * (tol / err) ** 0.2 if err > 0 else 4.0
        h *= min(4.0, max(0.1, factor))
        if h < h_min and t < t_end:
            raise ODEError(f"step size underflow at t={t:.3g}")


def default_start(p: int) -> np.ndarray:
    """The point ``(1, ..., 1, 0)`` on the component ``{z_p = 0}``."""
    return np.array([1.0] * p + [0.0], dtype=complex)


def flow_retraction(p: int, s: float, theta: float = 0.0, start=None,
                    tol: float = 1e-10) -> FlowTrace:
    """Flow ``start`` along the horizontal field from ``eta = 0`` to ``eta = s``.

    Integrated with :func:`adaptive_rk4` at local tolerance ``tol``.

    Raises
    ------
    FlowError
        If the trajectory comes within ``s**(1/(4p))`` of the singular set.
    ODEError
        If the step size underflows.
    """
    if p not in (1, 2):
        raise DomainError(f"p must be 1 or 2, got {p}")
    if not 0.0 < s <= 1e-2:
        raise DomainError(f"s must lie in (0, 1e-2], got {s}")
    z = default_start(p) if start is None else np.array(start, dtype=complex)
    if z.shape != (p + 1,) or z[-1] != 0:
        raise DomainError("start must have p + 1 coordinates with z_p = 0")
    if np.any((np.abs(z[:-1]) <= 0.5) | (np.abs(z[:-1]) >= 2.0)):
        raise DomainError("start coordinates z_0 .. z_{p-1} must have modulus in (0.5, 2)")

    radius = s ** (1.0 / (4 * p))
    phase = np.exp(1j * theta)

    def field(y):
        return horizontal_field(y, theta)

    etas, zs, defects = [0.0], [z.copy()], [abs(projection(z))]
    for eta, z in adaptive_rk4(field, z, s, tol):
        if dist_to_sing(z) < radius:
            raise FlowError(
                f"trajectory entered the radius {radius:.3g} ball around Sing at eta={eta:.3g}"
            )
        etas.append(eta)
        zs.append(z.copy())
        defects.append(abs(projection(z) - eta * phase))
    return FlowTrace(p, s, theta, np.array(etas), np.array(zs), np.array(defects), tol)


def closed_form_endpoint_p1(s: float) -> np.ndarray:
    """Endpoint of the real ``p = 1`` flow from ``(1, 0)``.

    Along it ``z0 z1 = eta`` and ``z0^2 - z1^2 = 1`` are conserved.
    """
    z0 = math.sqrt(0.5 * (1.0 + math.sqrt(1.0 + 4.0 * s * s)))
    return np.array([z0, s / z0], dtype=complex)


def displacement_exponent(p: int, s_values, theta: float = 0.0, tol: float = 1e-10):
    """Slope of ``log(displacement)`` against ``log s``."""
    s_values = np.asarray(s_values, dtype=float)
    disp = np.array([flow_retraction(p, s, theta, tol=tol).displacement for s in s_values])
    slope, _ = np.polyfit(np.log(s_values), np.log(disp), 1)
    return float(slope), disp


def write_flow_csv(trace: FlowTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["eta"]
        for j in range(trace.p + 1):
            header += [f"re_z{j}", f"im_z{j}"]
        w.writerow(header + ["pi_defect"])
        for eta, z, d in zip(trace.eta, trace.z, trace.defect):
            row = [f"{eta:.17g}"]
            for c in z:
                row += [f"{c.real:.17g}", f"{c.imag:.17g}"]
            w.writerow(row + [f"{d:.17g}"])


def lojasiewicz_ratios(z) -> np.ndarray:
    """``||d pi||^2 / d(z, Sing)^(2p)`` for rows of ``z`` (shape ``(m, p + 1)``)."""
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    p = z.shape[1] - 1
    sq = np.sort(np.abs(z) ** 2, axis=1)
    # sum_j prod_{i != j} |z_i|^2 over the sorted moduli (order-invariant, exact for p = 1)
    dpi2 = np.zeros(len(z))
    for j in range(p + 1):
        dpi2 = dpi2 + np.prod(np.delete(sq, j, axis=1), axis=1)
    d2 = sq[:, 0] + sq[:, 1]
    return dpi2 / d2 ** p


def lojasiewicz_ratio_min(p: int, n_samples: int = 100_000, seed: int = 0,
                          radius: float = POLYDISC_RADIUS) -> float:
    """Minimum ratio over points sampled uniformly in the polydisc."""
    if p not in (1, 2):
        raise DomainError(f"p must be 1 or 2, got {p}")
    if n_samples < MIN_LOJASIEWICZ_SAMPLES:
        raise DomainError(f"n_samples must be >= {MIN_LOJASIEWICZ_SAMPLES}, got {n_samples}")
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random((n_samples, p + 1)))
    phi = 2.0 * math.pi * rng.random((n_samples, p + 1))
    return float(lojasiewicz_ratios(r * np.exp(1j * phi)).min())


def _neck_embedding(u, theta, s):
    w = u + 1j * theta
    return np.exp(w), s * np.exp(-w)


def neck_measure_identity_check(s: float, quad_tol: float = 1e-8, n_u: int = 64,
                                n_theta: int = 16) -> tuple[float, float]:
    """Extremal ratios of the induced area density to ``|s|^2 (|z0|^-2 + |z1|^-2)``.

    The area density of ``(u, theta) -> (exp(u + i theta), s exp(-u - i theta))``
    is computed from a central-difference Jacobian with step ``sqrt(quad_tol)``;
    the log measure is normalized as ``du dtheta``.
    """
    if not 0.0 < s < 0.5:
        raise DomainError(f"s must lie in (0, 0.5), got {s}")
    log_s = math.log(s)
    us = np.linspace(log_s, 0.0, n_u) if n_u > 1 else np.array([0.5 * log_s])
    ths = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    U, T = np.meshgrid(us, ths, indexing="ij")
    U, T = U.ravel(), T.ravel()
    d = math.sqrt(quad_tol)

    def real4(u, t):
        z0, z1 = _neck_embedding(u, t, s)
        return np.stack([z0.real, z0.imag, z1.real, z1.imag], axis=-1)

    Ju = (real4(U + d, T) - real4(U - d, T)) / (2 * d)
    Jt = (real4(U, T + d) - real4(U, T - d)) / (2 * d)
    E = np.sum(Ju * Ju, axis=1)
    F = np.sum(Ju * Jt, axis=1)
    G = np.sum(Jt * Jt, axis=1)
    density = np.sqrt(E * G - F * F)
    z0, z1 = _neck_embedding(U, T, s)
    weight = s * s * (np.abs(z0) ** -2 + np.abs(z1) ** -2)
    ratio = density / weight
    return float(ratio.min()), float(ratio.max())


def log_weight(moduli, s: float) -> np.ndarray:
    """``W = |s|^2 sum_j |z_j|^-2`` with ``|z_0| = s / prod_{i>=1} |z_i|``.

    ``moduli`` has shape ``(m, p)`` holding ``|z_1| .. |z_p|``.
    """
    moduli = np.atleast_2d(moduli)
    prod_sq = np.prod(moduli ** 2, axis=1)
    return prod_sq + s * s * np.sum(moduli ** -2.0, axis=1)


def log_weight_scale_check(p: int, s: float, n_windows: int, n_per_axis: int = 17) -> float:
    """Worst ``max W / min W`` over factor-2 log scales of the neck chart.

    Window ``m`` in each ``|z_i|`` (``i >= 1``) is ``[c_m / 2, 2 c_m]`` with
    ``c_m = 2^(-1-2m)``; windows where ``|z_0|`` would exceed the polydisc
    radius are skipped.
    """
    if p not in (1, 2):
        raise DomainError(f"p must be 1 or 2, got {p}")
    if n_windows < 1:
        raise DomainError("n_windows must be positive")
    centers = 2.0 ** (-1.0 - 2.0 * np.arange(n_windows))
    if centers[-1] / 2.0 < s:
        raise DomainError(f"s = {s} too large for {n_windows} factor-2 windows")
    offsets = (np.linspace(-1.0, 1.0, n_per_axis) if n_per_axis > 1 else np.zeros(1))
    worst = 1.0
    for idx in np.ndindex(*([n_windows] * p)):
        c = centers[list(idx)]
        if s / np.prod(c / 2.0) > POLYDISC_RADIUS:
            continue
        grids = np.meshgrid(*[ci * 2.0 ** offsets for ci in c], indexing="ij")
        moduli = np.stack([g.ravel() for g in grids], axis=1)
        W = log_weight(moduli, s)
        worst = max(worst, float(W.max() / W.min()))
    return worst
