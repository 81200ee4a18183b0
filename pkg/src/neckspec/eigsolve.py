"""Eigensolvers for the fiber pencil and for small dense problems."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import lobpcg

from .errors import ConvergenceError, DomainError, PencilError

MAX_ITER = 500
GUARD_VECTORS = 5
DENSE_JACOBI_MAX_DIM = 64


@dataclass(frozen=True)
class Spectrum:
    """Smallest eigenpairs of ``K u = lambda M u``.

    ``eigenvectors`` are M-orthonormal columns; ``residuals[j]`` is
    ``||K u_j - lambda_j M u_j||_2 / ||u_j||_M``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int = 0

    def __len__(self):
        return len(self.eigenvalues)


def _residuals(K, M, U, lam):
    R = K @ U - (M @ U) * lam
    mnorm = np.sqrt(np.einsum("ij,ij->j", U, M @ U))
    return np.linalg.norm(R, axis=0) / mnorm


def _m_orthonormalize(M, U):
    G = U.T @ (M @ U)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    return scipy.linalg.solve_triangular(L, U.T, lower=True).T


def _dense_pencil(K, M, k):
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    try:
        lam, U = scipy.linalg.eigh(Kd, Md, subset_by_index=[0, k - 1])
    except np.linalg.LinAlgError as exc:
        raise PencilError(f"mass matrix is not positive definite: {exc}") from None
    return lam, U


def lobpcg_smallest(K, M, k: int, tol: float = 1e-7, seed: int = 0) -> Spectrum:
    """Compute the ``k`` smallest eigenpairs of the pencil ``(K, M)``.

    The starting block holds the constant vector plus ``k + 4`` seeded
    Gaussian columns. The preconditioner is the inverse diagonal of
    ``K + sigma M`` with ``sigma = 1e-6 trace(M) / n``, which is positive
    even on the kernel of ``K``. Problems too small for a block iteration
    are solved densely.

    Raises
    ------
    PencilError
        If a preconditioner pivot is not positive.
    ConvergenceError
        If the residuals exceed ``tol`` after 500 iterations; the best
        residuals reached are attached.
    """
    n = K.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"k must lie in [1, {n}], got {k}")
    m_diag = M.diagonal() if sp.issparse(M) else np.diag(np.asarray(M, dtype=float))
    if np.any(m_diag <= 0):
        raise PencilError(f"mass matrix has a non-positive diagonal entry at {int(np.argmin(m_diag))}")
    block = k + GUARD_VECTORS
    sigma = 1e-6 * m_diag.sum() / n
    pivots = (K.diagonal() if sp.issparse(K) else np.diag(K)) + sigma * m_diag
    if np.any(pivots <= 0):
        raise PencilError(f"non-positive preconditioner pivot at row {int(np.argmin(pivots))}")

    iterations = 0
    if n < 5 * block:
        lam, U = _dense_pencil(K, M, k)
    else:
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, block))
        X[:, 0] = 1.0
        precond = sp.diags(1.0 / pivots)
        with warnings.catch_warnings():
            # non-convergence is reported through the residual check below
            warnings.simplefilter("ignore")
            lam, U, history = lobpcg(
                K, X, B=M, M=precond, tol=tol, maxiter=MAX_ITER, largest=False,
                retResidualNormsHistory=True,
            )
        iterations = len(history)
        order = np.argsort(lam, kind="stable")[:k]
        lam, U = lam[order], U[:, order]
        U = _m_orthonormalize(M, U)
        # Ritz values of the re-orthonormalized block
        Kp = U.T @ (K @ U)
        lam_p, Q = np.linalg.eigh(0.5 * (Kp + Kp.T))
        lam, U = lam_p, U @ Q
    # fix signs so output is reproducible irrespective of solver internals
    pivot_rows = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivot_rows, np.arange(U.shape[1])])
    res = _residuals(K, M, U, lam)
    if np.any(res > tol):
        raise ConvergenceError(
            f"LOBPCG did not reach tol={tol:g} within {MAX_ITER} iterations "
            f"(max residual {res.max():.3e})",
            residuals=res,
        )
    return Spectrum(np.asarray(lam), U, res, iterations)


def dense_jacobi_eig(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalue algorithm for small symmetric matrices.

    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > DENSE_JACOBI_MAX_DIM:
        raise DomainError(f"dimension {n} exceeds {DENSE_JACOBI_MAX_DIM}")
    scale = max(np.abs(A).max(), 1.0) if n else 1.0
    if np.abs(A - A.T).max(initial=0.0) > 1e-12 * scale:
        raise DomainError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)

    def off(a):
        return np.linalg.norm(a - np.diag(np.diag(a)))

    for _ in range(max_sweeps):
        if off(A) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(diff) > 1e150 * abs(apq):
                    # small-angle limit, avoids overflow in theta
                    t = apq / diff
                elif diff == 0.0:
                    t = 1.0
                else:
                    theta = diff / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = A[:, p].copy()
                A[:, p] = c * rot_p - s * A[:, q]
                A[:, q] = s * rot_p + c * A[:, q]
                rot_p = A[p, :].copy()
                A[p, :] = c * rot_p - s * A[q, :]
                A[q, :] = s * rot_p + c * A[q, :]
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    else:
        raise ConvergenceError(f"Jacobi sweeps exhausted, off-diagonal norm {off(A):.3e}")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def dense_generalized_eig(A, B):
    """Solve ``A x = mu B x`` for small dense SPD ``B`` via :func:`dense_jacobi_eig`."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    bw, bv = dense_jacobi_eig(B)
    if bw.min(initial=np.inf) <= 1e-14 * max(bw.max(initial=0.0), 1e-300):
        raise PencilError("projected mass matrix is singular")
    inv_sqrt = bv @ np.diag(bw ** -0.5) @ bv.T
    C = inv_sqrt @ A @ inv_sqrt
    w, Q = dense_jacobi_eig(0.5 * (C + C.T))
    return w, inv_sqrt @ Q
