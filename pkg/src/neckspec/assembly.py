"""P1 finite-element pencil ``K u = lambda M u`` on a fiber mesh.

In two real dimensions the Dirichlet energy is conformally invariant, so
the stiffness matrix is assembled with the flat chart metric and only the
(lumped) mass matrix carries the conformal weight.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import AssemblyError
from .mesh import FiberMesh

MIN_TRIANGLE_AREA = 1e-14


def stiffness_matrix(mesh: FiberMesh) -> sp.csr_matrix:
    """Cotangent stiffness matrix from per-triangle chart coordinates."""
    p = mesh.tri_coords
    areas = mesh.chart_areas()
    small = areas < MIN_TRIANGLE_AREA
    if np.any(small):
        t = int(np.argmax(small))
        raise AssemblyError(f"degenerate triangle {t}: chart area {areas[t]:.3e}")
    # edge opposite to local vertex i
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    local = np.einsum("tik,tjk->tij", e, e) / (4.0 * areas)[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    # exact symmetry: the local matrices are symmetric, but summation order is not
    return ((K + K.T) * 0.5).tocsr()


def lumped_mass(mesh: FiberMesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix: ``sum(area * rho) / 3`` per node."""
    w = mesh.chart_areas() * mesh.tri_weight / 3.0
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(w, 3), minlength=mesh.n_nodes)


def consistent_mass(mesh: FiberMesh) -> sp.csr_matrix:
    """Full P1 mass matrix, weight constant per triangle.

    Used for the conforming Galerkin pencil, whose eigenvalues bound the
    continuous ones from above; the lumped pencil approaches from below.
    """
    w = mesh.chart_areas() * mesh.tri_weight / 12.0
    local = (np.ones((3, 3)) + np.eye(3))[None] * w[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble(mesh: FiberMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Return the stiffness ``K`` and lumped mass ``M`` as CSR matrices."""
    K = stiffness_matrix(mesh)
    M = sp.diags(lumped_mass(mesh), format="csr")
    return K, M


def export_matrix_market(matrix, path, comment="") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment, symmetry="symmetric")


def import_matrix_market(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))
