import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from neckspec.config import ConfigGraph
from neckspec.errors import DomainError, MeshError
from neckspec.mesh import (
    NECK, build_fiber_mesh, check_mesh, closed_form_area, euler_characteristic,
    flat_torus_mesh, neck_area, neck_weight, single_neck_mesh, total_area, write_off,
)

from conftest import chain3, dumbbell

DOUBLE = ConfigGraph.build([("A", 8.0), ("B", 8.0)], [("e1", ("A", "B")), ("e2", ("A", "B"))])
LOOP = ConfigGraph.build([("A", 8.0)], [("e1", ("A", "A"))])


@pytest.mark.parametrize("cfg, chi", [(dumbbell(), -2), (chain3(), -4), (DOUBLE, -4), (LOOP, -2)])
def test_euler_characteristic(cfg, chi):
    mesh = build_fiber_mesh(cfg, 0.01)
    assert euler_characteristic(mesh) == chi
    check_mesh(mesh)


def test_lone_neck_area():
    mesh = single_neck_mesh(0.1, 0.05)
    assert neck_area(0.1) == pytest.approx(6.2203, abs=1e-4)
    assert total_area(mesh) == pytest.approx(neck_area(0.1), rel=1e-3)


def test_dumbbell_area():
    cfg = dumbbell()
    exact = 2 * (16 - math.pi ** 2 / 4) + 2 * math.pi * 0.99
    assert exact == pytest.approx(33.2855, abs=1e-4)
    assert closed_form_area(cfg, 0.1) == pytest.approx(exact, rel=1e-14)
    assert total_area(build_fiber_mesh(cfg, 0.1, 0.1)) == pytest.approx(exact, rel=1e-3)


def test_neck_area_vanishes_at_s_one():
    assert neck_area(1.0) == 0.0


@pytest.mark.parametrize("s", [0.1, 1e-3])
def test_area_converges_second_order(s):
    cfg = dumbbell()
    errs = [abs(total_area(build_fiber_mesh(cfg, s, h)) - closed_form_area(cfg, s))
            for h in (0.2, 0.1, 0.05)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) > 1.8


def test_node_valence_and_connectivity():
    mesh = build_fiber_mesh(chain3(), 1e-3)
    valence = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_nodes)
    assert valence.min() >= 3
    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    assert connected_components(adj, directed=False)[0] == 1


def test_neck_weights_exact_at_centroid():
    s = 1e-3
    mesh = build_fiber_mesh(dumbbell(), s)
    for r, grid in mesh.neck_grids.items():
        tris = np.flatnonzero(mesh.tri_region == r)
        # u of the chart centroid: mean of the corners' chart u-coordinates
        u_c = mesh.tri_coords[tris, :, 0].mean(axis=1)
        np.testing.assert_allclose(mesh.tri_weight[tris], neck_weight(u_c, s), rtol=1e-14)
        assert mesh.regions[r].kind == NECK


def test_component_weights_are_one():
    mesh = build_fiber_mesh(dumbbell(), 1e-2)
    tor = np.isnan(mesh.node_u[mesh.triangles]).all(axis=1)
    assert np.all(mesh.tri_weight[tor] == 1.0)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.5, 2.0])
def test_bad_s(s):
    with pytest.raises(DomainError):
        build_fiber_mesh(dumbbell(), s)


@pytest.mark.parametrize("h", [0.0, 0.6, -0.1])
def test_bad_h(h):
    with pytest.raises(MeshError):
        build_fiber_mesh(dumbbell(), 0.01, h)


def test_flat_torus_area_exact():
    assert total_area(flat_torus_mesh(4.0, 0.1)) == pytest.approx(16.0, rel=1e-12)


def test_write_off(tmp_path):
    mesh = single_neck_mesh(0.1, 0.2)
    path = tmp_path / "neck.off"
    write_off(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "OFF"
    nv, nf, ne = map(int, lines[1].split())
    assert (nv, nf, ne) == (mesh.n_nodes, mesh.n_triangles, 0)
    faces = np.array([list(map(int, l.split()[1:])) for l in lines[2 + nv: 2 + nv + nf]])
    np.testing.assert_array_equal(faces, mesh.triangles)
    weights = [float(l.split()[3]) for l in lines[2 + nv + nf:]]
    np.testing.assert_array_equal(weights, mesh.tri_weight)
