import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatsource.errors import DomainError, OrientationError, ParseError, ResourceError, TopologyError
from heatsource.mesh import (
    load_mesh,
    mesh_disc,
    mesh_ellipse,
    mesh_polygon,
    mesh_star,
    save_mesh,
    validate_mesh,
)


@pytest.fixture(scope="module")
def disc04():
    return mesh_disc(0.04)


@pytest.fixture(scope="module")
def ellipse04():
    return mesh_ellipse(1.2, 0.8, 0.04)


def test_disc_boundary_on_circle(disc04):
    r = np.linalg.norm(disc04.nodes[disc04.boundary_nodes], axis=1)
    assert np.max(np.abs(r - 1.0)) < 1e-12


def test_ellipse_boundary_on_curve(ellipse04):
    x, y = ellipse04.nodes[ellipse04.boundary_nodes].T
    assert np.max(np.abs((x / 1.2) ** 2 + (y / 0.8) ** 2 - 1)) < 1e-12
    assert np.allclose(ellipse04.curve_point(ellipse04.boundary_theta), ellipse04.nodes[ellipse04.boundary_nodes], atol=1e-15)


def test_refinement_ratio(disc04):
    ratio = mesh_disc(0.02).n_triangles / disc04.n_triangles
    assert 3 <= ratio <= 5


def test_ellipse_area(ellipse04):
    exact = math.pi * 1.2 * 0.8
    assert abs(ellipse04.area() / exact - 1) < 5e-3


@pytest.mark.parametrize(
    "make",
    [
        lambda: mesh_disc(0.04),
        lambda: mesh_disc(0.1),
        lambda: mesh_ellipse(1.2, 0.8, 0.04),
        lambda: mesh_ellipse(0.9, 1.1, 0.07),
        lambda: mesh_polygon([(1, 0), (0, 1), (-1, 0), (0, -1)], 0.05),
        lambda: mesh_star(lambda t: 1 + 0.15 * np.cos(3 * t), 0.05),
    ],
)
def test_generated_mesh_invariants(make):
    m = make()
    assert validate_mesh(m)
    assert np.all(m.signed_areas() > 0)
    assert m.edge_lengths().max() <= 1.6 * m.h_target
    assert m.min_angle_deg() >= 20.0
    # Euler relation for a disc-topology mesh
    assert m.n_nodes - m.edges().shape[0] + m.n_triangles == 1
    # interior edges shared by exactly two triangles; boundary edges by one
    t = m.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert np.sum(counts == 1) == len(m.boundary_nodes)
    assert set(counts.tolist()) <= {1, 2}


def test_boundary_normals_outward(ellipse04):
    n = ellipse04.boundary_normals()
    mid = ellipse04.nodes[ellipse04.boundary_edges].mean(axis=1)
    grad = mid / np.array([1.2**2, 0.8**2])
    assert np.all(np.sum(n * grad, axis=1) > 0)
    assert np.allclose(np.linalg.norm(n, axis=1), 1)


def test_boundary_parameter_increasing(disc04):
    assert np.all(np.diff(disc04.boundary_theta) > 0)
    assert disc04.boundary_theta[-1] < 2 * math.pi


def test_locate_boundary(disc04):
    bt = disc04.boundary_theta
    k, w = disc04.locate_boundary(bt[5])
    assert k == 5 and w == 0.0
    k, w = disc04.locate_boundary(0.5 * (bt[7] + bt[8]))
    assert k == 7 and abs(w - 0.5) < 1e-12
    k, w = disc04.locate_boundary(2 * math.pi - 1e-9)
    assert k == len(bt) - 1 and 0 < w < 1


def test_distance_and_contains(disc04):
    q = np.array([0.3, -0.2])
    d = disc04.distance_to_boundary(q)
    assert abs(d - (1 - np.linalg.norm(q))) < 2e-3
    assert disc04.contains(q)
    assert not disc04.contains(np.array([1.01, 0.0]))
    assert list(disc04.contains(np.array([[0, 0], [0, 2.0]]))) == [True, False]


def test_resource_cap():
    with pytest.raises(ResourceError):
        mesh_disc(0.001, cap=10_000)
    with pytest.raises(DomainError):
        mesh_disc(0.6)


def test_round_trip_bitwise(tmp_path, ellipse04):
    path = tmp_path / "m.txt"
    save_mesh(ellipse04, path)
    back = load_mesh(path)
    assert np.array_equal(back.nodes, ellipse04.nodes)
    assert np.array_equal(back.triangles, ellipse04.triangles)
    assert np.array_equal(back.boundary_nodes, ellipse04.boundary_nodes)
    assert np.array_equal(back.boundary_theta, ellipse04.boundary_theta)


def _write_square(path, tris, edges):
    nodes = ["0 0 0", "1 0 0.5", "1 1 1.0", "0 1 1.5"]
    lines = [f"mesh-v1 4 {len(tris)} {len(edges)}", *nodes, *tris, *edges]
    path.write_text("\n".join(lines) + "\n")


def test_valid_square_file(tmp_path):
    p = tmp_path / "ok.txt"
    _write_square(p, ["0 1 2", "0 2 3"], ["0 1", "1 2", "2 3", "3 0"])
    m = load_mesh(p)
    assert m.n_triangles == 2 and abs(m.area() - 1) < 1e-15


def test_clockwise_triangle_rejected(tmp_path):
    p = tmp_path / "cw.txt"
    _write_square(p, ["0 2 1", "0 2 3"], ["0 1", "1 2", "2 3", "3 0"])
    with pytest.raises(OrientationError):
        load_mesh(p)


def test_dangling_boundary_edge_rejected(tmp_path):
    p = tmp_path / "dangle.txt"
    _write_square(p, ["0 1 2", "0 2 3"], ["0 1", "1 2", "2 0", "3 0"])
    with pytest.raises(TopologyError):
        load_mesh(p)


def test_parse_error_line_number(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("mesh-v1 4 2 4\n0 0 0\n1 0 x\n1 1 1\n0 1 1.5\n0 1 2\n0 2 3\n0 1\n1 2\n2 3\n3 0\n")
    with pytest.raises(ParseError, match="line 3"):
        load_mesh(p)
    p.write_text("mesh-v2 1 1 1\n")
    with pytest.raises(ParseError, match="line 1"):
        load_mesh(p)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.6, 1.6), st.floats(0.6, 1.6), st.floats(0.06, 0.2))
def test_ellipse_property(a, b, h):
    m = mesh_ellipse(a, b, h)
    assert validate_mesh(m)
    assert m.edge_lengths().max() <= 1.6 * h
    assert abs(m.area() / (math.pi * a * b) - 1) < 0.05
