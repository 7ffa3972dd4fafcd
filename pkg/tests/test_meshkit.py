import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wingcrack.errors import GeometryError
from wingcrack.meshkit import FractureNetwork, Rectangle, build_grid, extend_fracture, rosette_remesh
from wingcrack.meshkit.grid import check_conformity, triangulate_conforming
from wingcrack.meshkit.io import read_mesh, read_vtk_points_cells, write_mesh, write_vtk
from wingcrack.meshkit.overlap import overlap_areas, triangle_intersection_area
from wingcrack.meshkit.remesh import new_tip_point

DOMAIN = Rectangle.from_size(2.0, 2.0)


def diagonal(c=0.05):
    d = c / np.sqrt(2.0)
    return FractureNetwork(((np.array([1 - d, 1 - d]), np.array([1 + d, 1 + d])),), (("B", "A"),))


@pytest.fixture(scope="module")
def tri():
    return triangulate_conforming(DOMAIN, diagonal(), 0.02, h_max=0.2, fine_radius=0.05)


def test_triangulation_covers_domain(tri):
    assert np.all(tri.areas > 0)
    assert tri.areas.sum() == pytest.approx(4.0, rel=1e-12)


def test_fracture_path_is_edge_chain(tri):
    check_conformity(tri)
    p = tri.nodes[tri.frac_paths[0]]
    assert np.allclose(p[0], diagonal().fractures[0][0])
    assert np.allclose(p[-1], diagonal().fractures[0][-1])
    length = np.linalg.norm(np.diff(p, axis=0), axis=1).sum()
    assert length == pytest.approx(0.1, rel=1e-12)


def test_split_grid_duplicates_faces(tri):
    from wingcrack.meshkit import split_along_fractures

    g = split_along_fractures(tri)
    g.check()
    n_edges = len(tri.frac_paths[0]) - 1
    assert g.num_frac_cells == n_edges
    assert g.fc_lengths.sum() == pytest.approx(0.1, rel=1e-12)
    # interior tip-free nodes of the fracture are doubled
    assert len(g.nodes) == len(tri.nodes) + len(tri.frac_paths[0]) - 2


def test_fracture_outside_domain_is_rejected():
    net = FractureNetwork(((np.array([1.5, 1.0]), np.array([2.5, 1.0])),))
    with pytest.raises(GeometryError):
        net.validate(DOMAIN)


def test_intersecting_fractures_rejected():
    net = FractureNetwork(
        ((np.array([0.5, 0.5]), np.array([1.5, 1.5])), (np.array([0.5, 1.5]), np.array([1.5, 0.5])))
    )
    with pytest.raises(GeometryError):
        net.validate(DOMAIN)


def test_mesh_text_round_trip(tri, tmp_path):
    path = tmp_path / "m.txt"
    write_mesh(tri, path)
    head = path.read_text().split("\n")[0]
    assert head == f"nodes {len(tri.nodes)} triangles {len(tri.tris)} fractures 1"
    back = read_mesh(path, DOMAIN, tip_ids=(("B", "A"),))
    assert np.array_equal(back.nodes, tri.nodes)
    assert np.array_equal(np.sort(back.tris, axis=1), np.sort(tri.tris, axis=1))
    assert np.array_equal(back.frac_paths[0], tri.frac_paths[0])


def test_vtk_legacy_ascii(tri, tmp_path):
    path = tmp_path / "m.vtk"
    write_vtk(path, tri.nodes, tri.tris, cell_data={"a": tri.areas})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    assert "ASCII\nDATASET UNSTRUCTURED_GRID" in text
    pts, cells = read_vtk_points_cells(path)
    assert np.array_equal(pts[:, :2], tri.nodes)
    assert np.array_equal(cells, tri.tris)


def test_triangle_intersection_known_area():
    a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    # the common part is the triangle (0,0),(1,0),(0.5,0.5)
    assert triangle_intersection_area(a, b) == pytest.approx(0.25, abs=1e-15)
    assert triangle_intersection_area(a, a + 5.0) == 0.0


def test_overlap_rows_sum_to_areas(tri):
    other = triangulate_conforming(DOMAIN, diagonal(), 0.05, h_max=0.3)
    A = overlap_areas(tri.nodes, tri.tris, other.nodes, other.tris)
    assert np.allclose(np.asarray(A.sum(axis=1)).ravel(), other.areas, rtol=1e-10)
    assert np.allclose(np.asarray(A.sum(axis=0)).ravel(), tri.areas, rtol=1e-10)


@pytest.mark.parametrize("theta_deg", [-70.5, 0.0, 35.0])
def test_rosette_remesh_and_extend(tri, theta_deg):
    th = np.radians(theta_deg)
    res = rosette_remesh(tri, "A", th, 0.01, 0.02, 0.02)
    # kept triangles come first with the same vertex coordinates
    n = len(res.kept)
    assert np.array_equal(res.tri.nodes[res.tri.tris[:n]], tri.nodes[tri.tris[res.kept]])
    assert res.tri.areas.sum() == pytest.approx(4.0, rel=1e-12)
    out = extend_fracture(res.tri, "A", th, 0.01)
    check_conformity(out)
    tip = out.network.fractures[0][-1]
    assert np.allclose(tip, new_tip_point(tri, "A", th, 0.01))
    d = np.array([1.0, 1.0]) / np.sqrt(2.0)
    expected = diagonal().fractures[0][-1] + 0.01 * np.array(
        [np.cos(th) * d[0] - np.sin(th) * d[1], np.sin(th) * d[0] + np.cos(th) * d[1]]
    )
    assert np.allclose(tip, expected, atol=1e-14)


def test_extension_outside_domain_rejected():
    net = FractureNetwork(((np.array([1.9, 1.0]), np.array([1.97, 1.0])),), (("L", "R"),))
    t = triangulate_conforming(DOMAIN, net, 0.02, h_max=0.2)
    with pytest.raises(GeometryError):
        extend_fracture(t, "R", 0.0, 0.05)


def test_build_grid_deterministic():
    a = build_grid(DOMAIN, diagonal(), 0.05, h_max=0.3)
    b = build_grid(DOMAIN, diagonal(), 0.05, h_max=0.3)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.cells, b.cells)


@settings(max_examples=15, deadline=None)
@given(
    x=st.floats(0.3, 1.7), y=st.floats(0.3, 1.7), ang=st.floats(0, np.pi), half=st.floats(0.03, 0.2)
)
def test_random_fracture_meshes_conform(x, y, ang, half):
    d = half * np.array([np.cos(ang), np.sin(ang)])
    net = FractureNetwork(((np.array([x, y]) - d, np.array([x, y]) + d),))
    t = triangulate_conforming(DOMAIN, net, 0.05, h_max=0.3)
    check_conformity(t)
    assert t.areas.sum() == pytest.approx(4.0, rel=1e-12)
    assert np.all(t.areas > 0)
