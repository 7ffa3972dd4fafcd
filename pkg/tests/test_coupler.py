import math
from dataclasses import replace

import numpy as np
import pytest
from helpers import mini_config

from wingcrack.config import config_from_dict, to_scenario
from wingcrack.coupler import (
    Simulation,
    cell_to_node,
    commit_propagation,
    compose_cell_maps,
    extract_micro_bcs,
    interpolate_p1,
    load_checkpoint,
    node_field,
    remap_state,
    save_checkpoint,
)
from wingcrack.errors import ConfigError, GeometryError
from wingcrack.macrophys.state import zero_state
from wingcrack.meshkit import FractureNetwork, Rectangle, build_grid, extend_fracture, rosette_remesh
from wingcrack.meshkit.grid import split_along_fractures, triangulate_conforming
from wingcrack.microfrac import Elastic, build_micro_domain

DOMAIN = Rectangle.from_size(2.0, 2.0)
D = 0.05 / math.sqrt(2.0)
NET = FractureNetwork(((np.array([1 - D, 1 - D]), np.array([1 + D, 1 + D])),), (("B", "A"),))


@pytest.fixture(scope="module")
def tri():
    return triangulate_conforming(DOMAIN, NET, 0.05, h_max=0.2, fine_radius=0.05)


@pytest.fixture(scope="module")
def grid(tri):
    return split_along_fractures(tri)


def linear(x):
    return np.stack([1e-4 + 2e-4 * x[..., 0] - 3e-4 * x[..., 1], -5e-5 + 1e-4 * x[..., 0] + 4e-4 * x[..., 1]], -1)


def linear_state(grid):
    st = zero_state(grid, 1e-3)
    p = 1e6 * (1 + grid.cell_centers[:, 0] + 2 * grid.cell_centers[:, 1])
    pf = 1e6 * (1 + grid.face_centers[:, 0] + 2 * grid.face_centers[:, 1])
    return replace(st, u=linear(grid.cell_centers), u_face=linear(grid.face_centers), p=p, p_face=pf)


def test_commit_threshold_and_chord():
    assert commit_propagation(np.array([[0.0, 0.0], [0.01, 0.0]]), 0.5, 0.02) is not None
    assert commit_propagation(np.array([[0.0, 0.0], [0.009, 0.0]]), 0.5, 0.02) is None
    assert commit_propagation(None, 0.5, 0.02) is None
    a = math.radians(10.0)
    poly = np.array([[0.0, 0.0], [0.006, 0.0], [0.006 + 0.006 * math.cos(a), 0.006 * math.sin(a)]])
    chord = commit_propagation(poly, 0.5, 0.02)
    # law of cosines with the 170° interior angle
    expect = math.sqrt(2 * 0.006**2 * (1 + math.cos(a)))
    assert np.linalg.norm(chord[1] - chord[0]) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(0.011954, abs=5e-7)


def test_cell_to_node_constant_and_weighted_mean(grid):
    assert np.allclose(cell_to_node(grid, np.full(grid.num_cells, 5.0)), 5.0, rtol=0, atol=1e-13)
    rng = np.random.default_rng(0)
    v = rng.normal(size=grid.num_cells)
    nodal = cell_to_node(grid, v)
    n = int(grid.cells[0, 0])
    inc = np.where((grid.cells == n).any(axis=1))[0]
    a = grid.cell_areas[inc]
    assert nodal[n] == pytest.approx((a * v[inc]).sum() / a.sum(), rel=1e-12)


def test_interpolate_p1_examples(grid):
    nodal = np.zeros(len(grid.nodes))
    nodal[grid.cells[0]] = [1.0, 2.0, 6.0]
    centroid = grid.nodes[grid.cells[0]].mean(axis=0)
    assert interpolate_p1(grid, centroid, 0, nodal)[0] == pytest.approx(3.0)
    assert interpolate_p1(grid, grid.nodes[grid.cells[0, 1]], 0, nodal)[0] == pytest.approx(2.0)
    f = 2 * grid.nodes[:, 0] + 3 * grid.nodes[:, 1]
    x = 0.2 * grid.nodes[grid.cells[5, 0]] + 0.5 * grid.nodes[grid.cells[5, 1]] + 0.3 * grid.nodes[grid.cells[5, 2]]
    assert interpolate_p1(grid, x, 5, f)[0] == pytest.approx(2 * x[0] + 3 * x[1], rel=1e-13)
    with pytest.raises(GeometryError):
        interpolate_p1(grid, grid.nodes[grid.cells[5]].mean(axis=0) + 10.0, 5, f)


def test_node_reconstruction_exact_for_linear_fields(grid):
    st = linear_state(grid)
    nodal = node_field(grid, st.u, st.u_face)
    assert np.abs(nodal - linear(grid.nodes)).max() < 1e-10 * np.abs(linear(grid.nodes)).max()


def test_micro_bcs_reproduce_linear_field(grid):
    st = linear_state(grid)
    dom = build_micro_domain(grid, st, "A", 0.5, 1.0, Elastic(40e9, 0.2))
    bcs = extract_micro_bcs(grid, st, dom)
    b = dom.box
    s = np.linspace(0, 1, 41)
    pts = np.concatenate([
        np.stack([b.xmin + s * (b.xmax - b.xmin), np.full_like(s, b.ymin)], 1),
        np.stack([np.full_like(s, b.xmax), b.ymin + s * (b.ymax - b.ymin)], 1),
    ])
    assert np.abs(bcs.displacement(pts) - linear(pts)).max() < 1e-10 * np.abs(linear(pts)).max()


def test_zero_macro_state_gives_zero_micro_bcs(grid):
    st = zero_state(grid, 1e-3)
    dom = build_micro_domain(grid, st, "B", 0.5, 1.0, Elastic(40e9, 0.2))
    bcs = extract_micro_bcs(grid, st, dom)
    pts = np.array([[dom.box.xmin, dom.box.ymin], [dom.box.xmax, dom.box.ymax]])
    assert np.all(bcs.displacement(pts) == 0)
    assert np.all(bcs.jump(0, NET.fractures[0]) == 0)


def test_remap_identity(grid):
    st = linear_state(grid)
    same = remap_state(grid, grid, st, np.arange(grid.num_cells))
    for name in ("u", "p", "u_face", "p_face", "p_frac", "aperture", "vol_strain"):
        assert np.array_equal(getattr(same, name), getattr(st, name))
    full = remap_state(grid, grid, st)
    assert np.allclose(full.p, st.p, rtol=1e-10)


def _remesh(tri, theta, length):
    res = rosette_remesh(tri, "A", theta, length, 0.05, 0.05)
    new = extend_fracture(res.tri, "A", theta, length)
    return new, compose_cell_maps(res.kept, sizes=[len(new.tris)])


@pytest.mark.parametrize("theta_deg", [-70.0, 0.0, 45.0])
def test_remap_preserves_constants_and_integrals(tri, grid, theta_deg):
    new_tri, cmap = _remesh(tri, math.radians(theta_deg), 0.025)
    new = split_along_fractures(new_tri)
    rng = np.random.default_rng(int(theta_deg) + 100)
    st = replace(zero_state(grid, 1e-3), p=rng.uniform(1e6, 2e6, grid.num_cells))
    out = remap_state(grid, new, st, cmap)
    todo = cmap < 0
    old_region = np.setdiff1d(np.arange(grid.num_cells), cmap[~todo])
    I_old = (grid.cell_areas[old_region] * st.p[old_region]).sum()
    I_new = (new.cell_areas[todo] * out.p[todo]).sum()
    assert I_new == pytest.approx(I_old, rel=1e-10)
    c = remap_state(grid, new, replace(st, p=np.full(grid.num_cells, 7.5e6)), cmap)
    assert np.allclose(c.p, 7.5e6, rtol=1e-12, atol=0)
    # kept cells are bitwise copies
    assert np.array_equal(out.p[~todo], st.p[cmap[~todo]])
    # the new fracture cells exist and start at the initial aperture or the remapped one
    assert out.num_frac_cells == new.num_frac_cells > grid.num_frac_cells


def test_compose_cell_maps():
    m = compose_cell_maps([2, 0, 1], [1, 2], sizes=[4, 3])
    assert list(m) == [0, 1, -1]
    m = compose_cell_maps([5, 3], sizes=[3])
    assert list(m) == [5, 3, -1]


def test_numerics_validation():
    from wingcrack.coupler import NumericsParams

    with pytest.raises(ConfigError):
        NumericsParams(dH=0.02, eps_m=1.5)
    with pytest.raises(ConfigError):
        NumericsParams(dH=0.02, eps=0.0)
    p = NumericsParams(dH=0.02)
    assert p.commit_length == pytest.approx(0.01)
    assert p.advance == 0.02


def _scenario(**kw):
    return to_scenario(config_from_dict(mini_config(**kw)))


@pytest.fixture(scope="module")
def committing_run():
    sim = Simulation(_scenario(K_IC=0.7e6, stop={"t_end_h": 1.02}))
    results = []
    sim.run(results.append)
    return sim, results


def test_commit_reduces_time_step(committing_run):
    sim, res = committing_run
    assert res[0].dt == 3600.0
    assert res[0].commits == ("A", "B")
    assert res[1].dt == pytest.approx(36.0)
    assert sim.commit_count >= 2
    assert all(sim.wing_length(t) >= 0.025 * (1 - 1e-9) for t in ("A", "B"))


def test_no_commit_below_toughness():
    sim = Simulation(_scenario(K_IC=1e9, stop={"t_end_h": 2}))
    nodes = sim.tri.nodes.copy()
    results = []
    sim.run(results.append)
    assert sim.commit_count == 0 and all(not r.commits for r in results)
    assert np.array_equal(sim.tri.nodes, nodes)
    assert [r.dt for r in results] == [3600.0, 3600.0]


def test_checkpoint_round_trip(committing_run, tmp_path):
    sim, _ = committing_run
    path = save_checkpoint(tmp_path / "c.npz", sim)
    back = load_checkpoint(path, sim.sc)
    assert back.step_index == sim.step_index and back.dt == sim.dt
    assert back.commit_count == sim.commit_count and back.restore_tips == sim.restore_tips
    assert np.array_equal(back.tri.nodes, sim.tri.nodes)
    for name in ("u", "p", "p_frac", "traction", "jump", "aperture", "mode"):
        assert np.array_equal(getattr(back.state, name), getattr(sim.state, name))
    assert back.state.t == sim.state.t
    for tip in sim.wings:
        assert np.array_equal(np.array(back.wings[tip]), np.array(sim.wings[tip]))


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.npz"
    np.savez(p, meta=np.frombuffer(b'{"format": "other", "version": 1}', dtype=np.uint8))
    with pytest.raises(ConfigError):
        load_checkpoint(p, _scenario())
