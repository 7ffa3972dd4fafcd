"""Macro-to-micro reconstruction: node averages, P1 interpolation and fracture traces."""
from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from ..macrophys.discretize import cell_geometry
from ..meshkit.grid import barycentric


def cell_to_node(grid, values, gradients=None, centers=None) -> np.ndarray:
    """Area-weighted average of incident cell values at every (split) node.

    With ``gradients`` each cell contributes its value extrapolated to the
    node, ξ_K + ∇ξ_K·(x_n - x_K), which makes the reconstruction exact for
    affine fields.
    """
    v = np.asarray(values, dtype=float)
    T = grid.num_cells
    if v.shape[0] != T:
        raise GeometryError("cell_to_node needs one value per cell")
    area = grid.cell_areas
    cells = grid.cells
    N = len(grid.nodes)
    tail = v.shape[1:]
    num = np.zeros((N,) + tail)
    den = np.zeros(N)
    xc = grid.cell_centers if centers is None else centers
    for j in range(3):
        nd = cells[:, j]
        contrib = v
        if gradients is not None:
            dx = grid.nodes[nd] - xc
            contrib = v + np.einsum("t...k,tk->t...", gradients, dx)
        w = area.reshape((T,) + (1,) * len(tail))
        np.add.at(num, nd, w * contrib)
        np.add.at(den, nd, area)
    if np.any(den == 0):
        raise GeometryError(f"{int(np.sum(den == 0))} isolated nodes have no incident cell")
    return num / den.reshape((N,) + (1,) * len(tail))


def interpolate_p1(grid, points, cells, node_values) -> np.ndarray:
    """Barycentric interpolation of node values at points inside the given cells."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
    lam = barycentric(grid.nodes[grid.cells[cells]], pts)
    if np.any(lam.min(axis=1) < -1e-12):
        raise GeometryError("point lies outside its parent cell")
    vals = np.asarray(node_values, dtype=float)[grid.cells[cells]]
    return np.einsum("pi,pi...->p...", lam, vals)


def interpolate(grid, points, node_values) -> np.ndarray:
    """Locate points and interpolate (errors for points outside the grid)."""
    owner, _ = grid.locate(points)
    return interpolate_p1(grid, points, owner, node_values)


def cell_gradients(grid, cell_vals, face_vals) -> np.ndarray:
    """Cell gradients from face values (exact for affine fields): (T,2) or (T,d,2)."""
    geo = cell_geometry(grid)
    cv = np.asarray(cell_vals, dtype=float)
    fv = np.asarray(face_vals, dtype=float)[geo.faces]
    delta = fv - cv[:, None, ...]
    if cv.ndim == 1:
        return np.einsum("tl,tlb->tb", delta, geo.g)
    return np.einsum("tla,tlb->tab", delta, geo.g)


def node_field(grid, cell_vals, face_vals=None) -> np.ndarray:
    """Node reconstruction R: gradient-corrected area average when face values are available."""
    grads = cell_gradients(grid, cell_vals, face_vals) if face_vals is not None else None
    return cell_to_node(grid, cell_vals, grads)


def pressure_field(grid, p_cell, p_face=None):
    nodal = node_field(grid, p_cell, p_face)

    def f(points):
        return interpolate(grid, points, nodal)

    return f


def displacement_field(grid, u_cell, u_face=None):
    nodal = node_field(grid, u_cell, u_face)

    def f(points):
        return interpolate(grid, points, nodal)

    return f


class FractureTrace:
    """Arc-length description of one macro fracture's 1D grid."""

    def __init__(self, grid, k: int):
        self.grid = grid
        self.k = k
        path = np.asarray(grid.base.frac_paths[k])
        self.x = grid.base.nodes[path]
        seg = np.linalg.norm(np.diff(self.x, axis=0), axis=1)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])
        self.cells = grid.frac_cells(k)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def project(self, points):
        """(arc coordinate, distance) of points projected onto the path."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self.x[:-1], self.x[1:]
        d = b - a
        L2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("pij,ij->pi", p[:, None, :] - a[None], d) / L2[None], 0.0, 1.0)
        q = a[None] + t[..., None] * d[None]
        dist = np.linalg.norm(p[:, None, :] - q, axis=2)
        j = np.argmin(dist, axis=1)
        i = np.arange(len(p))
        return self.s[j] + t[i, j] * np.sqrt(L2[j]), dist[i, j]

    def cell_of(self, s):
        j = np.searchsorted(self.s, s, side="right") - 1
        return self.cells[np.clip(j, 0, len(self.cells) - 1)]

    def node_values(self, cell_vals):
        """Length-weighted node averages of cell values, zero at both tips."""
        v = np.asarray(cell_vals, dtype=float)[self.cells]
        L = np.diff(self.s)
        out = np.zeros((len(self.s),) + v.shape[1:])
        w = L.reshape((-1,) + (1,) * (v.ndim - 1))
        out[1:-1] = (w[:-1] * v[:-1] + w[1:] * v[1:]) / (w[:-1] + w[1:])
        return out

    def interp(self, node_vals, s):
        nv = np.asarray(node_vals, dtype=float)
        if nv.ndim == 1:
            return np.interp(s, self.s, nv)
        return np.stack([np.interp(s, self.s, nv[:, i]) for i in range(nv.shape[1])], axis=1)
