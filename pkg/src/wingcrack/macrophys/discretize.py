"""Hybrid finite-volume discretization of Darcy flow and linear elasticity.

Each cell carries a value and each face carries a value; the cell gradient is
reconstructed from face values (exact for affine fields) and a consistent
stabilization penalizes the deviation of face values from that affine
reconstruction. Face fluxes / tractions follow from the local bilinear form,
so local conservation holds per cell and affine fields are reproduced exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError
from .material import BiotMaterial

STAB = 1.0
# weight of the interior-face gradient-jump penalty (removes piecewise rotations)
GRAD_JUMP = 0.1


@dataclass(frozen=True, eq=False)
class CellGeometry:
    area: np.ndarray  # (T,)
    g: np.ndarray  # (T,3,2) |σ| n / |K|
    d: np.ndarray  # (T,3,2) x_σ - x_K
    dist: np.ndarray  # (T,3) distance from centroid to face line
    length: np.ndarray  # (T,3)
    normal: np.ndarray  # (T,3,2) outward unit normals
    faces: np.ndarray  # (T,3)


def cell_geometry(grid) -> CellGeometry:
    area = grid.cell_areas
    if np.any(area <= 0):
        raise GeometryError("degenerate cell geometry")
    n = grid.cell_face_normals
    p = grid.nodes[grid.cells]
    q = np.roll(p, -1, axis=1)
    length = np.linalg.norm(q - p, axis=2)
    xf = 0.5 * (p + q)
    xc = grid.cell_centers
    d = xf - xc[:, None, :]
    dist = np.einsum("tjk,tjk->tj", d, n)
    if np.any(dist <= 0):
        raise GeometryError("cell centroid outside its faces")
    g = length[..., None] * n / area[:, None, None]
    return CellGeometry(area, g, d, dist, length, n, grid.cell_faces)


def _stab_matrix(geo: CellGeometry) -> np.ndarray:
    """S[t, j, l] = δ_jl - g_l · d_j (affine-deviation operator on face increments)."""
    S = -np.einsum("tlk,tjk->tjl", geo.g, geo.d)
    S += np.eye(3)[None]
    return S


@dataclass(frozen=True, eq=False)
class FlowDisc:
    """Local flux operators: F_Kσj = -Σ_l A[K,j,l] (p_σl - p_K)."""

    geo: CellGeometry
    A: np.ndarray  # (T,3,3)

    def fluxes(self, p_cell, p_face) -> np.ndarray:
        delta = p_face[self.geo.faces] - p_cell[:, None]
        return -np.einsum("tjl,tl->tj", self.A, delta)

    def divergence(self, p_cell, p_face) -> np.ndarray:
        return self.fluxes(p_cell, p_face).sum(axis=1)


@dataclass(frozen=True, eq=False)
class MechDisc:
    """Local traction operators: T_Kσj = Σ_l A[K,j,:,l,:] (u_σl - u_K) - α p_K |σ_j| n_j."""

    geo: CellGeometry
    A: np.ndarray  # (T,3,2,3,2)
    alpha: float
    penalty: object = None  # sparse (2F, 2F) on face displacements

    def tractions(self, u_cell, u_face, p_cell) -> np.ndarray:
        delta = u_face[self.geo.faces] - u_cell[:, None, :]
        t = np.einsum("tjalb,tlb->tja", self.A, delta)
        t -= self.alpha * (p_cell[:, None] * self.geo.length)[..., None] * self.geo.normal
        return t

    def div_face(self, u_face) -> np.ndarray:
        """|K| div u from face displacements."""
        un = np.einsum("tjk,tjk->tj", u_face[self.geo.faces], self.geo.normal)
        return (un * self.geo.length).sum(axis=1)

    def strain(self, u_cell, u_face) -> np.ndarray:
        delta = u_face[self.geo.faces] - u_cell[:, None, :]
        G = np.einsum("tla,tlb->tab", delta, self.geo.g)
        return 0.5 * (G + np.swapaxes(G, 1, 2))


def assemble_matrix_flow(grid, material: BiotMaterial, beta: float = STAB) -> FlowDisc:
    geo = cell_geometry(grid)
    k = material.mobility
    GtG = np.einsum("tjk,tlk->tjl", geo.g, geo.g) * geo.area[:, None, None]
    S = _stab_matrix(geo)
    w = beta * geo.length / geo.dist
    A = k * (GtG + np.einsum("tmj,tm,tml->tjl", S, w, S))
    return FlowDisc(geo, A)


def assemble_matrix_mechanics(grid, material: BiotMaterial, beta: float = STAB) -> MechDisc:
    if not material.nu < 0.5:
        raise GeometryError("incompressible material is not supported")
    geo = cell_geometry(grid)
    T = len(geo.area)
    lam, mu = material.lame, material.shear
    D = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
    # strain (Voigt, engineering shear) from face increments δ_l (l face, b component)
    B = np.zeros((T, 3, 3, 2))
    B[:, 0, :, 0] = geo.g[:, :, 0]
    B[:, 1, :, 1] = geo.g[:, :, 1]
    B[:, 2, :, 0] = geo.g[:, :, 1]
    B[:, 2, :, 1] = geo.g[:, :, 0]
    B = B.reshape(T, 3, 6)
    K = np.einsum("tsi,su,tuj->tij", B, D, B) * geo.area[:, None, None]
    S = _stab_matrix(geo)
    w = beta * 2.0 * mu * geo.length / geo.dist
    Ss = np.einsum("tmj,tm,tml->tjl", S, w, S)
    K = K.reshape(T, 3, 2, 3, 2) + np.einsum("tjl,ab->tjalb", Ss, np.eye(2))
    P = gradient_jump_penalty(grid, geo, GRAD_JUMP * mu)
    return MechDisc(geo, K, material.alpha, P)


def gradient_jump_penalty(grid, geo: CellGeometry, weight: float):
    """Sparse form Σ_σ w |σ|^2 |G_K u - G_L u|^2 over interior faces.

    G_K depends on face values only, so this leaves the cell balances untouched
    and vanishes for affine displacement fields.
    """
    import scipy.sparse as sps

    F = grid.num_faces
    inner = np.where(grid.face_kind == 0)[0]
    if len(inner) == 0:
        return sps.csr_matrix((2 * F, 2 * F))
    K, L = grid.face_cells[inner, 0], grid.face_cells[inner, 1]
    w = weight * grid.face_lengths[inner] ** 2
    # slots: 3 faces of K (+g) and 3 faces of L (-g)
    fac = np.concatenate([geo.faces[K], geo.faces[L]], axis=1)  # (n,6)
    gg = np.concatenate([geo.g[K], -geo.g[L]], axis=1)  # (n,6,2)
    # D_ab = Σ_s u_{s,a} gg_{s,b};  energy w Σ_ab D_ab^2
    # Hessian for component a: w Σ_b gg_{s,b} gg_{t,b}
    H = w[:, None, None] * np.einsum("nsb,ntb->nst", gg, gg)
    rows, cols, vals = [], [], []
    for a in range(2):
        r = 2 * fac + a
        rows.append(np.repeat(r[:, :, None], 6, axis=2).ravel())
        cols.append(np.repeat(r[:, None, :], 6, axis=1).ravel())
        vals.append(H.ravel())
    return sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * F, 2 * F)
    ).tocsr()
