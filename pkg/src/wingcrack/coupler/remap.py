"""State transfer onto a remeshed grid: overlap-weighted cells, arc-length fracture fields."""
from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from ..macrophys.state import STICK, MacroState
from ..meshkit.overlap import overlap_areas
from .transfer import FractureTrace, interpolate, node_field


def compose_cell_maps(*kept_lists, sizes) -> np.ndarray:
    """new cell -> original cell index (-1 for new cells) through successive remeshes.

    kept_lists[i][j] is the cell of stage i that became cell j of stage i+1
    (for j < len(kept)); sizes[i] is the cell count after stage i+1.
    """
    m = None
    for kept, n in zip(kept_lists, sizes):
        cur = np.full(n, -1, dtype=np.int64)
        k = np.asarray(kept, dtype=np.int64)
        cur[: len(k)] = k if m is None else m[k]
        m = cur
    return m


def overlap_matrix(old_grid, new_grid, cell_map=None):
    """Overlap areas for the new cells not copied from the old grid."""
    T_new = new_grid.num_cells
    if cell_map is None:
        cell_map = np.full(T_new, -1, dtype=np.int64)
    todo = np.where(cell_map < 0)[0]
    used = np.zeros(old_grid.num_cells, dtype=bool)
    used[cell_map[cell_map >= 0]] = True
    old_subset = np.where(~used)[0]
    A = overlap_areas(
        old_grid.base.nodes, old_grid.base.tris, new_grid.base.nodes, new_grid.base.tris,
        new_subset=todo, old_subset=old_subset,
    ).tocsr()
    return A, todo


def remap_cells(values, A, todo, cell_map) -> np.ndarray:
    """New cell value = Σ A_ej ξ_j / Σ A_ej, bitwise copies for kept cells."""
    v = np.asarray(values, dtype=float)
    out = np.empty((len(cell_map),) + v.shape[1:])
    kept = cell_map >= 0
    out[kept] = v[cell_map[kept]]
    if len(todo):
        Asub = A[todo]
        w = np.asarray(Asub.sum(axis=1)).ravel()
        if np.any(w <= 0):
            raise GeometryError("a remapped cell has no overlap with the old grid")
        out[todo] = (Asub @ v.reshape(len(v), -1)).reshape((len(todo),) + v.shape[1:]) / w.reshape(
            (-1,) + (1,) * (v.ndim - 1)
        )
    return out


def _face_values(old_grid, new_grid, cell_map, old_cell_vals, old_face_vals):
    """Initial face values: copies through kept cells, else the old reconstruction at the face."""
    F = new_grid.num_faces
    tail = np.asarray(old_face_vals).shape[1:]
    out = np.zeros((F,) + tail)
    done = np.zeros(F, dtype=bool)
    kept = np.where(cell_map >= 0)[0]
    for j in range(3):
        nf = new_grid.cell_faces[kept, j]
        of = old_grid.cell_faces[cell_map[kept], j]
        out[nf] = old_face_vals[of]
        done[nf] = True
    rest = np.where(~done)[0]
    if len(rest):
        c = new_grid.face_cells[rest, 0]
        pts = (1 - 1e-6) * new_grid.face_centers[rest] + 1e-6 * new_grid.cell_centers[c]
        nodal = node_field(old_grid, old_cell_vals, old_face_vals)
        out[rest] = interpolate(old_grid, pts, nodal)
    return out


def _fracture_overlap(old_grid, new_grid, k):
    """(L_new, W) with W[e, j] = length of new fracture cell e shared with old cell j."""
    tr = FractureTrace(new_grid, k)
    old_x = old_grid.base.nodes[np.asarray(old_grid.base.frac_paths[k])]
    s_old, dist = tr.project(old_x)
    if np.any(dist > 1e-9 * max(1.0, tr.length)):
        raise GeometryError(f"old fracture {k} is not part of the new fracture path")
    lo_o = np.minimum(s_old[:-1], s_old[1:])
    hi_o = np.maximum(s_old[:-1], s_old[1:])
    lo_n, hi_n = tr.s[:-1], tr.s[1:]
    W = np.clip(np.minimum(hi_n[:, None], hi_o[None]) - np.maximum(lo_n[:, None], lo_o[None]), 0.0, None)
    W[W < 1e-12 * tr.length] = 0.0
    return tr, W, s_old


def remap_state(old_grid, new_grid, old: MacroState, cell_map=None, a0: float | None = None) -> MacroState:
    """Transfer a macro state to a new grid (same fracture count, paths possibly extended)."""
    if len(new_grid.base.frac_paths) != len(old_grid.base.frac_paths):
        raise GeometryError("remap needs the same fractures on both grids")
    if cell_map is None:
        cell_map = np.full(new_grid.num_cells, -1, dtype=np.int64)
    cell_map = np.asarray(cell_map, dtype=np.int64)
    A, todo = overlap_matrix(old_grid, new_grid, cell_map)
    u = remap_cells(old.u, A, todo, cell_map)
    p = remap_cells(old.p, A, todo, cell_map)
    vol = remap_cells(old.vol_strain, A, todo, cell_map)
    u_face = _face_values(old_grid, new_grid, cell_map, old.u, old.u_face)
    p_face = _face_values(old_grid, new_grid, cell_map, old.p, old.p_face)

    Nf = new_grid.num_frac_cells
    pf = np.zeros(Nf)
    trac = np.zeros((Nf, 2))
    jump = np.zeros((Nf, 2))
    ap = np.zeros(Nf)
    slip = np.zeros(Nf)
    mode = np.full(Nf, STICK, dtype=np.int64)
    lam = np.zeros((Nf, 2))
    a0_new = np.zeros(Nf)
    a_init = float(a0) if a0 is not None else float(np.max(old.a0)) if len(old.a0) else 0.0
    for k in range(len(new_grid.base.frac_paths)):
        nc = new_grid.frac_cells(k)
        oc = old_grid.frac_cells(k)
        tr, W, s_old = _fracture_overlap(old_grid, new_grid, k)
        w = W.sum(axis=1)
        cov = w > 0

        def avg(v):
            return (W[cov] @ v[oc].reshape(len(oc), -1)).reshape((int(cov.sum()),) + v.shape[1:]) / w[cov].reshape(
                (-1,) + (1,) * (v.ndim - 1)
            )

        idx = nc[cov]
        pf[idx] = avg(old.p_frac)
        trac[idx] = avg(old.traction)
        jump[idx] = avg(old.jump)
        ap[idx] = avg(old.aperture)
        slip[idx] = avg(old.slip_acc)
        lam[idx] = avg(old.flux_if)
        a0_new[idx] = avg(old.a0)
        mode[idx] = old.mode[oc][np.argmax(W[cov], axis=1)]
        # cells beyond the old tips: initial aperture, pressure of the nearest old cell
        new = nc[~cov]
        if len(new):
            mid_new = 0.5 * (tr.s[:-1] + tr.s[1:])[~cov]
            mid_old = 0.5 * (s_old[:-1] + s_old[1:])
            near = np.argmin(np.abs(mid_new[:, None] - mid_old[None]), axis=1)
            pf[new] = old.p_frac[oc[near]]
            ap[new] = a_init
            a0_new[new] = a_init
    return MacroState(
        t=old.t, u=u, p=p, u_face=u_face, p_face=p_face, p_frac=pf, traction=trac, jump=jump,
        aperture=ap, slip_acc=slip, mode=mode, flux_if=lam, vol_strain=vol, a0=a0_new,
    )
