"""Micro boundary data reconstructed from a macro state."""
from __future__ import annotations

import numpy as np

from ..microfrac.domain import MicroBCs
from .transfer import FractureTrace, displacement_field


def jump_vectors(grid, state) -> np.ndarray:
    """Cartesian displacement jump u+ - u- per fracture cell."""
    n, t = grid.fc_normals, grid.fc_tangents
    return state.jump[:, :1] * n + state.jump[:, 1:] * t


def face_tractions(grid, state, alpha_f: float = 1.0) -> np.ndarray:
    """Total traction on the + crack face per fracture cell (the - face gets the opposite).

    The contact traction acts with f_n <= 0 in compression and the fluid
    pushes both faces apart.
    """
    n, t = grid.fc_normals, grid.fc_tangents
    fn, ft = state.traction[:, :1], state.traction[:, 1:]
    return ft * t - fn * n + alpha_f * state.p_frac[:, None] * n


def extract_micro_bcs(grid, state, dom=None, alpha_f: float = 1.0) -> MicroBCs:
    """Outer displacement R(u), fracture jump R(⟦u⟧) and crack-face traction for micro solves."""
    disp = displacement_field(grid, state.u, state.u_face)
    traces: dict = {}
    J = jump_vectors(grid, state)
    T = face_tractions(grid, state, alpha_f)

    def trace(k):
        if k not in traces:
            tr = FractureTrace(grid, k)
            traces[k] = (tr, tr.node_values(J))
        return traces[k]

    def jump(k, pts):
        tr, nodes = trace(k)
        s, _ = tr.project(pts)
        return tr.interp(nodes, s)

    def traction(k, pts):
        tr, _ = trace(k)
        s, _ = tr.project(pts)
        return T[tr.cell_of(s)]

    return MicroBCs(disp, jump, traction)
