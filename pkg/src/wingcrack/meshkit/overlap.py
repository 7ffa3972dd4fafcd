"""Intersection areas between two triangulations of the same region."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps
from scipy.spatial import cKDTree

from ..errors import GeometryError


def _clip(subject: list, a, b) -> list:
    """Keep the part of a convex polygon left of the directed line a->b."""
    out = []
    n = len(subject)
    if n == 0:
        return out
    ex, ey = b[0] - a[0], b[1] - a[1]

    def side(p):
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    for i in range(n):
        p, q = subject[i], subject[(i + 1) % n]
        sp, sq = side(p), side(q)
        if sp >= 0:
            out.append(p)
        if (sp >= 0) != (sq >= 0):
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def polygon_area(poly) -> float:
    if len(poly) < 3:
        return 0.0
    x = np.array([p[0] for p in poly])
    y = np.array([p[1] for p in poly])
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def triangle_intersection_area(t1: np.ndarray, t2: np.ndarray) -> float:
    """Area of the intersection of two CCW triangles (3,2)."""
    poly = [tuple(p) for p in t1]
    for i in range(3):
        poly = _clip(poly, t2[i], t2[(i + 1) % 3])
        if not poly:
            return 0.0
    return max(polygon_area(poly), 0.0)


def overlap_areas(old_nodes, old_tris, new_nodes, new_tris, new_subset=None, old_subset=None, rtol=1e-10):
    """Sparse matrix A (n_new x n_old) with A[e, j] = |new e ∩ old j|.

    Only rows in ``new_subset`` and columns in ``old_subset`` are computed
    (defaults: all). Raises when a computed row does not sum to its cell area.
    """
    new_subset = np.arange(len(new_tris)) if new_subset is None else np.asarray(new_subset)
    old_subset = np.arange(len(old_tris)) if old_subset is None else np.asarray(old_subset)
    if len(old_subset) == 0 and len(new_subset):
        raise GeometryError("no old cells to overlap with")
    P_old = old_nodes[old_tris[old_subset]]
    P_new = new_nodes[new_tris[new_subset]]
    c_old = P_old.mean(axis=1)
    r_old = np.linalg.norm(P_old - c_old[:, None], axis=2).max(axis=1)
    c_new = P_new.mean(axis=1)
    r_new = np.linalg.norm(P_new - c_new[:, None], axis=2).max(axis=1)
    tree = cKDTree(c_old)
    rows, cols, vals = [], [], []
    lo_old, hi_old = P_old.min(axis=1), P_old.max(axis=1)
    for i, e in enumerate(new_subset):
        cand = tree.query_ball_point(c_new[i], r_new[i] + r_old.max())
        lo, hi = P_new[i].min(axis=0), P_new[i].max(axis=0)
        area_e = 0.0
        for j in cand:
            if np.any(hi_old[j] < lo) or np.any(lo_old[j] > hi):
                continue
            a = triangle_intersection_area(P_new[i], P_old[j])
            if a > 0.0:
                rows.append(e)
                cols.append(old_subset[j])
                vals.append(a)
                area_e += a
        target = 0.5 * abs(
            (P_new[i, 1, 0] - P_new[i, 0, 0]) * (P_new[i, 2, 1] - P_new[i, 0, 1])
            - (P_new[i, 1, 1] - P_new[i, 0, 1]) * (P_new[i, 2, 0] - P_new[i, 0, 0])
        )
        if area_e == 0.0:
            raise GeometryError(f"new cell {e} overlaps no old cell")
        if abs(area_e - target) > max(rtol * target, 1e-15):
            # rounding in the clipper; rescale the row to the exact area
            k0 = len(vals) - sum(1 for r in rows[::-1] if r == e)
            s = target / area_e
            if abs(s - 1.0) > 1e-6:
                raise GeometryError(f"new cell {e} is only {area_e / target:.6f} covered by the old grid")
            for k in range(k0, len(vals)):
                vals[k] *= s
    return sps.csr_matrix((vals, (rows, cols)), shape=(len(new_tris), len(old_tris)))
