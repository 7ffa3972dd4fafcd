"""Constrained Delaunay triangulation and graded point placement.

The triangulation starts from an unconstrained Delaunay mesh (Qhull via scipy)
and recovers missing constraint segments by edge flips. Points are placed with
a force-based smoother (Persson-Strang style) that keeps constraint vertices
fixed.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from ..errors import GeometryError
from .geometry import Rectangle, point_segment_distance

# deterministic low-discrepancy constants (plastic number sequence)
_R2 = (0.7548776662466927, 0.5698402909980532)


def signed_areas(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a, b, c = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def orient_ccw(points, tris):
    tris = np.array(tris, dtype=np.int64, copy=True)
    flip = signed_areas(points, tris) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def triangle_quality(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Normalized radius ratio 2 r_in / r_circ (1 for equilateral)."""
    a = np.linalg.norm(points[tris[:, 1]] - points[tris[:, 2]], axis=1)
    b = np.linalg.norm(points[tris[:, 2]] - points[tris[:, 0]], axis=1)
    c = np.linalg.norm(points[tris[:, 0]] - points[tris[:, 1]], axis=1)
    s = 0.5 * (a + b + c)
    area = np.abs(signed_areas(points, tris))
    with np.errstate(divide="ignore", invalid="ignore"):
        r_in = area / s
        r_circ = a * b * c / (4.0 * area)
        q = 2.0 * r_in / r_circ
    return np.nan_to_num(q)


def unique_edges(tris: np.ndarray) -> np.ndarray:
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def delaunay(points: np.ndarray, area_tol: float = 1e-14) -> np.ndarray:
    """CCW Delaunay triangles, dropping flat hull slivers."""
    tri = Delaunay(points, qhull_options="Qbb Qc Qz Q12")
    tris = orient_ccw(points, tri.simplices)
    scale = np.ptp(points, axis=0).max() ** 2
    return tris[signed_areas(points, tris) > area_tol * scale]


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _proper_cross(p, q, a, b) -> np.ndarray:
    """Vectorized strict crossing of segment pq with segments a->b (arrays)."""
    d1 = _cross(a, b, p)
    d2 = _cross(a, b, q)
    d3 = _cross(p, q, a)
    d4 = _cross(p, q, b)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


class _TriMesh:
    """Minimal mutable triangle mesh supporting edge flips."""

    def __init__(self, points, tris):
        self.p = points
        self.t = [list(t) for t in tris]
        self.edge_tris: dict = {}
        for k, t in enumerate(self.t):
            self._register(k, t)

    @staticmethod
    def _key(a, b):
        return (a, b) if a < b else (b, a)

    def _register(self, k, t):
        for i in range(3):
            self.edge_tris.setdefault(self._key(t[i], t[(i + 1) % 3]), set()).add(k)

    def _unregister(self, k, t):
        for i in range(3):
            key = self._key(t[i], t[(i + 1) % 3])
            s = self.edge_tris.get(key)
            if s is not None:
                s.discard(k)
                if not s:
                    del self.edge_tris[key]

    def has_edge(self, a, b) -> bool:
        return self._key(a, b) in self.edge_tris

    def flip(self, a, b) -> tuple | None:
        """Flip edge ab if the surrounding quad is strictly convex; return new edge."""
        tr = self.edge_tris.get(self._key(a, b))
        if tr is None or len(tr) != 2:
            return None
        k1, k2 = tuple(tr)
        t1, t2 = self.t[k1], self.t[k2]
        c = [v for v in t1 if v != a and v != b][0]
        d = [v for v in t2 if v != a and v != b][0]
        P = self.p
        # quad a-d-b-c must be convex for the flip to be valid
        if not (_proper_cross(P[c], P[d], P[a][None], P[b][None])[0]):
            return None
        self._unregister(k1, t1)
        self._unregister(k2, t2)
        n1 = [c, a, d]
        n2 = [d, b, c]
        if _cross(P[n1[0]], P[n1[1]], P[n1[2]]) < 0:
            n1 = n1[::-1]
        if _cross(P[n2[0]], P[n2[1]], P[n2[2]]) < 0:
            n2 = n2[::-1]
        self.t[k1], self.t[k2] = n1, n2
        self._register(k1, n1)
        self._register(k2, n2)
        return self._key(c, d)

    def crossing_edges(self, a, b):
        P = self.p
        keys = np.array(list(self.edge_tris.keys()), dtype=np.int64)
        mask = (keys[:, 0] != a) & (keys[:, 1] != a) & (keys[:, 0] != b) & (keys[:, 1] != b)
        keys = keys[mask]
        hit = _proper_cross(P[a][None], P[b][None], P[keys[:, 0]], P[keys[:, 1]])
        return [tuple(k) for k in keys[hit]]

    def array(self):
        return np.array(self.t, dtype=np.int64)


def recover_constraints(points: np.ndarray, tris: np.ndarray, segments, max_passes: int = 200) -> np.ndarray:
    """Insert constraint segments (pairs of point indices) into a triangulation by flips."""
    segments = [tuple(int(v) for v in s) for s in segments]
    mesh = None
    fixed = set()
    for a, b in segments:
        fixed.add(_TriMesh._key(a, b))
    for a, b in segments:
        if mesh is None:
            key_set = set(map(tuple, np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1).tolist()))
            if _TriMesh._key(a, b) in key_set:
                continue
            mesh = _TriMesh(points, tris)
        if mesh.has_edge(a, b):
            continue
        queue = mesh.crossing_edges(a, b)
        passes = 0
        while queue:
            passes += 1
            if passes > max_passes * max(1, len(queue)):
                raise GeometryError(f"could not recover constraint segment {a}-{b}")
            e = queue.pop(0)
            if e in fixed:
                raise GeometryError(f"constraint segments {a}-{b} and {e} cross")
            if not mesh.has_edge(*e):
                continue
            new = mesh.flip(*e)
            if new is None:
                queue.append(e)
                continue
            c, d = new
            if c not in (a, b) and d not in (a, b) and _proper_cross(
                points[a][None], points[b][None], points[c][None], points[d][None]
            )[0]:
                queue.append(new)
        if not mesh.has_edge(a, b):
            raise GeometryError(f"constraint segment {a}-{b} missing after flips")
    return tris if mesh is None else orient_ccw(points, mesh.array())


def graded_subdivision(a, b, size_fn, samples: int = 64) -> np.ndarray:
    """Points strictly between a and b spaced according to size_fn."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    s = np.linspace(0.0, 1.0, samples + 1)
    pts = a + s[:, None] * (b - a)
    h = size_fn(pts)
    length = np.linalg.norm(b - a)
    dens = 1.0 / h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s) * length)])
    n = max(1, int(round(cum[-1])))
    if n == 1:
        return np.zeros((0, 2))
    targets = cum[-1] * np.arange(1, n) / n
    t = np.interp(targets, cum, s)
    return a + t[:, None] * (b - a)


def lattice_points(box: Rectangle, size_fn, h_min: float) -> np.ndarray:
    """Deterministic hexagonal lattice thinned to the requested density."""
    dy = h_min * np.sqrt(3.0) / 2.0
    ny = int(np.ceil(box.height / dy)) + 1
    nx = int(np.ceil(box.width / h_min)) + 2
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    x = box.xmin + (i + 0.5 * (j % 2)) * h_min
    y = box.ymin + j * dy
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    keep = box.contains(pts)
    pts = pts[keep]
    ii, jj = i.ravel()[keep], j.ravel()[keep]
    u = np.mod(ii * _R2[0] + jj * _R2[1], 1.0)
    h = size_fn(pts)
    return pts[u < (h_min / h) ** 2]


def smooth_points(
    fixed: np.ndarray,
    free: np.ndarray,
    size_fn,
    box: Rectangle,
    segments: np.ndarray | None = None,
    n_iter: int = 40,
    clearance: float = 0.4,
):
    """Force-based relaxation of free points; fixed points never move."""
    nf = len(fixed)
    p = np.concatenate([fixed, free])
    if len(free) == 0:
        return p
    dt = 0.2
    fscale = 1.2
    for _ in range(n_iter):
        tris = delaunay(p)
        bars = unique_edges(tris)
        vec = p[bars[:, 1]] - p[bars[:, 0]]
        L = np.linalg.norm(vec, axis=1)
        hb = size_fn(0.5 * (p[bars[:, 0]] + p[bars[:, 1]]))
        L0 = hb * fscale * np.sqrt(np.sum(L**2) / np.sum(hb**2))
        F = np.maximum(L0 - L, 0.0)
        fv = (F / L)[:, None] * vec
        ftot = np.zeros_like(p)
        np.add.at(ftot, bars[:, 0], -fv)
        np.add.at(ftot, bars[:, 1], fv)
        move = dt * ftot[nf:]
        q = p[nf:] + move
        hq = size_fn(q)
        inset = 0.3 * hq
        q[:, 0] = np.clip(q[:, 0], box.xmin + inset, box.xmax - inset)
        q[:, 1] = np.clip(q[:, 1], box.ymin + inset, box.ymax - inset)
        if segments is not None and len(segments):
            q = _push_off_segments(q, segments, clearance * hq)
        dmax = np.max(np.linalg.norm(q - p[nf:], axis=1) / hq)
        p[nf:] = q
        if dmax < 1e-3:
            break
    return p


def _push_off_segments(q, segments, clear):
    a, b = segments[:, 0], segments[:, 1]
    d = point_segment_distance(q, a, b)
    j = np.argmin(d, axis=1)
    dm = d[np.arange(len(q)), j]
    bad = dm < clear
    if not np.any(bad):
        return q
    qb = q[bad]
    aa, bb = a[j[bad]], b[j[bad]]
    ab = bb - aa
    t = np.clip(np.einsum("ij,ij->i", qb - aa, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    proj = aa + t[:, None] * ab
    off = qb - proj
    nrm = np.linalg.norm(off, axis=1)
    normal = np.stack([-ab[:, 1], ab[:, 0]], axis=1) / np.linalg.norm(ab, axis=1)[:, None]
    side = np.sign(np.einsum("ij,ij->i", off, normal))
    side[side == 0] = 1.0
    direction = np.where(nrm[:, None] > 1e-14, off / np.maximum(nrm, 1e-300)[:, None], side[:, None] * normal)
    q = q.copy()
    q[bad] = proj + clear[bad][:, None] * direction
    return q


def remove_close(points: np.ndarray, anchors: np.ndarray, radius: np.ndarray | float) -> np.ndarray:
    """Drop points closer than radius to any anchor point."""
    if len(points) == 0 or len(anchors) == 0:
        return points
    tree = cKDTree(anchors)
    d, _ = tree.query(points)
    return points[d >= radius]
