"""Tip-local rosette remeshing and fracture extension on unsplit triangulations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError
from . import cdt
from .geometry import point_segment_distance
from .grid import Triangulation, barycentric, check_conformity

FAN_NODES = 8
SMOOTH_SWEEPS = 5
SMOOTH_RELAX = 0.6


@dataclass(frozen=True, eq=False)
class RemeshRegion:
    center: np.ndarray
    radius: float
    target_h: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("remesh radius must be positive")


@dataclass(frozen=True, eq=False)
class RemeshResult:
    tri: Triangulation
    region: RemeshRegion
    kept: np.ndarray  # kept[i] = old triangle index of new triangle i (i < len(kept))
    removed: np.ndarray  # old triangles replaced by the local retriangulation
    node_map: np.ndarray  # old node index -> new index (-1 when dropped)


def tip_direction(tri: Triangulation, k: int, end: int) -> np.ndarray:
    f = tri.network.fractures[k]
    d = f[-1] - f[-2] if end == 1 else f[0] - f[1]
    return d / np.linalg.norm(d)


def new_tip_point(tri: Triangulation, tip_id: str, theta0: float, length: float) -> np.ndarray:
    k, end = tri.tip_lookup(tip_id)
    d = tip_direction(tri, k, end)
    c, s = np.cos(theta0), np.sin(theta0)
    dn = np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])
    x = tri.network.fractures[k][-1 if end == 1 else 0]
    return x + length * dn


def laplacian_smooth(nodes, tris, movable, sweeps=SMOOTH_SWEEPS, relax=SMOOTH_RELAX, max_halvings=20):
    """Relaxed Laplacian smoothing; moves that invert a triangle are reverted and retried at half relaxation."""
    nodes = nodes.copy()
    movable = np.asarray(movable, dtype=np.int64)
    if len(movable) == 0:
        return nodes
    edges = cdt.unique_edges(tris)
    nbrs = {int(v): [] for v in movable}
    for a, b in edges.tolist():
        if a in nbrs:
            nbrs[a].append(b)
        if b in nbrs:
            nbrs[b].append(a)
    inc = {int(v): [] for v in movable}
    for t, tr in enumerate(tris.tolist()):
        for v in tr:
            if v in inc:
                inc[v].append(t)
    omega = {int(v): relax for v in movable}
    for _ in range(sweeps):
        for v in movable.tolist():
            target = nodes[nbrs[v]].mean(axis=0)
            old = nodes[v].copy()
            w = omega[v]
            for _h in range(max_halvings):
                nodes[v] = old + w * (target - old)
                if np.all(cdt.signed_areas(nodes, tris[inc[v]]) > 0):
                    break
                nodes[v] = old
                w *= 0.5
            else:
                nodes[v] = old
            omega[v] = w
    if np.any(cdt.signed_areas(nodes, tris) <= 0):
        raise GeometryError("smoothing left an inverted triangle")
    return nodes


def _in_union(pts, nodes, tris, tol=1e-12):
    """Points lying inside the union of the given triangles."""
    inside = np.zeros(len(pts), dtype=bool)
    if len(pts) == 0:
        return inside
    tp = nodes[tris]
    for i in range(0, len(tris), 256):
        block = tp[i: i + 256]
        for j in range(len(block)):
            lam = barycentric(np.repeat(block[j][None], len(pts), axis=0), pts)
            inside |= lam.min(axis=1) >= -tol
    return inside


def rosette_remesh(
    tri: Triangulation,
    tip_id: str,
    theta0: float,
    length: float,
    target_h: float,
    l_max: float,
) -> RemeshResult:
    """Retriangulate the disk of radius 5*l_max around a tip so the kink segment lies on edges.

    The new segment runs from the tip at angle theta0 (radians, counter-clockwise
    from the current tip direction) for ``length`` metres. The fracture itself is
    not extended; see :func:`extend_fracture`.
    """
    if not (target_h > 0 and l_max > 0):
        raise GeometryError("target_h and l_max must be positive")
    k, end = tri.tip_lookup(tip_id)
    path = tri.frac_paths[k]
    tip_node = int(path[-1] if end == 1 else path[0])
    X = tri.nodes[tip_node]
    radius = 5.0 * l_max
    region = RemeshRegion(X.copy(), radius, float(target_h))
    P = new_tip_point(tri, tip_id, theta0, length)
    if not tri.domain.contains(P[None])[0] or tri.domain.distance_to_boundary(P[None])[0] <= 0:
        raise GeometryError(f"extension of {tip_id} leaves the domain")

    nodes, tris = tri.nodes, tri.tris
    d_node = np.linalg.norm(nodes - X, axis=1)
    cav = np.any(d_node[tris] < radius, axis=1)
    # triangles crossed by the new segment must be in the cavity too
    if length > 0:
        cen = nodes[tris].mean(axis=1)
        near = np.linalg.norm(cen - X, axis=1) < length + 4 * target_h
        cav |= near
    removed = np.where(cav)[0]
    keep = np.where(~cav)[0]
    ctris = tris[removed]

    # cavity boundary edges: edges used once by cavity triangles
    loc = np.concatenate([ctris[:, [0, 1]], ctris[:, [1, 2]], ctris[:, [2, 0]]])
    key = np.sort(loc, axis=1)
    uk, cnt = np.unique(key, axis=0, return_counts=True)
    bedges = uk[cnt == 1]
    # fracture path edges inside the cavity (all fractures)
    es = set(map(tuple, uk.tolist()))
    fedges = []
    frac_nodes = set()
    for kk, pth in enumerate(tri.frac_paths):
        for a, b in zip(pth[:-1], pth[1:]):
            e = (min(a, b), max(a, b))
            if e in es:
                fedges.append(e)
                frac_nodes.update(e)
    keep_nodes = set(np.unique(bedges).tolist()) | frac_nodes | {tip_node}
    # segment from tip to P
    chain = []
    if length > 0:
        n = max(1, int(round(length / target_h)))
        chain = [X + (P - X) * i / n for i in range(1, n + 1)]
    chain = np.array(chain).reshape(-1, 2)

    # fan of rosette nodes around the tip, oriented along the kink direction
    d = (P - X) / max(np.linalg.norm(P - X), 1e-300) if length > 0 else tip_direction(tri, k, end)
    phi = np.arctan2(d[1], d[0]) + np.arange(FAN_NODES) * 2 * np.pi / FAN_NODES
    fan = X + target_h * np.stack([np.cos(phi), np.sin(phi)], axis=1)

    kept_idx = np.array(sorted(keep_nodes), dtype=np.int64)
    kept_pts = nodes[kept_idx]
    # segments that new points must keep clear of
    segs = [nodes[np.array(e)] for e in fedges]
    if len(chain):
        cc = np.concatenate([X[None], chain])
        segs += [np.stack([cc[i], cc[i + 1]]) for i in range(len(chain))]
    segs = np.array(segs).reshape(-1, 2, 2)

    anchor = np.concatenate([kept_pts, chain])
    size_base = tri.size_function()

    def size(pts):
        return np.minimum(size_base(pts), np.maximum(target_h, target_h + 0.5 * (np.linalg.norm(pts - X, axis=1) - target_h)))

    def admissible(pts, hp):
        ok = _in_union(pts, nodes, ctris, tol=-1e-9)
        ok &= tri.domain.distance_to_boundary(pts) > 0.4 * hp
        if len(anchor):
            from scipy.spatial import cKDTree

            dd, _ = cKDTree(anchor).query(pts)
            ok &= dd > 0.55 * hp
        if len(segs):
            ok &= point_segment_distance(pts, segs[:, 0], segs[:, 1]).min(axis=1) > 0.45 * hp
        return ok

    fan = fan[admissible(fan, np.full(len(fan), target_h))]
    anchor = np.concatenate([anchor, fan])
    lo = X - radius - 2 * target_h
    hi = X + radius + 2 * target_h
    from .geometry import Rectangle

    box = Rectangle(
        max(lo[0], tri.domain.xmin), max(lo[1], tri.domain.ymin), min(hi[0], tri.domain.xmax), min(hi[1], tri.domain.ymax)
    )
    cpts = nodes[np.unique(ctris)]
    h_min = float(size(np.concatenate([cpts, X[None]])).min())
    fill = cdt.lattice_points(box, size, h_min)
    if len(fill):
        fill = fill[admissible(fill, size(fill))]

    local = np.concatenate([kept_pts, chain, fan, fill])
    nk, nc = len(kept_pts), len(chain)
    lt = cdt.delaunay(local)
    gid = {int(g): i for i, g in enumerate(kept_idx)}
    cons = [(gid[a], gid[b]) for a, b in bedges.tolist()]
    cons += [(gid[a], gid[b]) for a, b in fedges]
    chain_local = [gid[tip_node]] + list(range(nk, nk + nc))
    cons += list(zip(chain_local[:-1], chain_local[1:]))
    lt = cdt.recover_constraints(local, lt, cons)
    cen = local[lt].mean(axis=1)
    lt = lt[_in_union(cen, nodes, ctris, tol=1e-10)]
    area_old = cdt.signed_areas(nodes, ctris).sum()
    area_new = cdt.signed_areas(local, lt).sum()
    if abs(area_new - area_old) > 1e-9 * area_old:
        raise GeometryError(f"rosette cavity not covered: {area_new:.12g} vs {area_old:.12g}")

    # smoothing of the new free nodes only
    movable = np.arange(nk + nc, len(local))
    local = laplacian_smooth(local, lt, movable)
    # smoothing moves nodes; restore the Delaunay property of the free edges
    lt2 = cdt.recover_constraints(local, cdt.delaunay(local), cons)
    lt2 = lt2[_in_union(local[lt2].mean(axis=1), nodes, ctris, tol=1e-10)]
    if abs(cdt.signed_areas(local, lt2).sum() - area_old) <= 1e-9 * area_old:
        lt = lt2

    # assemble global arrays: surviving old nodes keep their coordinates bitwise
    used = np.zeros(len(nodes), dtype=bool)
    used[tris[keep].ravel()] = True
    used[kept_idx] = True
    node_map = np.full(len(nodes), -1, dtype=np.int64)
    old_ids = np.where(used)[0]
    node_map[old_ids] = np.arange(len(old_ids))
    extra = local[nk:]
    new_nodes = np.concatenate([nodes[old_ids], extra])
    l2g = np.concatenate([node_map[kept_idx], len(old_ids) + np.arange(len(extra))])
    new_tris = np.concatenate([node_map[tris[keep]], l2g[lt]])
    paths = tuple(node_map[np.asarray(p)] for p in tri.frac_paths)
    if any(np.any(p < 0) for p in paths):
        raise GeometryError("remeshing dropped a fracture node")
    out = Triangulation(tri.domain, tri.network, new_nodes, new_tris, paths, tri.h, dict(tri.params))
    if np.any(out.areas <= 0):
        raise GeometryError("rosette remesh produced an inverted triangle")
    check_conformity(out)
    return RemeshResult(out, region, keep, removed, node_map)


def extend_fracture(tri: Triangulation, tip_id: str, theta0: float, length: float) -> Triangulation:
    """Append one straight segment to a fracture whose path already lies on mesh edges."""
    if length == 0:
        return tri
    if length < 0:
        raise GeometryError("extension length must be non-negative")
    k, end = tri.tip_lookup(tip_id)
    P = new_tip_point(tri, tip_id, theta0, length)
    if tri.domain.distance_to_boundary(P[None])[0] <= 0:
        raise GeometryError(f"extension of {tip_id} leaves the domain")
    path = np.asarray(tri.frac_paths[k])
    tip_node = int(path[-1] if end == 1 else path[0])
    X = tri.nodes[tip_node]
    tol = 1e-9 * max(1.0, length)
    dist = point_segment_distance(tri.nodes, X, P)[:, 0]
    on = np.where(dist <= tol)[0]
    s = (tri.nodes[on] - X) @ (P - X) / length**2
    order = np.argsort(s)
    on, s = on[order], s[order]
    if len(on) == 0 or on[0] != tip_node or abs(s[-1] - 1.0) > 1e-9:
        raise GeometryError(f"segment from {tip_id} is not resolved by mesh nodes")
    es = tri.edge_set()
    for a, b in zip(on[:-1], on[1:]):
        if (min(a, b), max(a, b)) not in es:
            raise GeometryError(f"segment from {tip_id} is not a chain of mesh edges")
    f = tri.network.fractures[k]
    if end == 1:
        f_new = np.concatenate([f, P[None]])
        p_new = np.concatenate([path, on[1:]])
    else:
        f_new = np.concatenate([P[None], f])
        p_new = np.concatenate([on[1:][::-1], path])
    net = tri.network.replace(k, f_new)
    net.validate(tri.domain)
    paths = list(tri.frac_paths)
    paths[k] = p_new.astype(np.int64)
    out = Triangulation(tri.domain, net, tri.nodes, tri.tris, tuple(paths), tri.h, dict(tri.params))
    check_conformity(out)
    return out
