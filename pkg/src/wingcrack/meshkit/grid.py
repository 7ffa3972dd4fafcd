"""Conforming triangulations and mixed-dimensional (split) grids."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import GeometryError
from . import cdt
from .geometry import FractureNetwork, Rectangle, point_segment_distance

SNAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Unsplit conforming triangulation; fracture paths are node index chains."""

    domain: Rectangle
    network: FractureNetwork
    nodes: np.ndarray
    tris: np.ndarray
    frac_paths: tuple
    h: float
    params: dict = field(default_factory=dict)

    def size_function(self, rings=()):
        p = self.params
        return make_size_function(
            self.network, self.h, p.get("h_max"), p.get("grade", 0.25), p.get("fine_radius", 0.0), rings
        )

    def tip_lookup(self, tip_id: str):
        """(fracture index, end) of a tip identifier."""
        for k, ids in enumerate(self.network.tip_ids):
            if tip_id in ids:
                return k, ids.index(tip_id)
        raise GeometryError(f"unknown tip {tip_id!r}")

    @cached_property
    def areas(self) -> np.ndarray:
        return cdt.signed_areas(self.nodes, self.tris)

    @cached_property
    def edges(self) -> np.ndarray:
        return cdt.unique_edges(self.tris)

    def edge_set(self) -> set:
        return set(map(tuple, self.edges.tolist()))

    def quality(self) -> np.ndarray:
        return cdt.triangle_quality(self.nodes, self.tris)

    def tip_nodes(self):
        """Yield (tip_id, fracture index, end, node index)."""
        for k, path in enumerate(self.frac_paths):
            ids = self.network.tip_ids[k]
            yield ids[0], k, 0, int(path[0])
            yield ids[1], k, 1, int(path[-1])

    def path_edges(self, k: int) -> np.ndarray:
        p = np.asarray(self.frac_paths[k])
        return np.stack([p[:-1], p[1:]], axis=1)


def check_conformity(tri: Triangulation) -> None:
    """Raise unless every fracture segment is a union of mesh edges."""
    es = tri.edge_set()
    for k, path in enumerate(tri.frac_paths):
        for a, b in zip(path[:-1], path[1:]):
            if (min(a, b), max(a, b)) not in es:
                raise GeometryError(f"fracture {k} edge {a}-{b} is not a mesh edge")
        f = tri.network.fractures[k]
        pp = tri.nodes[np.asarray(path)]
        # every polyline vertex must be a path node, every path node on the polyline
        d = point_segment_distance(pp, f[:-1], f[1:]).min(axis=1)
        if np.any(d > 1e-8 * max(1.0, tri.domain.diameter)):
            raise GeometryError(f"fracture {k} path leaves its polyline")
        dv = point_segment_distance(f, pp[:-1], pp[1:]).min(axis=1)
        if np.any(dv > 1e-8 * max(1.0, tri.domain.diameter)):
            raise GeometryError(f"fracture {k} vertex is not on the face path")


def make_size_function(network: FractureNetwork, h: float, h_max=None, grade=0.25, fine_radius=0.0, rings=()):
    segs, _ = network.segments()

    def size(pts):
        pts = np.atleast_2d(pts)
        out = np.full(len(pts), float(h))
        if h_max is not None and h_max > h:
            if len(segs):
                d = point_segment_distance(pts, segs[:, 0], segs[:, 1]).min(axis=1)
            else:
                d = np.full(len(pts), np.inf)
            out = np.minimum(h_max, h + grade * np.maximum(d - fine_radius, 0.0))
        for tip, r in rings:
            dt = np.linalg.norm(pts - tip, axis=1)
            out = np.minimum(out, 0.8 * r + 0.45 * np.maximum(dt - r, 0.0))
        return out

    return size


def _ring_geometry(poly: np.ndarray, end: int, r: float):
    """Crack points for a tip rosette: the crack vertex at arc distance r behind the tip."""
    pts = poly if end == 1 else poly[::-1]
    tip = pts[-1]
    seg = pts[-1] - pts[-2]
    L = np.linalg.norm(seg)
    if r >= L * (1 - 1e-9):
        raise GeometryError("rosette radius exceeds the last fracture segment")
    back = pts[-1] - seg / L * r
    return tip, back


def triangulate_conforming(
    domain: Rectangle,
    network: FractureNetwork,
    h: float,
    h_max: float | None = None,
    grade: float = 0.25,
    fine_radius: float = 0.0,
    rosettes: dict | None = None,
    n_iter: int = 40,
) -> Triangulation:
    """Graded triangulation whose edges contain every fracture segment.

    ``rosettes`` maps (fracture index, end) to a ring radius; each such tip gets
    eight nodes on a circle with spokes to the tip (quarter-point ring support).
    """
    if not h > 0:
        raise GeometryError("mesh size must be positive")
    network.validate(domain, h)
    rosettes = dict(rosettes or {})
    rings = []
    for (k, end), r in rosettes.items():
        f = network.fractures[k]
        rings.append((f[-1] if end == 1 else f[0], float(r)))
    size = make_size_function(network, h, h_max, grade, fine_radius, rings)

    # boundary points
    corners = domain.corners()
    bpts = [corners]
    for i in range(4):
        bpts.append(cdt.graded_subdivision(corners[i], corners[(i + 1) % 4], size))
    bpts = np.concatenate(bpts)

    # fracture points (ordered per fracture)
    frac_pts = []
    ring_pts = []
    ring_keys = []
    for k, f in enumerate(network.fractures):
        chain = [f[0]]
        vert = [True]
        for a, b in zip(f[:-1], f[1:]):
            sub = cdt.graded_subdivision(a, b, size)
            chain.extend(sub)
            chain.append(b)
            vert.extend([False] * len(sub) + [True])
        chain = np.array(chain)
        vert = np.array(vert)
        for end in (0, 1):
            r = rosettes.get((k, end))
            if r is None:
                continue
            tip, back = _ring_geometry(f, end, r)
            d = np.linalg.norm(chain - tip, axis=1)
            # polyline vertices stay; the ring radius is below the last segment length
            keep = (d > 1.2 * r) | vert
            chain, vert = chain[keep], vert[keep]
            if end == 1:
                chain = np.concatenate([chain[:-1], [back], chain[-1:]])
            else:
                chain = np.concatenate([chain[:1], [back], chain[1:]])
            phi0 = np.arctan2(back[1] - tip[1], back[0] - tip[0])
            ang = phi0 + np.arange(1, 8) * np.pi / 4
            ring_pts.append(tip + r * np.stack([np.cos(ang), np.sin(ang)], axis=1))
            ring_keys.append((k, end))
        frac_pts.append(chain)

    fixed = [bpts] + frac_pts + ring_pts
    fixed = np.concatenate(fixed) if fixed else np.zeros((0, 2))
    # snap coincident fixed points
    uniq, inv = _snap_unique(fixed)
    fixed = uniq

    h_min = float(size(np.concatenate([fixed, domain.corners()])).min())
    free = cdt.lattice_points(domain, size, h_min)
    hf = size(free) if len(free) else np.zeros(0)
    keep = domain.distance_to_boundary(free) > 0.5 * hf
    free, hf = free[keep], hf[keep]
    if len(free):
        from scipy.spatial import cKDTree

        dfix, _ = cKDTree(fixed).query(free)
        keep = dfix > 0.6 * hf
        free, hf = free[keep], hf[keep]
    segs, _ = network.segments()
    if len(free) and len(segs):
        d = point_segment_distance(free, segs[:, 0], segs[:, 1]).min(axis=1)
        keep = d > 0.5 * hf
        free, hf = free[keep], hf[keep]
    for tip, r in rings:
        keep = np.linalg.norm(free - tip, axis=1) > 1.6 * r
        free, hf = free[keep], hf[keep]

    pts = cdt.smooth_points(fixed, free, size, domain, segs if len(segs) else None, n_iter=n_iter)
    for tip, r in rings:
        # keep smoothed points out of rosettes
        d = np.linalg.norm(pts[len(fixed):] - tip, axis=1)
        if np.any(d < 1.2 * r):
            bad = np.where(d < 1.2 * r)[0] + len(fixed)
            pts = np.delete(pts, bad, axis=0)
    tris = cdt.delaunay(pts)

    # index bookkeeping for constraints
    offset = len(bpts)
    paths = []
    cons = []
    pos = offset
    for chain in frac_pts:
        idx = inv[pos: pos + len(chain)]
        pos += len(chain)
        paths.append(np.asarray(idx, dtype=np.int64))
        cons.extend(zip(idx[:-1], idx[1:]))
    ring_start = pos
    for k_ring, (k, end) in enumerate(ring_keys):
        path = paths[k]
        tip = path[-1] if end == 1 else path[0]
        back = path[-2] if end == 1 else path[1]
        ring = [back] + list(inv[ring_start + 7 * k_ring: ring_start + 7 * (k_ring + 1)])
        for i in range(8):
            cons.append((tip, ring[i]))
            cons.append((ring[i], ring[(i + 1) % 8]))
    tris = cdt.recover_constraints(pts, tris, cons)
    params = {"h_max": h_max, "grade": grade, "fine_radius": fine_radius}
    tri = Triangulation(domain, network, pts, tris, tuple(paths), float(h), params)
    _validate_triangulation(tri)
    return tri


def _snap_unique(points: np.ndarray, tol: float = SNAP_TOL):
    """Merge points closer than tol; return unique points and inverse map (first wins)."""
    from scipy.spatial import cKDTree

    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))
    for i, j in sorted(map(tuple, pairs.tolist())):
        a, b = min(i, j), max(i, j)
        while parent[a] != a:
            a = parent[a]
        parent[b] = a
    for i in range(len(points)):
        r = i
        while parent[r] != r:
            r = parent[r]
        parent[i] = r
    roots, inv = np.unique(parent, return_inverse=True)
    return points[roots], inv


def _validate_triangulation(tri: Triangulation) -> None:
    a = tri.areas
    if np.any(a <= 0):
        raise GeometryError("triangulation has non-positive areas")
    if abs(a.sum() - tri.domain.area) > 1e-9 * tri.domain.area:
        raise GeometryError(
            f"triangulation covers {a.sum():.12g} m^2, domain is {tri.domain.area:.12g} m^2"
        )
    check_conformity(tri)


# ----------------------------------------------------------------------------
# splitting


@dataclass(frozen=True, eq=False)
class MixedDimGrid:
    """Split matrix grid plus 1D fracture grids and interface (face) maps.

    Face kinds: 0 interior, 1 outer boundary, 2 fracture side. Each fracture
    cell owns one face on its + side (left of the path direction) and one on
    its - side.
    """

    base: Triangulation
    nodes: np.ndarray
    node_parent: np.ndarray
    cells: np.ndarray
    face_nodes: np.ndarray
    face_cells: np.ndarray
    face_kind: np.ndarray
    face_side: np.ndarray
    face_frac_cell: np.ndarray
    face_frac_side: np.ndarray
    cell_faces: np.ndarray
    fc_frac: np.ndarray
    fc_nodes: np.ndarray
    fc_face_plus: np.ndarray
    fc_face_minus: np.ndarray
    frac_offsets: np.ndarray
    kept_cells: dict = field(default_factory=dict)

    # -- geometry ---------------------------------------------------------
    @property
    def domain(self) -> Rectangle:
        return self.base.domain

    @property
    def network(self) -> FractureNetwork:
        return self.base.network

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_faces(self) -> int:
        return len(self.face_nodes)

    @property
    def num_frac_cells(self) -> int:
        return len(self.fc_frac)

    @cached_property
    def cell_areas(self) -> np.ndarray:
        return cdt.signed_areas(self.nodes, self.cells)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.nodes[self.cells].mean(axis=1)

    @cached_property
    def face_centers(self) -> np.ndarray:
        return self.nodes[self.face_nodes].mean(axis=1)

    @cached_property
    def face_lengths(self) -> np.ndarray:
        d = self.nodes[self.face_nodes[:, 1]] - self.nodes[self.face_nodes[:, 0]]
        return np.linalg.norm(d, axis=1)

    @cached_property
    def cell_face_normals(self) -> np.ndarray:
        """Outward unit normals (T,3,2) for local face j = edge (v_j, v_{j+1})."""
        p = self.nodes[self.cells]
        d = np.roll(p, -1, axis=1) - p
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @cached_property
    def fc_lengths(self) -> np.ndarray:
        x = self.base.nodes
        return np.linalg.norm(x[self.fc_nodes[:, 1]] - x[self.fc_nodes[:, 0]], axis=1)

    @cached_property
    def fc_centers(self) -> np.ndarray:
        return self.base.nodes[self.fc_nodes].mean(axis=1)

    @cached_property
    def fc_tangents(self) -> np.ndarray:
        x = self.base.nodes
        d = x[self.fc_nodes[:, 1]] - x[self.fc_nodes[:, 0]]
        return d / np.linalg.norm(d, axis=1)[:, None]

    @cached_property
    def fc_normals(self) -> np.ndarray:
        """Unit normal pointing into the + side (left of the path direction)."""
        t = self.fc_tangents
        return np.stack([-t[:, 1], t[:, 0]], axis=1)

    @cached_property
    def frac_neighbors(self) -> np.ndarray:
        """Adjacent fracture-cell pairs (M,2) within each fracture."""
        pairs = []
        for k in range(len(self.frac_offsets) - 1):
            a, b = self.frac_offsets[k], self.frac_offsets[k + 1]
            idx = np.arange(a, b)
            pairs.append(np.stack([idx[:-1], idx[1:]], axis=1))
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.concatenate(pairs).astype(np.int64)

    def frac_cells(self, k: int) -> np.ndarray:
        return np.arange(self.frac_offsets[k], self.frac_offsets[k + 1])

    def tips(self):
        """Yield (tip_id, fracture, end, base node index, coordinate)."""
        for tid, k, end, v in self.base.tip_nodes():
            yield tid, k, end, v, self.base.nodes[v].copy()

    def node_cells(self):
        """CSR-style (indptr, cell indices) of split node -> incident cells."""
        flat = self.cells.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=len(self.nodes))
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, order // 3

    def locate(self, pts, tol: float = 1e-12):
        """Parent cell and barycentric coordinates for each point.

        Points exactly on a fracture get the + side cell. Raises for points
        outside every cell.
        """
        return locate_points(self.nodes, self.cells, pts, tol)

    def check(self) -> None:
        """Assert the structural invariants."""
        if np.any(self.cell_areas <= 0):
            raise GeometryError("non-positive cell area")
        interior_path_nodes = sum(max(len(p) - 2, 0) for p in self.base.frac_paths)
        if len(self.nodes) - len(self.base.nodes) != interior_path_nodes:
            raise GeometryError("duplicated-node count mismatch")
        fr = self.face_kind == 2
        if np.any(self.face_cells[fr, 1] != -1) or np.any(self.face_frac_cell[fr] < 0):
            raise GeometryError("fracture face without a unique partner")
        if self.num_frac_cells:
            both = np.concatenate([self.fc_face_plus, self.fc_face_minus])
            if len(np.unique(both)) != 2 * self.num_frac_cells:
                raise GeometryError("interface faces are shared between fracture cells")
        check_conformity(self.base)


def locate_points(nodes, cells, pts, tol=1e-12):
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    centers = nodes[cells].mean(axis=1)
    tree = cKDTree(centers)
    k = min(len(cells), 16)
    _, cand = tree.query(pts, k=k)
    cand = np.atleast_2d(cand)
    if cand.shape[0] != len(pts):
        cand = cand.T
    owner = np.full(len(pts), -1, dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    todo = np.arange(len(pts))
    for j in range(cand.shape[1]):
        if len(todo) == 0:
            break
        c = cand[todo, j]
        lam = barycentric(nodes[cells[c]], pts[todo])
        ok = lam.min(axis=1) >= -tol
        owner[todo[ok]] = c[ok]
        bary[todo[ok]] = lam[ok]
        todo = todo[~ok]
    if len(todo):
        # brute force for stragglers
        for i in todo:
            lam = barycentric(nodes[cells], np.repeat(pts[i][None], len(cells), axis=0))
            ok = np.where(lam.min(axis=1) >= -tol)[0]
            if len(ok) == 0:
                raise GeometryError(f"point {pts[i]} lies outside every cell")
            owner[i] = ok[0]
            bary[i] = lam[ok[0]]
    return owner, bary


def barycentric(tri_pts: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of pts (P,2) in triangles (P,3,2)."""
    x1, y1 = tri_pts[:, 0, 0], tri_pts[:, 0, 1]
    x2, y2 = tri_pts[:, 1, 0], tri_pts[:, 1, 1]
    x3, y3 = tri_pts[:, 2, 0], tri_pts[:, 2, 1]
    two_a = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    x, y = pts[:, 0], pts[:, 1]
    n1 = ((y2 - y3) * x + (x3 - x2) * y + x2 * y3 - x3 * y2) / two_a
    n2 = ((y3 - y1) * x + (x1 - x3) * y + x3 * y1 - x1 * y3) / two_a
    n3 = ((y1 - y2) * x + (x2 - x1) * y + x1 * y2 - x2 * y1) / two_a
    return np.stack([n1, n2, n3], axis=1)


def _angle_ccw(ref, v):
    a = np.arctan2(v[..., 1], v[..., 0]) - np.arctan2(ref[1], ref[0])
    return np.mod(a, 2 * np.pi)


def split_along_fractures(tri: Triangulation, kept_cells: dict | None = None) -> MixedDimGrid:
    """Duplicate interior fracture-path nodes and fracture faces."""
    check_conformity(tri)
    nodes = tri.nodes
    tris = tri.tris
    nn = len(nodes)
    cells = tris.copy()

    flat = tris.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=nn)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    centroids = nodes[tris].mean(axis=1)

    new_nodes = []
    parent = list(range(nn))
    for path in tri.frac_paths:
        for i in range(1, len(path) - 1):
            v = path[i]
            d_next = nodes[path[i + 1]] - nodes[v]
            d_prev = nodes[path[i - 1]] - nodes[v]
            span = _angle_ccw(d_next, d_prev)
            inc = order[indptr[v]: indptr[v + 1]] // 3
            ang = _angle_ccw(d_next, centroids[inc] - nodes[v])
            right = ~((ang > 0) & (ang < span))
            dup = nn + len(new_nodes)
            new_nodes.append(nodes[v])
            parent.append(v)
            for c in inc[right]:
                cells[c][cells[c] == v] = dup
    split_nodes = np.concatenate([nodes, np.array(new_nodes).reshape(-1, 2)])
    node_parent = np.array(parent, dtype=np.int64)

    # fracture edge lookup: key -> (fracture cell index, a, b) in path order
    frac_edge = {}
    fc_frac, fc_nodes = [], []
    offsets = [0]
    for k, path in enumerate(tri.frac_paths):
        for a, b in zip(path[:-1], path[1:]):
            frac_edge[(min(a, b), max(a, b))] = (len(fc_nodes), a, b)
            fc_frac.append(k)
            fc_nodes.append((a, b))
        offsets.append(len(fc_nodes))
    nfc = len(fc_nodes)

    # cell-local edges (v_j, v_{j+1}) in base numbering
    T = len(tris)
    loc = np.stack([tris, np.roll(tris, -1, axis=1)], axis=-1).reshape(-1, 2)
    keys = np.sort(loc, axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    # edges with their incident (cell*3 + local)
    order_e = np.argsort(inv, kind="stable")
    cnt = np.bincount(inv, minlength=len(uniq))
    ptr = np.concatenate([[0], np.cumsum(cnt)])

    face_nodes, face_cells, face_kind, face_frac_cell, face_frac_side = [], [], [], [], []
    cell_faces = np.full((T, 3), -1, dtype=np.int64)
    fc_plus = np.full(nfc, -1, dtype=np.int64)
    fc_minus = np.full(nfc, -1, dtype=np.int64)
    split_loc = np.stack([cells, np.roll(cells, -1, axis=1)], axis=-1).reshape(-1, 2)
    for e in range(len(uniq)):
        inc = order_e[ptr[e]: ptr[e + 1]]
        key = (int(uniq[e, 0]), int(uniq[e, 1]))
        if key in frac_edge:
            ci, a, b = frac_edge[key]
            if len(inc) != 2:
                raise GeometryError("fracture edge on the outer boundary")
            for li in inc:
                c, j = divmod(int(li), 3)
                third = tris[c][(j + 2) % 3]
                ab = nodes[b] - nodes[a]
                w = nodes[third] - nodes[a]
                side = 1 if ab[0] * w[1] - ab[1] * w[0] > 0 else -1
                f = len(face_nodes)
                face_nodes.append(split_loc[li])
                face_cells.append((c, -1))
                face_kind.append(2)
                face_frac_cell.append(ci)
                face_frac_side.append(side)
                cell_faces[c, j] = f
                if side > 0:
                    fc_plus[ci] = f
                else:
                    fc_minus[ci] = f
            continue
        f = len(face_nodes)
        c0, j0 = divmod(int(inc[0]), 3)
        face_nodes.append(split_loc[inc[0]])
        cell_faces[c0, j0] = f
        if len(inc) == 2:
            c1, j1 = divmod(int(inc[1]), 3)
            cell_faces[c1, j1] = f
            face_cells.append((c0, c1))
            face_kind.append(0)
        else:
            face_cells.append((c0, -1))
            face_kind.append(1)
        face_frac_cell.append(-1)
        face_frac_side.append(0)
    face_nodes = np.array(face_nodes, dtype=np.int64).reshape(-1, 2)
    face_kind = np.array(face_kind, dtype=np.int64)
    mids = split_nodes[face_nodes].mean(axis=1)
    side_tag = tri.domain.side_of(mids, 1e-9 * tri.domain.diameter)
    side_tag[face_kind != 1] = -1
    if np.any((face_kind == 1) & (side_tag < 0)):
        raise GeometryError("boundary face not on the domain boundary")
    if np.any(fc_plus < 0) or np.any(fc_minus < 0):
        raise GeometryError("fracture cell is missing an interface face")

    return MixedDimGrid(
        base=tri,
        nodes=split_nodes,
        node_parent=node_parent,
        cells=cells,
        face_nodes=face_nodes,
        face_cells=np.array(face_cells, dtype=np.int64).reshape(-1, 2),
        face_kind=face_kind,
        face_side=side_tag,
        face_frac_cell=np.array(face_frac_cell, dtype=np.int64),
        face_frac_side=np.array(face_frac_side, dtype=np.int64),
        cell_faces=cell_faces,
        fc_frac=np.array(fc_frac, dtype=np.int64),
        fc_nodes=np.array(fc_nodes, dtype=np.int64).reshape(-1, 2),
        fc_face_plus=fc_plus,
        fc_face_minus=fc_minus,
        frac_offsets=np.array(offsets, dtype=np.int64),
        kept_cells=dict(kept_cells or {}),
    )


def build_grid(domain, network, h, **kwargs) -> MixedDimGrid:
    """Triangulate and split in one call."""
    return split_along_fractures(triangulate_conforming(domain, network, h, **kwargs))
