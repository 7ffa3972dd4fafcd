"""Tip-centred microdomains and their P2 elasticity solves."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import GeometryError, LinearSolverError
from ..meshkit.geometry import FractureNetwork, Rectangle, polyline_length
from ..meshkit.grid import MixedDimGrid, split_along_fractures, triangulate_conforming
from .fem import Constraints, P2Mesh, build_p2, elasticity_matrix, solve_constrained

# cut fracture ends stay this many micro cells inside the microdomain
CUT_MARGIN = 2.0
# near-tip faces within max(FREE_ZONE_H * ΔH, FREE_ZONE_CELLS * Δh) are loaded by traction, not by the jump
FREE_ZONE_H = 0.5
FREE_ZONE_CELLS = 2.0
# penalty stiffness (times E) and iteration cap of the crack-face contact
CONTACT_PENALTY = 1e3
CONTACT_MAX_ITER = 30


@dataclass(frozen=True)
class Elastic:
    E: float
    nu: float
    alpha: float = 1.0
    mu_s: float = 0.0  # friction on crack faces grown at the microscale

    @property
    def D(self) -> np.ndarray:
        return elasticity_matrix(self.E, self.nu)


@dataclass(frozen=True, eq=False)
class MicroBCs:
    """Boundary data of one micro solve.

    displacement(points) -> (P,2) on the outer boundary; jump(k, points) ->
    (P,2) prescribed ⟦u⟧ = u+ - u- along macro fracture k; traction(k, points)
    -> (P,2) on the + face of free crack parts (the - face gets the opposite).
    """

    displacement: Callable
    jump: Callable | None = None
    traction: Callable | None = None


@dataclass(frozen=True, eq=False)
class MicroDomain:
    tip_id: str
    box: Rectangle
    network: FractureNetwork
    source: tuple  # macro fracture index of each local fracture
    true_ends: tuple  # per local fracture: (start is a real tip, end is a real tip)
    n_orig: tuple  # vertices of each local fracture that belong to the macro geometry
    tip_key: tuple  # (local fracture, end) of the tip of interest
    dh: float
    free_len: float
    elastic: Elastic
    grid: MixedDimGrid
    mesh: P2Mesh
    pressure: Callable | None = None
    mesh_opts: dict = field(default_factory=dict)

    @property
    def tip(self) -> np.ndarray:
        k, end = self.tip_key
        f = self.network.fractures[k]
        return f[-1] if end == 1 else f[0]

    @property
    def tip_node(self) -> int:
        k, end = self.tip_key
        p = self.grid.base.frac_paths[k]
        return int(p[-1] if end == 1 else p[0])

    def tip_direction(self) -> np.ndarray:
        k, end = self.tip_key
        f = self.network.fractures[k]
        d = f[-1] - f[-2] if end == 1 else f[0] - f[1]
        return d / np.linalg.norm(d)

    def extension(self) -> np.ndarray:
        """Polyline grown beyond the macro tip, starting at the macro tip."""
        k, end = self.tip_key
        f = self.network.fractures[k]
        m = len(f) - self.n_orig[k]
        if end == 1:
            return f[len(f) - 1 - m:].copy()
        return f[: m + 1][::-1].copy()

    def extension_length(self) -> float:
        e = self.extension()
        return polyline_length(e) if len(e) > 1 else 0.0


# ----------------------------------------------------------------------------
# geometry


def clip_polyline(pts: np.ndarray, box: Rectangle):
    """Pieces of a polyline inside a box: list of (points, start_cut, end_cut)."""
    pieces = []
    cur = None
    lo = np.array([box.xmin, box.ymin])
    hi = np.array([box.xmax, box.ymax])
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        t0, t1 = 0.0, 1.0
        ok = True
        for i in range(2):
            if d[i] == 0.0:
                if a[i] < lo[i] or a[i] > hi[i]:
                    ok = False
                continue
            ta, tb = (lo[i] - a[i]) / d[i], (hi[i] - a[i]) / d[i]
            t0, t1 = max(t0, min(ta, tb)), min(t1, max(ta, tb))
        if not ok or t1 <= t0:
            if cur is not None:
                pieces.append(cur)
                cur = None
            continue
        p, q = a + t0 * d, a + t1 * d
        if cur is None:
            cur = [[p, q], t0 > 0.0, False]
        else:
            cur[0].append(q)
        if t1 < 1.0:
            cur[2] = True
            pieces.append(cur)
            cur = None
    if cur is not None:
        pieces.append(cur)
    return [(np.array(p), s, e) for p, s, e in pieces]


def _ring_radius(f: np.ndarray, end: int, dh: float) -> float:
    seg = f[-1] - f[-2] if end == 1 else f[0] - f[1]
    return min(0.5 * dh, 0.9 * float(np.linalg.norm(seg)))


def mesh_micro(box, network, tip_key, dh, h_max=None, grade=0.3, fine_radius=None):
    k, end = tip_key
    r = _ring_radius(network.fractures[k], end, dh)
    if h_max is None:
        h_max = max(dh, min(0.1 * box.diameter, 20.0 * dh))
    if fine_radius is None:
        fine_radius = 4.0 * dh
    tri = triangulate_conforming(
        box, network, dh, h_max=h_max, grade=grade, fine_radius=fine_radius, rosettes={(k, end): r}
    )
    grid = split_along_fractures(tri)
    tip = int(tri.frac_paths[k][-1] if end == 1 else tri.frac_paths[k][0])
    return grid, build_p2(grid, quarter_tip=tip)


def make_micro_domain(
    box: Rectangle,
    network: FractureNetwork,
    tip_key,
    dh: float,
    elastic: Elastic,
    *,
    tip_id: str | None = None,
    source=None,
    true_ends=None,
    n_orig=None,
    free_len: float | None = None,
    pressure=None,
    **mesh_opts,
) -> MicroDomain:
    """Mesh a microdomain around the tip (local fracture, end) of ``network``."""
    if not dh > 0:
        raise GeometryError("micro mesh size must be positive")
    k, end = tip_key
    tip = network.fractures[k][-1 if end == 1 else 0]
    if float(box.distance_to_boundary(tip[None])[0]) <= dh:
        raise GeometryError("fracture tip lies within one micro cell of the microdomain boundary; increase l")
    nf = len(network)
    source = tuple(range(nf)) if source is None else tuple(source)
    true_ends = tuple((True, True) for _ in range(nf)) if true_ends is None else tuple(true_ends)
    n_orig = tuple(len(f) for f in network.fractures) if n_orig is None else tuple(n_orig)
    free_len = FREE_ZONE_CELLS * dh if free_len is None else float(free_len)
    grid, mesh = mesh_micro(box, network, tip_key, dh, **mesh_opts)
    tid = tip_id if tip_id is not None else network.tip_ids[k][end]
    return MicroDomain(
        tid, box, network, source, true_ends, n_orig, (k, end), float(dh), free_len,
        elastic, grid, mesh, pressure, dict(mesh_opts),
    )


def extend_micro_domain(dom: MicroDomain, theta0: float, length: float) -> MicroDomain:
    """Grow the tip of interest by a straight segment (θ0 counter-clockwise from the tip direction)."""
    if not length > 0:
        raise GeometryError("extension length must be positive")
    d = dom.tip_direction()
    c, s = np.cos(theta0), np.sin(theta0)
    dn = np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])
    new_tip = dom.tip + length * dn
    if float(dom.box.distance_to_boundary(new_tip[None])[0]) <= dom.dh:
        raise GeometryError("micro crack reaches the microdomain boundary; increase l")
    k, end = dom.tip_key
    f = dom.network.fractures[k]
    f = np.concatenate([f, new_tip[None]]) if end == 1 else np.concatenate([new_tip[None], f])
    net = dom.network.replace(k, f)
    net.validate(dom.box, dom.dh)
    return make_micro_domain(
        dom.box, net, dom.tip_key, dom.dh, dom.elastic, tip_id=dom.tip_id, source=dom.source,
        true_ends=dom.true_ends, n_orig=dom.n_orig, free_len=dom.free_len, pressure=dom.pressure,
        **dom.mesh_opts,
    )


def build_micro_domain(
    grid, state, tip_id: str, l: float, eps_m: float, elastic: Elastic, extension=None, **mesh_opts
):
    """Microdomain of size l x l centred on a macro tip, meshed at Δh = ε_m ΔH.

    Macro fractures are clipped to the box; ends cut by the box stay
    CUT_MARGIN micro cells inside it and carry the prescribed jump.
    ``extension`` is uncommitted micro growth (polyline starting at the
    macro tip) re-attached to the tip.
    """
    if not l > 0:
        raise GeometryError("microdomain size must be positive")
    if not 0 < eps_m <= 1:
        raise GeometryError("eps_m must lie in (0, 1]")
    dH = grid.base.h
    dh = eps_m * dH
    k_tip, end_tip = grid.base.tip_lookup(tip_id)
    net = grid.network
    tip = net.fractures[k_tip][-1 if end_tip == 1 else 0]
    box = Rectangle(tip[0] - l / 2, tip[1] - l / 2, tip[0] + l / 2, tip[1] + l / 2).clip(grid.domain)
    inner = Rectangle(
        box.xmin + CUT_MARGIN * dh, box.ymin + CUT_MARGIN * dh,
        box.xmax - CUT_MARGIN * dh, box.ymax - CUT_MARGIN * dh,
    )
    ext = None
    if extension is not None and len(extension) > 1:
        ext = np.asarray(extension, dtype=float)
        if np.linalg.norm(ext[0] - tip) > 1e-9:
            raise GeometryError(f"uncommitted extension of {tip_id} does not start at the tip")
        if not np.all(inner.contains(ext[1:])):
            raise GeometryError(f"uncommitted extension of {tip_id} leaves the microdomain; increase l")
    fracs, tips, source, true_ends, n_orig = [], [], [], [], []
    tip_key = None
    for k, f in enumerate(net.fractures):
        n_ext = 0
        if k == k_tip and ext is not None:
            n_ext = len(ext) - 1
            f = np.concatenate([f, ext[1:]]) if end_tip == 1 else np.concatenate([ext[1:][::-1], f])
        for pts, cut0, cut1 in clip_polyline(f, inner):
            if (cut0 or cut1) and polyline_length(pts) < 2 * dh:
                continue
            # drop vertices that nearly coincide with a cut point
            keep = np.ones(len(pts), dtype=bool)
            for i in range(1, len(pts) - 1):
                if np.linalg.norm(pts[i] - pts[i - 1]) < 1e-9 or np.linalg.norm(pts[i] - pts[i + 1]) < 1e-9:
                    keep[i] = False
            pts = pts[keep]
            ids = (
                f"{net.tip_ids[k][0]}~cut" if cut0 else net.tip_ids[k][0],
                f"{net.tip_ids[k][1]}~cut" if cut1 else net.tip_ids[k][1],
            )
            here = 0
            if k == k_tip and not (cut0 if end_tip == 0 else cut1):
                want = ext[-1] if ext is not None else tip
                if np.linalg.norm(pts[-1 if end_tip == 1 else 0] - want) < 1e-12:
                    tip_key = (len(fracs), end_tip)
                    here = n_ext
            n_orig.append(len(pts) - here)
            fracs.append(pts)
            tips.append(ids)
            source.append(k)
            true_ends.append((not cut0, not cut1))
    if tip_key is None:
        raise GeometryError(
            f"tip {tip_id} lost from its microdomain: its fracture is cut within {CUT_MARGIN} micro cells "
            "of the box or too short after clipping; increase l"
        )
    local = FractureNetwork(tuple(fracs), tuple(tips))
    from ..coupler.transfer import pressure_field

    pressure = pressure_field(grid, state.p, state.p_face) if state is not None else None
    free_len = max(FREE_ZONE_H * dH, FREE_ZONE_CELLS * dh)
    return make_micro_domain(
        box, local, tip_key, dh, elastic, tip_id=tip_id, source=source, true_ends=true_ends,
        n_orig=n_orig, free_len=free_len, pressure=pressure, **mesh_opts,
    )


# ----------------------------------------------------------------------------
# solve


@dataclass(frozen=True, eq=False)
class MicroSolution:
    domain: MicroDomain
    u: np.ndarray  # (2N,) P2 nodal displacements

    @property
    def nodal(self) -> np.ndarray:
        return self.u.reshape(-1, 2)


def _orig_range(dom: MicroDomain, k: int):
    """Vertex index range [i0, i1] of the macro part of local fracture k."""
    f = dom.network.fractures[k]
    m = len(f) - dom.n_orig[k]
    if m and dom.tip_key == (k, 0):
        return m, len(f) - 1
    return 0, dom.n_orig[k] - 1


def _free_mask(dom: MicroDomain, k: int, pts: np.ndarray, orig: bool) -> np.ndarray:
    """True where crack-face points are loaded by traction instead of the jump."""
    if not orig:
        return np.ones(len(pts), dtype=bool)
    f = dom.network.fractures[k]
    i0, i1 = _orig_range(dom, k)
    free = np.zeros(len(pts), dtype=bool)
    for end, i in ((0, i0), (1, i1)):
        if dom.true_ends[k][end]:
            free |= np.linalg.norm(pts - f[i], axis=1) < dom.free_len * (1 + 1e-9)
    return free


def crack_faces(dom: MicroDomain):
    """Per fracture cell: (k_local, + edge (a, m, b), - edge (a, m, b), on the macro geometry)."""
    g, mesh = dom.grid, dom.mesh
    out = []
    paths = g.base.frac_paths
    arcs = []
    for k, f in enumerate(dom.network.fractures):
        x = g.base.nodes[np.asarray(paths[k])]
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(x, axis=0), axis=1))])
        seg = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(f, axis=0), axis=1))])
        i0, i1 = _orig_range(dom, k)
        pos = {int(v): j for j, v in enumerate(paths[k])}
        arcs.append((s, seg[i0], seg[i1], pos))
    for c in range(g.num_frac_cells):
        k = int(g.fc_frac[c])
        edges = []
        for face in (g.fc_face_plus[c], g.fc_face_minus[c]):
            a, b = (int(v) for v in g.face_nodes[face])
            if (g.node_parent[a], g.node_parent[b]) != tuple(g.fc_nodes[c]):
                a, b = b, a
            edges.append((a, mesh.edge_mid[(min(a, b), max(a, b))], b))
        s, lo, hi, pos = arcs[k]
        sm = 0.5 * (s[pos[int(g.fc_nodes[c][0])]] + s[pos[int(g.fc_nodes[c][1])]])
        orig = lo - 1e-12 <= sm <= hi + 1e-12
        out.append((k, edges[0], edges[1], orig))
    return out


def solve_micro(dom: MicroDomain, bcs: MicroBCs, contact: bool = True) -> MicroSolution:
    g, mesh = dom.grid, dom.mesh
    X = mesh.nodes
    D = dom.elastic.D
    K = mesh.stiffness(D)
    f = np.zeros(mesh.num_dofs)
    if dom.pressure is not None:
        xq, _, _, _ = mesh.qp_geometry
        pq = np.asarray(dom.pressure(xq.reshape(-1, 2))).reshape(xq.shape[:2])
        f += mesh.divergence_load(dom.elastic.alpha * pq)

    fixed = {}
    bf = np.where(g.face_kind == 1)[0]
    bnodes = set()
    for face in bf:
        a, b = (int(v) for v in g.face_nodes[face])
        bnodes.update((a, b, mesh.edge_mid[(min(a, b), max(a, b))]))
    bnodes = np.array(sorted(bnodes), dtype=np.int64)
    if len(bnodes) == 0:
        raise GeometryError("microdomain has no Dirichlet boundary")
    ub = np.asarray(bcs.displacement(X[bnodes]), dtype=float).reshape(-1, 2)
    for i, v in enumerate(bnodes):
        fixed[2 * v] = ub[i, 0]
        fixed[2 * v + 1] = ub[i, 1]

    slaves = {}
    free_edges = {}
    for k, ep, em, orig in crack_faces(dom):
        pts = X[list(ep)]
        free = _free_mask(dom, k, pts, orig) if bcs.jump is not None else np.ones(3, dtype=bool)
        if bcs.jump is not None and not np.all(free):
            J = np.asarray(bcs.jump(dom.source[k], pts), dtype=float).reshape(3, 2)
            for j in range(3):
                if free[j] or ep[j] == em[j]:
                    continue
                for a in range(2):
                    slaves[2 * ep[j] + a] = (2 * em[j] + a, J[j, a])
        if np.any(free[[0, 2]]) or free[1]:
            free_edges.setdefault(k, []).append((ep, em, orig, free))

    # traction on free crack parts of the original geometry; micro extensions are traction free
    if bcs.traction is not None:
        for k, items in free_edges.items():
            plus = np.array([ep for ep, em, orig, fr in items if orig and fr[1]], dtype=np.int64).reshape(-1, 3)
            minus = np.array([em for ep, em, orig, fr in items if orig and fr[1]], dtype=np.int64).reshape(-1, 3)
            src = dom.source[k]
            f += mesh.edge_load(plus, lambda p, src=src: bcs.traction(src, p))
            f += mesh.edge_load(minus, lambda p, src=src: -np.asarray(bcs.traction(src, p)))
    cons = Constraints.build(mesh.num_dofs, fixed, slaves)
    pairs, normals, frictional = _contact_pairs(dom, slaves)
    u = solve_constrained(K, f, cons)
    if len(pairs) and contact:
        u = _contact_solve(K, f, cons, u, pairs, normals, frictional, dom.elastic.E, dom.elastic.mu_s)
    return MicroSolution(dom, u)


def _contact_pairs(dom: MicroDomain, slaves: dict):
    """Crack-face node pairs not tied by a prescribed jump.

    Returns (pairs (P,2), unit normals into the + side (P,2), frictional
    flag). Faces grown on the microscale carry Coulomb friction; free
    faces of the macro geometry already carry the macro contact traction.
    """
    X = dom.mesh.nodes
    acc: dict = {}
    fric: dict = {}
    for k, ep, em, orig in crack_faces(dom):
        d = X[ep[2]] - X[ep[0]]
        n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
        for j in range(3):
            if ep[j] == em[j] or 2 * ep[j] in slaves:
                continue
            key = (ep[j], em[j])
            acc[key] = acc.get(key, 0.0) + n
            fric[key] = fric.get(key, False) or not orig
    if not acc:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2)), np.zeros(0, dtype=bool)
    keys = sorted(acc)
    nv = np.array([acc[k] for k in keys])
    return (
        np.array(keys, dtype=np.int64),
        nv / np.linalg.norm(nv, axis=1)[:, None],
        np.array([fric[k] for k in keys], dtype=bool),
    )


OPEN_, STICK_, SLIP_ = 0, 1, 2


def _contact_solve(K, f, cons, u, pairs, normals, frictional, E, mu_s, max_iter=CONTACT_MAX_ITER):
    """Non-penetration (and Coulomb friction on frictional pairs) by an active-set penalty.

    Stick pairs get normal and tangential penalties; slip pairs carry
    μ_s times the normal penalty force against the slip direction.
    """
    import scipy.sparse as sps

    kp = CONTACT_PENALTY * E
    P, M = pairs[:, 0], pairs[:, 1]
    n = len(pairs)
    rows = np.arange(n).repeat(4)
    cols = np.stack([2 * P, 2 * P + 1, 2 * M, 2 * M + 1], axis=1).ravel()
    tang = np.stack([normals[:, 1], -normals[:, 0]], axis=1)

    def op(v):
        vals = np.stack([v[:, 0], v[:, 1], -v[:, 0], -v[:, 1]], axis=1).ravel()
        return sps.csr_matrix((vals, (rows, cols)), shape=(n, K.shape[0]))

    Bn, Bt = op(normals), op(tang)
    mu = np.where(frictional, mu_s, 0.0)
    scale = max(float(np.abs(u).max()), 1e-300)
    state = np.full(n, OPEN_)
    sdir = np.zeros(n)
    seen = []
    for _ in range(max_iter):
        gn, gt = Bn @ u, Bt @ u
        new = np.full(n, OPEN_)
        new_dir = np.zeros(n)
        closed = gn < (-1e-12 * scale if not (state != OPEN_).any() else 0.0)
        fr = closed & (mu > 0)
        # stick holds while the tangential penalty force is below the Coulomb bound
        stick_ok = fr & (state == STICK_) & (np.abs(gt) <= mu * np.abs(gn))
        keep_slip = fr & (state == SLIP_) & (sdir * gt > 0)
        go_slip = fr & (state == STICK_) & ~stick_ok
        new[closed] = SLIP_
        new_dir[closed] = np.sign(gt[closed])
        new_dir[mu == 0] = 0.0
        new[stick_ok] = STICK_
        new[fr & (state == OPEN_)] = STICK_
        new[fr & (state == SLIP_) & ~keep_slip] = STICK_
        new_dir[keep_slip] = sdir[keep_slip]
        new_dir[go_slip] = np.sign(gt[go_slip])
        key = (new.tobytes(), new_dir.tobytes())
        if np.array_equal(new, state) and np.array_equal(new_dir, sdir):
            return u
        if key in seen:
            # a repeated active set is accepted rather than cycled
            return u
        seen.append(key)
        state, sdir = new, new_dir
        a = state != OPEN_
        st = state == STICK_
        sl = (state == SLIP_) & (mu > 0)
        Kc = K + kp * (Bn[a].T @ Bn[a]) + kp * (Bt[st].T @ Bt[st])
        if sl.any():
            W = sps.diags(sdir[sl] * mu[sl])
            Kc = Kc - kp * (Bt[sl].T @ W @ Bn[sl])
        u = solve_constrained(Kc.tocsr(), f, cons)
    raise LinearSolverError("micro contact active set did not settle")
