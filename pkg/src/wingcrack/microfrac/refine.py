"""Recovery-based error estimate and longest-edge bisection of micro meshes."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..meshkit.grid import Triangulation, barycentric, locate_points, split_along_fractures
from .fem import QP, build_p2

MARK_FACTOR = 1.2
MAX_ROUNDS = 3


def recovered_error(sol) -> np.ndarray:
    """Per-element L2 distance between the P2 stress and its nodal-average recovery."""
    dom = sol.domain
    mesh = dom.mesh
    D = dom.elastic.D
    sig = mesh.stresses(sol.u, D)  # (T,Q,3)
    _, w, _, _ = mesh.qp_geometry
    area = w.sum(axis=1)
    mean = np.einsum("tq,tqs->ts", w, sig) / area[:, None]
    V = mesh.num_vertices
    num = np.zeros((V, 3))
    den = np.zeros(V)
    for j in range(3):
        np.add.at(num, mesh.elems[:, j], area[:, None] * mean)
        np.add.at(den, mesh.elems[:, j], area)
    rec = num / den[:, None]
    lam = np.stack([1 - QP[:, 0] - QP[:, 1], QP[:, 0], QP[:, 1]], axis=1)  # (Q,3)
    star = np.einsum("qj,tjs->tqs", lam, rec[mesh.elems[:, :3]])
    return np.sqrt(np.einsum("tq,tqs->t", w, (star - sig) ** 2))


def mark(eta: np.ndarray, scale: float) -> np.ndarray:
    """Elements above MARK_FACTOR times the mean; nothing when the estimate is at roundoff level."""
    if eta.size == 0 or eta.max() <= 1e-8 * scale:
        return np.zeros(eta.size, dtype=bool)
    return eta > MARK_FACTOR * eta.mean()


def bisect(tri: Triangulation, marked: np.ndarray, protected: np.ndarray) -> Triangulation:
    """Longest-edge (Rivara) bisection with conformity closure.

    Triangles flagged ``protected`` are never split; a marked triangle whose
    longest-edge path reaches one is left alone.
    """
    nodes = [tuple(p) for p in tri.nodes]
    tris = {i: tuple(int(v) for v in t) for i, t in enumerate(tri.tris)}
    prot = set(np.where(protected)[0].tolist())
    edge_tris: dict = {}

    def key(a, b):
        return (a, b) if a < b else (b, a)

    def reg(i):
        t = tris[i]
        for j in range(3):
            edge_tris.setdefault(key(t[j], t[(j + 1) % 3]), set()).add(i)

    def unreg(i):
        t = tris[i]
        for j in range(3):
            edge_tris[key(t[j], t[(j + 1) % 3])].discard(i)

    for i in tris:
        reg(i)
    paths = [list(map(int, p)) for p in tri.frac_paths]
    path_edge = {}
    for k, p in enumerate(paths):
        for a, b in zip(p[:-1], p[1:]):
            path_edge[key(a, b)] = k
    next_id = [len(tri.tris)]
    mids: dict = {}

    def longest(i):
        t = tris[i]
        best, e = -1.0, None
        for j in range(3):
            a, b = t[j], t[(j + 1) % 3]
            d = (nodes[a][0] - nodes[b][0]) ** 2 + (nodes[a][1] - nodes[b][1]) ** 2
            if d > best + 1e-300:
                best, e = d, key(a, b)
        return e

    def split_tri(i, e, m):
        t = tris[i]
        a, b = e
        for j in range(3):
            if key(t[j], t[(j + 1) % 3]) == e:
                p, q, r = t[j], t[(j + 1) % 3], t[(j + 2) % 3]
                break
        unreg(i)
        del tris[i]
        for new in ((p, m, r), (m, q, r)):
            tris[next_id[0]] = new
            reg(next_id[0])
            next_id[0] += 1

    def midpoint(e):
        if e not in mids:
            a, b = e
            nodes.append(((nodes[a][0] + nodes[b][0]) / 2, (nodes[a][1] + nodes[b][1]) / 2))
            mids[e] = len(nodes) - 1
            if e in path_edge:
                k = path_edge.pop(e)
                p = paths[k]
                for j in range(len(p) - 1):
                    if key(p[j], p[j + 1]) == e:
                        p.insert(j + 1, mids[e])
                        break
                path_edge[key(a, mids[e])] = k
                path_edge[key(mids[e], b)] = k
        return mids[e]

    def refine(i, depth=0):
        """Bisect triangle i along its longest edge; returns False if blocked."""
        if i not in tris or depth > 200:
            return i not in tris
        if i in prot:
            return False
        e = longest(i)
        nb = [j for j in edge_tris.get(e, ()) if j != i]
        if nb:
            j = nb[0]
            if j in prot:
                return False
            if longest(j) != e:
                if not refine(j, depth + 1):
                    return False
                # the neighbour changed; retry from i
                return refine(i, depth + 1)
            m = midpoint(e)
            split_tri(i, e, m)
            split_tri(j, e, m)
        else:
            m = midpoint(e)
            split_tri(i, e, m)
        return True

    for i in np.where(marked)[0]:
        refine(int(i))
    new_nodes = np.array(nodes)
    new_tris = np.array([tris[i] for i in sorted(tris)], dtype=np.int64)
    return Triangulation(
        tri.domain, tri.network, new_nodes, new_tris, tuple(np.array(p, dtype=np.int64) for p in paths),
        tri.h, dict(tri.params),
    )


def transfer_p1(sol, new_dom) -> np.ndarray:
    """Vertex displacements of a solution interpolated (P1) onto a new micro mesh's vertices."""
    old = sol.domain
    U = sol.nodal[: old.mesh.num_vertices]
    g_old, g_new = old.grid, new_dom.grid
    out = np.zeros((len(g_new.nodes), 2))
    # crack faces: match split vertices by side through their incident cells
    indptr, cells = g_new.node_cells()
    probe = np.empty((len(g_new.nodes), 2))
    for v in range(len(g_new.nodes)):
        c = cells[indptr[v]: indptr[v + 1]][0]
        probe[v] = 0.999999 * g_new.nodes[v] + 0.000001 * g_new.cell_centers[c]
    owner, _ = locate_points(g_old.nodes, g_old.cells, probe)
    lam = barycentric(g_old.nodes[g_old.cells[owner]], g_new.nodes)
    out[:] = np.einsum("pi,pia->pa", lam, U[g_old.cells[owner]])
    return out


def adaptive_refine(sol, solve, rounds: int = MAX_ROUNDS):
    """Estimate, mark, bisect and re-solve up to ``rounds`` times; returns the last solution."""
    for _ in range(min(rounds, MAX_ROUNDS)):
        dom = sol.domain
        eta = recovered_error(sol)
        sig = np.abs(dom.mesh.stresses(sol.u, dom.elastic.D)).max()
        marked = mark(eta, sig * np.sqrt(dom.box.area))
        if not marked.any():
            break
        tip = dom.tip_node
        ring = np.any(dom.grid.base.tris == tip, axis=1)
        tri = bisect(dom.grid.base, marked, ring)
        if len(tri.tris) == len(dom.grid.base.tris):
            break
        grid = split_along_fractures(tri)
        new = replace(dom, grid=grid, mesh=build_p2(grid, quarter_tip=tip))
        sol = solve(new)
    return sol
