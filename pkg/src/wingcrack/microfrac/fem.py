"""Isoparametric six-node triangles for plane-strain elasticity."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from ..errors import GeometryError, LinearSolverError

# 7-point degree-5 rule on the reference triangle (weights sum to 1/2)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
QP = np.array(
    [
        [1 / 3, 1 / 3],
        [_B1, _B1], [_A1, _B1], [_B1, _A1],
        [_B2, _B2], [_A2, _B2], [_B2, _A2],
    ]
)
QW = 0.5 * np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)

# 3-point Gauss rule on [-1, 1]
GP = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GW = np.array([5 / 9, 8 / 9, 5 / 9])


def shape(xi: np.ndarray):
    """P2 shape functions and reference gradients at points (Q,2): (Q,6), (Q,6,2)."""
    x, y = xi[:, 0], xi[:, 1]
    l1 = 1.0 - x - y
    N = np.stack([l1 * (2 * l1 - 1), x * (2 * x - 1), y * (2 * y - 1), 4 * l1 * x, 4 * x * y, 4 * y * l1], axis=1)
    dx = np.stack([1 - 4 * l1, 4 * x - 1, 0 * x, 4 * (l1 - x), 4 * y, -4 * y], axis=1)
    dy = np.stack([1 - 4 * l1, 0 * x, 4 * y - 1, -4 * x, 4 * x, 4 * (l1 - y)], axis=1)
    return N, np.stack([dx, dy], axis=2)


def edge_shape(s: np.ndarray):
    """Three-node edge shape functions (end a, mid, end b) and derivatives on [-1, 1]."""
    N = np.stack([0.5 * s * (s - 1), 1 - s**2, 0.5 * s * (s + 1)], axis=1)
    dN = np.stack([s - 0.5, -2 * s, s + 0.5], axis=1)
    return N, dN


def elasticity_matrix(E: float, nu: float) -> np.ndarray:
    """Plane-strain Voigt matrix (engineering shear strain)."""
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


@dataclass(frozen=True, eq=False)
class P2Mesh:
    """Six-node triangles built on a split grid.

    Nodes 0..V-1 are the split vertices; midside nodes follow. Element node
    order is (v0, v1, v2, m01, m12, m20). Crack-face edges on opposite sides
    get distinct midside nodes because their split vertices differ.
    """

    nodes: np.ndarray
    elems: np.ndarray
    num_vertices: int
    edge_mid: dict  # sorted split vertex pair -> midside node
    quarter_tip: int  # vertex whose incident edges carry quarter-point nodes (-1 if none)

    @cached_property
    def qp_geometry(self):
        N, dN = shape(QP)
        X = self.nodes[self.elems]  # (T,6,2)
        J = np.einsum("qib,tia->tqab", dN, X)  # dx_a/dxi_b
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0):
            raise GeometryError("inverted or degenerate P2 element")
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        dNx = np.einsum("qib,tqba->tqia", dN, inv)
        xq = np.einsum("qi,tia->tqa", N, X)
        return xq, det * QW[None, :], dNx, N

    @property
    def num_dofs(self) -> int:
        return 2 * len(self.nodes)

    def element_dofs(self) -> np.ndarray:
        return np.stack([2 * self.elems, 2 * self.elems + 1], axis=2).reshape(len(self.elems), 12)

    def strain_matrix(self):
        """B (T,Q,3,12) mapping element dofs to Voigt strain at quadrature points."""
        _, _, dNx, _ = self.qp_geometry
        T, Q = dNx.shape[:2]
        B = np.zeros((T, Q, 3, 6, 2))
        B[:, :, 0, :, 0] = dNx[..., 0]
        B[:, :, 1, :, 1] = dNx[..., 1]
        B[:, :, 2, :, 0] = dNx[..., 1]
        B[:, :, 2, :, 1] = dNx[..., 0]
        return B.reshape(T, Q, 3, 12)

    def stiffness(self, D: np.ndarray):
        _, w, _, _ = self.qp_geometry
        B = self.strain_matrix()
        Ke = np.einsum("tq,tqsi,su,tquj->tij", w, B, D, B)
        dofs = self.element_dofs()
        rows = np.repeat(dofs[:, :, None], 12, axis=2).ravel()
        cols = np.repeat(dofs[:, None, :], 12, axis=1).ravel()
        n = self.num_dofs
        return sps.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def divergence_load(self, scalar_q: np.ndarray) -> np.ndarray:
        """Load vector of ∫ s div v for a scalar s given at quadrature points (T,Q)."""
        _, w, dNx, _ = self.qp_geometry
        fe = np.einsum("tq,tq,tqia->tia", w, scalar_q, dNx).reshape(len(self.elems), 12)
        f = np.zeros(self.num_dofs)
        np.add.at(f, self.element_dofs().ravel(), fe.ravel())
        return f

    def edge_load(self, edges: np.ndarray, traction) -> np.ndarray:
        """∫ t·v over three-node edges (E,3) = (a, mid, b); traction(points) -> (P,2)."""
        f = np.zeros(self.num_dofs)
        if len(edges) == 0:
            return f
        N, dN = edge_shape(GP)
        X = self.nodes[edges]  # (E,3,2)
        xq = np.einsum("qi,eia->eqa", N, X)
        jac = np.linalg.norm(np.einsum("qi,eia->eqa", dN, X), axis=2)
        t = np.asarray(traction(xq.reshape(-1, 2)), dtype=float).reshape(len(edges), len(GP), 2)
        fe = np.einsum("q,eq,qi,eqa->eia", GW, jac, N, t)
        for a in range(2):
            np.add.at(f, (2 * edges + a).ravel(), fe[..., a].ravel())
        return f

    def strain_energy(self, u: np.ndarray, D: np.ndarray) -> float:
        K = self.stiffness(D)
        return 0.5 * float(u @ (K @ u))

    def stresses(self, u: np.ndarray, D: np.ndarray) -> np.ndarray:
        """Voigt stress (T,Q,3) at quadrature points."""
        B = self.strain_matrix()
        ue = u[self.element_dofs()]
        return np.einsum("su,tqui,ti->tqs", D, B, ue)

    def evaluate(self, u: np.ndarray, elem: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Displacement at reference coordinates xi (P,2) inside elements elem (P,)."""
        N, _ = shape(xi)
        U = u.reshape(-1, 2)[self.elems[elem]]
        return np.einsum("pi,pia->pa", N, U)


def build_p2(grid, quarter_tip: int = -1) -> P2Mesh:
    """P2 mesh on a split grid; edges at ``quarter_tip`` get midside nodes at 1/4 from it."""
    V = len(grid.nodes)
    cells = grid.cells
    loc = np.stack([cells, np.roll(cells, -1, axis=1)], axis=-1)  # (T,3,2)
    keys = np.sort(loc.reshape(-1, 2), axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    a, b = grid.nodes[uniq[:, 0]], grid.nodes[uniq[:, 1]]
    mid = 0.5 * (a + b)
    if quarter_tip >= 0:
        at0 = uniq[:, 0] == quarter_tip
        at1 = uniq[:, 1] == quarter_tip
        mid[at0] = a[at0] + 0.25 * (b[at0] - a[at0])
        mid[at1] = b[at1] + 0.25 * (a[at1] - b[at1])
        if not (np.any(at0) or np.any(at1)):
            raise GeometryError("quarter-point vertex is not in the mesh")
    nodes = np.concatenate([grid.nodes, mid])
    mids = (V + inv).reshape(-1, 3)
    elems = np.concatenate([cells, mids], axis=1)
    edge_mid = {(int(p), int(q)): V + i for i, (p, q) in enumerate(uniq)}
    return P2Mesh(nodes, elems.astype(np.int64), V, edge_mid, int(quarter_tip))


@dataclass(frozen=True, eq=False)
class Constraints:
    """Affine dof map u = T ũ + g (Dirichlet values and slave = master + offset)."""

    T: sps.csr_matrix
    g: np.ndarray

    @classmethod
    def build(cls, n: int, fixed: dict, slaves: dict):
        """fixed: dof -> value; slaves: dof -> (master dof, offset)."""
        g = np.zeros(n)
        role = np.zeros(n, dtype=np.int64)  # 0 free, 1 fixed, 2 slave
        for d, v in fixed.items():
            role[d] = 1
            g[d] = v
        for d, (m, off) in slaves.items():
            if role[d] == 1:
                continue
            if role[m] != 0 or m in slaves:
                raise GeometryError("constraint chain: master dof is itself constrained")
            role[d] = 2
            g[d] = off
        free = np.where(role == 0)[0]
        col = np.full(n, -1, dtype=np.int64)
        col[free] = np.arange(len(free))
        rows = list(free)
        cols = list(col[free])
        for d, (m, _) in slaves.items():
            if role[d] == 2:
                rows.append(d)
                cols.append(col[m])
        T = sps.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, len(free))).tocsr()
        return cls(T, g)


def solve_constrained(K: sps.spmatrix, f: np.ndarray, cons: Constraints) -> np.ndarray:
    from scipy.sparse.linalg import splu

    T, g = cons.T, cons.g
    if T.shape[1] == 0:
        return g.copy()
    Kr = (T.T @ K @ T).tocsc()
    fr = T.T @ (f - K @ g)
    # magnitudes: frictional contact makes the operator nonsymmetric
    diag = np.abs(Kr.diagonal())
    if np.any(diag == 0):
        raise LinearSolverError("singular micro stiffness: unconstrained dofs")
    s = 1.0 / np.sqrt(diag)
    S = sps.diags(s)
    try:
        lu = splu((S @ Kr @ S).tocsc())
    except RuntimeError as exc:
        raise LinearSolverError(f"singular micro stiffness: {exc}") from exc
    y = lu.solve(s * fr)
    ur = s * y
    if not np.all(np.isfinite(ur)):
        raise LinearSolverError("singular micro stiffness")
    res = np.linalg.norm(Kr @ ur - fr)
    ref = np.linalg.norm(fr) + np.linalg.norm(abs(Kr) @ np.abs(ur))
    if ref > 0 and res > 1e-8 * ref:
        raise LinearSolverError(f"singular micro stiffness (residual {res / ref:.2e})")
    return T @ ur + g
