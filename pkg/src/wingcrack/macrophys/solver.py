"""Coupled poroelastic / fracture-flow / contact time step (semismooth Newton)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from ..errors import NonConvergenceError
from .contact import admissible, classify, contact_rows
from .discretize import assemble_matrix_flow, assemble_matrix_mechanics
from .fracture import FractureFlowDisc, aperture_update, fracture_mass_residual, jumps_from_faces
from .linsolve import equilibrate, solve_linear_system
from .material import BiotMaterial, FractureProps, normal_conductivity
from .state import OPEN, SLIP, STICK, BoundaryConditions, InjectionSchedule, MacroState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DofMap:
    T: int
    F: int
    Nf: int

    @property
    def size(self) -> int:
        return 3 * self.T + 3 * self.F + 5 * self.Nf

    def u(self, K, a):
        return 2 * np.asarray(K) + a

    def p(self, K):
        return 2 * self.T + np.asarray(K)

    def us(self, s, a):
        return 3 * self.T + 2 * np.asarray(s) + a

    def ps(self, s):
        return 3 * self.T + 2 * self.F + np.asarray(s)

    def pf(self, c):
        return 3 * self.T + 3 * self.F + np.asarray(c)

    def f(self, c, i):
        return 3 * self.T + 3 * self.F + self.Nf + 2 * np.asarray(c) + i

    def lam(self, c, side):
        """Interface flux (m^2/s, matrix to fracture) on side 0 (+) or 1 (-)."""
        return 3 * self.T + 3 * self.F + 3 * self.Nf + 2 * np.asarray(c) + side

    def split(self, x):
        T, F, Nf = self.T, self.F, self.Nf
        o = 0
        u = x[o: o + 2 * T].reshape(T, 2)
        o += 2 * T
        p = x[o: o + T]
        o += T
        us = x[o: o + 2 * F].reshape(F, 2)
        o += 2 * F
        ps = x[o: o + F]
        o += F
        pf = x[o: o + Nf]
        o += Nf
        f = x[o: o + 2 * Nf].reshape(Nf, 2)
        return u, p, us, ps, pf, f

    def lam_of(self, x):
        o = 3 * self.T + 3 * self.F + 3 * self.Nf
        return x[o: o + 2 * self.Nf].reshape(self.Nf, 2)

    def pack(self, st: MacroState, lengths=None):
        return np.concatenate(
            [
                st.u.ravel(), st.p, st.u_face.ravel(), st.p_face, st.p_frac, st.traction.ravel(),
                (st.flux_if * (1.0 if lengths is None else np.asarray(lengths)[:, None])).ravel(),
            ]
        )


@dataclass
class StepReport:
    iterations: int
    residuals: list
    mode_changes: list
    injected: float
    storage_change: float
    matrix_storage: float
    fracture_storage: float
    dt: float
    boundary_outflow: float = 0.0
    storage_scale: float = 0.0

    @property
    def mass_error(self) -> float:
        """|injected - storage change - outflow| relative to the summed magnitudes of all terms."""
        ref = max(self.storage_scale, abs(self.injected), abs(self.boundary_outflow), 1e-300)
        return abs(self.injected - self.storage_change - self.boundary_outflow) / ref


@dataclass
class NewtonOptions:
    tol: float = 1e-8
    max_iter: int = 30
    mass_tol: float = 1e-10
    c_n: float | None = None
    c_t: float | None = None


class MacroProblem:
    """Static operators of the macroscale problem on one grid."""

    def __init__(
        self,
        grid,
        material: BiotMaterial,
        props: FractureProps,
        bc: BoundaryConditions,
        schedule: InjectionSchedule,
        options: NewtonOptions | None = None,
        h_ref: float | None = None,
    ):
        self.grid = grid
        self.material = material
        self.props = props
        self.bc = bc
        self.schedule = schedule
        self.opt = options or NewtonOptions()
        self.dof = DofMap(grid.num_cells, grid.num_faces, grid.num_frac_cells)
        self.flow = assemble_matrix_flow(grid, material)
        self.mech = assemble_matrix_mechanics(grid, material)
        self.ffd = FractureFlowDisc(grid.fc_lengths.copy(), grid.frac_neighbors, material.mu, material.c_p)
        h = h_ref if h_ref is not None else grid.base.h
        self.c_n = self.opt.c_n if self.opt.c_n is not None else material.E / h
        self.c_t = self.opt.c_t if self.opt.c_t is not None else material.E / h
        self._build_static()
        self.col_scale = self._unit_scales()

    def _unit_scales(self) -> np.ndarray:
        """Characteristic sizes of each unknown (m for displacements, Pa for pressures/tractions)."""
        d = self.dof
        bcs = [self.bc.side(i) for i in range(4)]
        P = max([abs(b.normal) for b in bcs] + [abs(b.shear) for b in bcs] + [1e6])
        dom = self.grid.domain
        U = P * max(dom.width, dom.height) / self.material.E
        s = np.empty(d.size)
        s[: 2 * d.T] = U
        s[2 * d.T: 3 * d.T] = P
        s[3 * d.T: 3 * d.T + 2 * d.F] = U
        s[3 * d.T + 2 * d.F: 3 * d.T + 3 * d.F + 3 * d.Nf] = P
        rates = [abs(e.rate) for e in self.schedule.entries]
        s[3 * d.T + 3 * d.F + 3 * d.Nf:] = max([self.material.mobility * P] + rates)
        return s

    # ------------------------------------------------------------------
    def _build_static(self):
        g = self.grid
        d = self.dof
        geo = self.mech.geo
        T = d.T
        faces = geo.faces
        A = self.mech.A
        alpha = self.material.alpha
        rows, cols, vals = [], [], []
        rows1, cols1, vals1 = [], [], []

        K = np.arange(T)
        # mechanics: face rows (per j) and cell rows (sum over j)
        for j in range(3):
            for a in range(2):
                rf = d.us(faces[:, j], a)
                rc = d.u(K, a)
                for l in range(3):
                    for b in range(2):
                        v = A[:, j, a, l, b]
                        for r in (rf, rc):
                            rows += [r, r]
                            cols += [d.us(faces[:, l], b), d.u(K, b)]
                            vals += [v, -v]
                pv = -alpha * geo.length[:, j] * geo.normal[:, j, a]
                rows += [rf, rc]
                cols += [d.p(K), d.p(K)]
                vals += [pv, pv]
        # flow: face flux rows and cell mass rows
        Af = self.flow.A
        for j in range(3):
            rf = d.ps(faces[:, j])
            for l in range(3):
                v = -Af[:, j, l]
                rows += [rf, rf]
                cols += [d.ps(faces[:, l]), d.p(K)]
                vals += [v, -v]
                rows1 += [d.p(K), d.p(K)]
                cols1 += [d.ps(faces[:, l]), d.p(K)]
                vals1 += [v, -v]
            for a in range(2):
                rows.append(d.p(K))
                cols.append(d.us(faces[:, j], a))
                vals.append(alpha * geo.length[:, j] * geo.normal[:, j, a])
        rows.append(d.p(K))
        cols.append(d.p(K))
        vals.append(self.material.M * geo.area)

        # fracture faces: traction balance with contact traction and fracture pressure
        nf = d.Nf
        if nf:
            c = np.arange(nf)
            n = g.fc_normals
            tau = g.fc_tangents
            for faces_s, s in ((g.fc_face_plus, 1.0), (g.fc_face_minus, -1.0)):
                ln = g.face_lengths[faces_s]
                for a in range(2):
                    r = d.us(faces_s, a)
                    rows += [r, r, r]
                    cols += [d.f(c, 0), d.f(c, 1), d.pf(c)]
                    vals += [s * ln * n[:, a], -s * ln * tau[:, a], -s * ln * n[:, a]]
            # fracture-face flux equals the interface flux unknown
            for faces_s, side in ((g.fc_face_plus, 0), (g.fc_face_minus, 1)):
                rows.append(d.ps(faces_s))
                cols.append(d.lam(c, side))
                vals.append(np.full(nf, -1.0))

        N = d.size
        P = self.mech.penalty.tocoo()
        rows.append(d.us(0, 0) + P.row)
        cols.append(d.us(0, 0) + P.col)
        vals.append(P.data)
        A0 = sps.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        ).tocsr()
        A1 = sps.coo_matrix(
            (np.concatenate(vals1), (np.concatenate(rows1), np.concatenate(cols1))), shape=(N, N)
        ).tocsr()

        # boundary conditions
        b = np.zeros(N)
        keep = np.ones(N)
        dr, dc_, dv = [], [], []
        bf = np.where(g.face_kind == 1)[0]
        ln = g.face_lengths
        scale = self.material.shear
        pdir = []
        for side in range(4):
            bc = self.bc.side(side)
            fs = bf[g.face_side[bf] == side]
            if len(fs) == 0:
                continue
            normal_axis = 0 if side < 2 else 1
            out_sign = -1.0 if side in (0, 2) else 1.0
            nvec = np.zeros(2)
            nvec[normal_axis] = out_sign
            tvec = np.array([-nvec[1], nvec[0]])
            if bc.kind == "traction":
                t = bc.normal * nvec + bc.shear * tvec
                for a in range(2):
                    b[d.us(fs, a)] += t[a] * ln[fs]
            elif bc.kind in ("roller", "fixed"):
                comps = [normal_axis] if bc.kind == "roller" else [0, 1]
                for a in comps:
                    r = d.us(fs, a)
                    keep[r] = 0.0
                    dr.append(r)
                    dc_.append(r)
                    dv.append(np.full(len(fs), scale))
            if bc.pressure is not None:
                pdir.append(fs)
                r = d.ps(fs)
                keep[r] = 0.0
                dr.append(r)
                dc_.append(r)
                dv.append(np.full(len(fs), 1.0))
                b[r] = bc.pressure
        pdir = np.concatenate(pdir) if pdir else np.zeros(0, dtype=np.int64)
        self.p_dir_cells = g.face_cells[pdir, 0]
        self.p_dir_local = np.array(
            [int(np.where(g.cell_faces[k] == f)[0][0]) for k, f in zip(self.p_dir_cells, pdir)], dtype=np.int64
        )
        Dk = sps.diags(keep)
        A0 = Dk @ A0
        A1 = Dk @ A1
        if dr:
            A0 = A0 + sps.coo_matrix(
                (np.concatenate(dv), (np.concatenate(dr), np.concatenate(dc_))), shape=(N, N)
            ).tocsr()
        # body force
        bf_vec = np.asarray(self.material.body_force, dtype=float)
        if np.any(bf_vec != 0):
            for a in range(2):
                b[d.u(K, a)] -= bf_vec[a] * geo.area
        self.A0, self.A1, self.b_static, self.keep = A0.tocsr(), A1.tocsr(), b, keep

    # ------------------------------------------------------------------
    def injection(self, t0: float, t1: float) -> np.ndarray:
        """Injected volume per fracture cell over [t0, t1], uniform by length."""
        g = self.grid
        Q = np.zeros(self.dof.Nf)
        for k in range(len(g.frac_offsets) - 1):
            cells = g.frac_cells(k)
            vol = self.schedule.volume(k, t0, t1)
            if vol and len(cells):
                L = g.fc_lengths[cells]
                Q[cells] = vol * L / L.sum()
        return Q

    def _nonlinear(self, x, old: MacroState, dt: float, Q: np.ndarray, modes, sdir):
        """Residual contributions and Jacobian entries that depend on the iterate."""
        d = self.dof
        g = self.grid
        props = self.props
        mu = self.material.mu
        _, p, us, ps, pf, f = d.split(x)
        nf = d.Nf
        r = np.zeros(d.size)
        rows, cols, vals = [], [], []
        if nf == 0:
            return r, (rows, cols, vals)
        c = np.arange(nf)
        fp, fm = g.fc_face_plus, g.fc_face_minus
        n, tau = g.fc_normals, g.fc_tangents
        J = jumps_from_faces(g, us)
        dJt = J[:, 1] - old.jump[:, 1]
        a, _ = aperture_update(J, old.slip_acc, old.jump[:, 1], props, a0=old.a0, strict=False)
        a_eff = np.maximum(a, 1e-3 * old.a0)
        # derivatives of a with respect to the face displacement dofs
        da_dJt = np.tan(props.psi) * np.sign(dJt) if props.dilation_in_aperture else np.zeros(nf)
        da_cols, da_vals = [], []
        for a_ in range(2):
            for face, s in ((fp, 1.0), (fm, -1.0)):
                da_cols.append(d.us(face, a_))
                da_vals.append(s * (n[:, a_] + da_dJt * tau[:, a_]))

        def add_da(row, coef):
            for cc, vv in zip(da_cols, da_vals):
                rows.append(row)
                cols.append(cc)
                vals.append(coef * vv)

        L = self.ffd.length
        kap = normal_conductivity(a_eff, mu)
        dkap = 1.0 / (6.0 * mu)
        lam = d.lam_of(x)
        # interface rows: Λ - |σ| κ(a) (p_σ - p_c) = 0
        for face, side in ((fp, 0), (fm, 1)):
            row = d.lam(c, side)
            diff = ps[face] - pf
            r[row] += lam[:, side] - L * kap * diff
            rows += [row, row, row]
            cols += [row, d.ps(face), d.pf(c)]
            vals += [np.ones(nf), -L * kap, L * kap]
            add_da(row, -L * dkap * diff)
        # fracture mass rows
        row = d.pf(c)
        r[row] += fracture_mass_residual(
            self.ffd, a_eff, old.aperture, pf, old.p_frac, lam.sum(axis=1), dt, Q
        )
        cp = self.material.c_p
        add_da(row, L * (1.0 + cp * (pf - old.p_frac)))
        rows += [row, row, row]
        cols += [d.pf(c), d.lam(c, 0), d.lam(c, 1)]
        vals += [L * a_eff * cp, np.full(nf, -dt), np.full(nf, -dt)]
        pr = self.ffd.pairs
        if len(pr):
            Tt, dTc, dTd = self.ffd.transmissibility(a_eff)
            i0, i1 = pr[:, 0], pr[:, 1]
            dp = pf[i0] - pf[i1]
            for rr, sg in ((i0, 1.0), (i1, -1.0)):
                rows += [d.pf(rr), d.pf(rr)]
                cols += [d.pf(i0), d.pf(i1)]
                vals += [sg * dt * Tt, -sg * dt * Tt]
                for cell, dT in ((i0, dTc), (i1, dTd)):
                    for cc, vv in zip(da_cols, da_vals):
                        rows.append(d.pf(rr))
                        cols.append(cc[cell])
                        vals.append(sg * dt * dT * dp * vv[cell])
        # contact rows
        C, rhs = contact_rows(modes, sdir, old.jump[:, 1], props.mu_s, self.c_n, self.c_t)
        v = np.concatenate([J, f], axis=1)
        for i in range(2):
            row = d.f(c, i)
            r[row] += np.einsum("nj,nj->n", C[:, i], v) - rhs[:, i]
            # jump columns through the face displacements
            for a_ in range(2):
                for face, s in ((fp, 1.0), (fm, -1.0)):
                    rows.append(row)
                    cols.append(d.us(face, a_))
                    vals.append(s * (C[:, i, 0] * n[:, a_] + C[:, i, 1] * tau[:, a_]))
            rows += [row, row]
            cols += [d.f(c, 0), d.f(c, 1)]
            vals += [C[:, i, 2], C[:, i, 3]]
        return r, (rows, cols, vals)

    def _contact_vars(self, x):
        _, _, us, _, _, f = self.dof.split(x)
        return f, jumps_from_faces(self.grid, us)

    def _classify(self, x, old):
        f, J = self._contact_vars(x)
        return classify(f, J, old.jump[:, 1], self.props.mu_s, self.c_n, self.c_t)

    def rhs(self, old: MacroState, dt: float) -> np.ndarray:
        d = self.dof
        b = self.b_static.copy()
        area = self.mech.geo.area
        rows = d.p(np.arange(d.T))
        b[rows] += self.keep[rows] * (
            self.material.alpha * area * old.vol_strain + self.material.M * area * old.p
        )
        return b

    def residual_jacobian(self, x, old, dt, Q, modes, sdir, b):
        A = self.A0 + dt * self.A1
        r_nl, (rows, cols, vals) = self._nonlinear(x, old, dt, Q, modes, sdir)
        R = A @ x - b + r_nl
        if rows:
            Jn = sps.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=A.shape
            )
            Jac = (A + Jn).tocsr()
        else:
            Jac = A.tocsr()
        return R, Jac

    # ------------------------------------------------------------------
    def solve_time_step(self, old: MacroState, dt: float) -> tuple[MacroState, StepReport]:
        if not dt > 0:
            raise ValueError("time step must be positive")
        d = self.dof
        t1 = old.t + dt
        Q = self.injection(old.t, t1)
        b = self.rhs(old, dt)
        x = d.pack(old, self.grid.fc_lengths)
        modes, sdir = self._classify(x, old) if d.Nf else (np.zeros(0, dtype=np.int64), np.zeros(0))
        history = [np.where(modes == SLIP, modes * sdir, modes)]
        frozen = np.zeros(d.Nf, dtype=bool)
        residuals, changes = [], []
        dr = None
        ref = None
        converged = False
        prev_merr = np.inf
        it = 0
        for it in range(1, self.opt.max_iter + 1):
            R, Jac = self.residual_jacobian(x, old, dt, Q, modes, sdir, b)
            if dr is None:
                _, dr, _ = equilibrate(Jac, self.col_scale)
                ref = max(np.linalg.norm(dr * R), np.linalg.norm(dr * b))
            res = np.linalg.norm(dr * R)
            residuals.append(res)
            if it > 1 or res == 0.0:
                raw_modes, raw_sdir = self._classify(x, old) if d.Nf else (modes, sdir)
                new_modes = np.where(frozen, modes, raw_modes)
                new_sdir = np.where(frozen, sdir, raw_sdir)
                changed = (new_modes != modes) | ((new_modes == SLIP) & (new_sdir != sdir))
                nchg = int(np.sum(changed))
                if nchg == 0 and res <= self.opt.tol * ref and frozen.any():
                    # frozen cells must still satisfy their imposed contact mode
                    f, J = self._contact_vars(x)
                    bad = frozen & ~admissible(f, J, old.jump[:, 1], modes, sdir, self.props.mu_s)
                    if bad.any():
                        frozen &= ~bad
                        new_modes = np.where(bad, raw_modes, modes)
                        new_sdir = np.where(bad, raw_sdir, sdir)
                        changed = bad
                        nchg = int(np.sum(bad))
                        history = []
                changes.append(nchg)
                if nchg == 0 and res <= self.opt.tol * ref:
                    # global mass balance is held to a tighter level than the residual norm
                    V, ms, fs, out, scale = self.mass_terms(x, old, Q, dt)
                    merr = abs(V - ms - fs - out) / max(scale, 1e-300)
                    if merr <= self.opt.mass_tol or not merr < 0.5 * prev_merr:
                        converged = True
                        break
                    prev_merr = merr
                if nchg:
                    # chattering guard: a repeated active set freezes the oscillating cells,
                    # closed ones in stick (a sign-flipping slip direction means no slip)
                    key = np.where(new_modes == SLIP, new_modes * new_sdir, new_modes)
                    if any(np.array_equal(key, h) for h in history):
                        frozen |= changed
                        closed = changed & (modes != OPEN) & (new_modes != OPEN)
                        new_modes = np.where(changed, modes, new_modes)
                        new_sdir = np.where(changed, sdir, new_sdir)
                        new_modes[closed] = STICK
                    history.append(key)
                    modes, sdir = new_modes, new_sdir
                    R, Jac = self.residual_jacobian(x, old, dt, Q, modes, sdir, b)
            dx = solve_linear_system(Jac, -R, col_scale=self.col_scale)
            x = x + dx
        if not converged:
            raise NonConvergenceError(
                f"Newton did not converge in {self.opt.max_iter} iterations at t={t1:.6g} s "
                f"(scaled residual {residuals[-1]:.3e}, reference {ref:.3e})",
                history=residuals,
            )
        new = self.state_from_vector(x, old, t1, modes)
        rep = self.mass_report(x, old, Q, dt, it, residuals, changes)
        return new, rep

    def state_from_vector(self, x, old: MacroState, t: float, modes) -> MacroState:
        d = self.dof
        g = self.grid
        u, p, us, ps, pf, f = d.split(x)
        J = jumps_from_faces(g, us) if d.Nf else np.zeros((0, 2))
        a, slip = aperture_update(J, old.slip_acc, old.jump[:, 1], self.props, a0=old.a0)
        lam = d.lam_of(x) / g.fc_lengths[:, None] if d.Nf else np.zeros((0, 2))
        vol = self.mech.div_face(us) / self.mech.geo.area
        return MacroState(
            t=t,
            u=u.copy(),
            p=p.copy(),
            u_face=us.copy(),
            p_face=ps.copy(),
            p_frac=pf.copy(),
            traction=f.copy(),
            jump=J,
            aperture=a,
            slip_acc=slip,
            mode=np.asarray(modes, dtype=np.int64).copy(),
            flux_if=lam,
            vol_strain=vol,
            a0=old.a0.copy(),
        )

    def mass_terms(self, x, old: MacroState, Q, dt):
        """(injected, matrix storage, fracture storage, boundary outflow, magnitude scale)."""
        d = self.dof
        m = self.material
        _, p, us, ps, pf, _ = d.split(x)
        area = self.mech.geo.area
        vol = self.mech.div_face(us) / area
        mech = m.alpha * area * (vol - old.vol_strain)
        fluid = m.M * area * (p - old.p)
        cell = mech + fluid
        # magnitudes of the separate terms: undrained steps cancel them cell by cell
        scale = float(np.abs(mech).sum() + np.abs(fluid).sum()) + abs(float(Q.sum()))
        fs = 0.0
        if d.Nf:
            J = jumps_from_faces(self.grid, us)
            a, _ = aperture_update(J, old.slip_acc, old.jump[:, 1], self.props, a0=old.a0, strict=False)
            L = self.ffd.length
            fc = L * (a - old.aperture) + L * a * m.c_p * (pf - old.p_frac)
            fs = float(fc.sum())
            scale += float(np.abs(fc).sum())
        out = 0.0
        if len(self.p_dir_cells):
            fl = self.flow.fluxes(p, ps)[self.p_dir_cells, self.p_dir_local]
            out = dt * float(fl.sum())
            scale += dt * float(np.abs(fl).sum())
        return float(Q.sum()), float(cell.sum()), fs, out, scale

    def mass_report(self, x, old, Q, dt, it, residuals, changes) -> StepReport:
        V, ms, fs, out, scale = self.mass_terms(x, old, Q, dt)
        return StepReport(it, residuals, changes, V, ms + fs, ms, fs, dt, out, scale)


def solve_time_step(grid, state_old, dt, schedule, material, props, bc, options=None):
    """Functional wrapper: build the operators and advance one step."""
    prob = MacroProblem(grid, material, props, bc, schedule, options)
    return prob.solve_time_step(state_old, dt)
