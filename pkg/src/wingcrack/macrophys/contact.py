"""Frictional contact: active-set classification and linearized rows.

Unknowns per fracture cell are the jump (⟦u⟧_n, ⟦u⟧_τ) and the contact
traction (f_n, f_τ) on the + surface. Rows are returned as coefficients on
[⟦u⟧_n, ⟦u⟧_τ, f_n, f_τ] plus a right-hand side.
"""
from __future__ import annotations

import numpy as np

from .state import OPEN, SLIP, STICK


def classify(traction, jump, jump_tau_old, mu_s, c_n, c_t, gap=0.0):
    f_n, f_t = traction[:, 0], traction[:, 1]
    closed = (-f_n - c_n * (jump[:, 0] - gap)) > 0
    b = mu_s * np.maximum(-f_n - c_n * (jump[:, 0] - gap), 0.0)
    z = f_t - c_t * (jump[:, 1] - jump_tau_old)
    mode = np.full(len(f_n), OPEN, dtype=np.int64)
    mode[closed & (np.abs(z) < b)] = STICK
    mode[closed & (np.abs(z) >= b)] = SLIP
    return mode, np.sign(z)


def contact_rows(mode, slip_dir, jump_tau_old, mu_s, c_n, c_t, gap=0.0):
    """Linear equations for the given modes: C @ [Jn, Jt, fn, ft] = rhs."""
    n = len(mode)
    C = np.zeros((n, 2, 4))
    rhs = np.zeros((n, 2))
    op = mode == OPEN
    C[op, 0, 2] = 1.0
    C[op, 1, 3] = 1.0
    cl = ~op
    C[cl, 0, 0] = c_n
    rhs[cl, 0] = c_n * gap if np.isscalar(gap) else c_n * np.asarray(gap)[cl]
    st = mode == STICK
    C[st, 1, 1] = c_t
    rhs[st, 1] = c_t * np.asarray(jump_tau_old)[st]
    sl = mode == SLIP
    s = np.where(slip_dir == 0, 1.0, slip_dir)
    C[sl, 1, 2] = mu_s * s[sl]
    C[sl, 1, 3] = 1.0
    return C, rhs


def contact_residual_and_classify(traction, jump, jump_tau_old, mu_s, c_n, c_t, gap=0.0):
    """Classify each cell and return (modes, residual (Nf,2), C, rhs) of the active-set rows."""
    traction = np.atleast_2d(np.asarray(traction, dtype=float))
    jump = np.atleast_2d(np.asarray(jump, dtype=float))
    jump_tau_old = np.broadcast_to(np.asarray(jump_tau_old, dtype=float), (len(traction),))
    mode, sdir = classify(traction, jump, jump_tau_old, mu_s, c_n, c_t, gap)
    C, rhs = contact_rows(mode, sdir, jump_tau_old, mu_s, c_n, c_t, gap)
    v = np.concatenate([jump, traction], axis=1)
    res = np.einsum("nij,nj->ni", C, v) - rhs
    return mode, res, C, rhs


def complementarity_violation(traction, jump, jump_tau_old, mode, mu_s):
    """Diagnostics used by tests: (friction excess, open traction, slip-traction alignment)."""
    f_n, f_t = traction[:, 0], traction[:, 1]
    excess = np.abs(f_t) - (-mu_s * f_n + 1e-6 * np.abs(f_n))
    open_tr = np.where(mode == OPEN, np.abs(traction).max(axis=1), 0.0)
    align = np.where(mode == SLIP, f_t * (jump[:, 1] - jump_tau_old), 0.0)
    return excess, open_tr, align


def admissible(traction, jump, jump_tau_old, mode, slip_dir, mu_s, gap=0.0, rtol=1e-6):
    """Whether each cell's imposed mode agrees with its solved traction and jump."""
    f_n, f_t = traction[:, 0], traction[:, 1]
    dj = jump[:, 1] - jump_tau_old
    jtol = rtol * max(float(np.abs(jump).max()) if len(jump) else 0.0, 1e-12)
    ftol = rtol * np.abs(traction).max(axis=1)
    ok = np.ones(len(mode), dtype=bool)
    st = mode == STICK
    ok[st] = (f_n[st] <= ftol[st]) & (np.abs(f_t[st]) <= -mu_s * f_n[st] + ftol[st])
    sl = mode == SLIP
    ok[sl] = (f_n[sl] <= ftol[sl]) & (slip_dir[sl] * dj[sl] <= jtol)
    op = mode == OPEN
    ok[op] = jump[op, 0] - gap >= -jtol
    return ok
