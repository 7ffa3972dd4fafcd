"""Fracture flow (cubic law), matrix-fracture interface fluxes and apertures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import WingcrackError
from .material import FractureProps, cubic_law, normal_conductivity


class ApertureError(WingcrackError):
    pass


def jumps_from_faces(grid, u_face: np.ndarray) -> np.ndarray:
    """(⟦u⟧_n, ⟦u⟧_τ) per fracture cell from + and - face displacements."""
    J = u_face[grid.fc_face_plus] - u_face[grid.fc_face_minus]
    return np.stack(
        [np.einsum("ij,ij->i", J, grid.fc_normals), np.einsum("ij,ij->i", J, grid.fc_tangents)], axis=1
    )


def aperture_update(jump, slip_acc_old, jump_tau_old, props: FractureProps, a0=None, strict=True):
    """Aperture a0 + ⟦u⟧_n + tan(ψ)·(accumulated slip incl. this step); returns (a, slip_acc)."""
    jump = np.atleast_2d(jump)
    a0 = props.a0 if a0 is None else a0
    slip = np.asarray(slip_acc_old) + np.abs(jump[:, 1] - np.asarray(jump_tau_old))
    a = a0 + jump[:, 0]
    if props.dilation_in_aperture:
        a = a + np.tan(props.psi) * slip
    if strict and np.any(a <= 0):
        raise ApertureError(f"non-positive aperture (min {a.min():.3e} m)")
    return a, slip


@dataclass(frozen=True, eq=False)
class FractureFlowDisc:
    """Two-point flux discretization of 1D fracture flow along each fracture."""

    length: np.ndarray  # (Nf,)
    pairs: np.ndarray  # (M,2) neighbouring fracture cells
    mu: float
    c_p: float

    def half_trans(self, a):
        return cubic_law(a) / self.mu / (0.5 * self.length)

    def transmissibility(self, a):
        """Face transmissibilities and derivatives w.r.t. a of each neighbour."""
        if len(self.pairs) == 0:
            z = np.zeros(0)
            return z, z, z
        t = self.half_trans(a)
        dt = 3.0 * a**2 / 12.0 / self.mu / (0.5 * self.length)
        tc, td = t[self.pairs[:, 0]], t[self.pairs[:, 1]]
        T = tc * td / (tc + td)
        dTc = (td / (tc + td)) ** 2 * dt[self.pairs[:, 0]]
        dTd = (tc / (tc + td)) ** 2 * dt[self.pairs[:, 1]]
        return T, dTc, dTd

    def fluid_content(self, a, p):
        """Fluid volume per unit thickness in each cell, linearized in pressure."""
        return self.length * a * (1.0 + self.c_p * p)


def assemble_fracture_flow(grid, state, props: FractureProps, material) -> FractureFlowDisc:
    if np.any(state.aperture <= 0):
        raise ApertureError("non-positive aperture in fracture flow assembly")
    return FractureFlowDisc(grid.fc_lengths.copy(), grid.frac_neighbors, material.mu, material.c_p)


def fracture_mass_residual(disc: FractureFlowDisc, a, a_old, p, p_old, inflow, dt, V):
    """Backward-Euler fracture mass balance per cell (m^2 per unit thickness).

    ``inflow`` is the total matrix-to-fracture rate (m^2/s) and ``V`` the
    volume injected over the step.
    """
    r = disc.length * (a - a_old) + disc.length * a * disc.c_p * (p - p_old)
    T, _, _ = disc.transmissibility(a)
    if len(T):
        q = T * (p[disc.pairs[:, 0]] - p[disc.pairs[:, 1]])
        np.add.at(r, disc.pairs[:, 0], dt * q)
        np.add.at(r, disc.pairs[:, 1], -dt * q)
    r -= dt * inflow
    r -= V
    return r


@dataclass(frozen=True, eq=False)
class InterfaceFluxes:
    kappa: np.ndarray
    lam_plus: np.ndarray
    lam_minus: np.ndarray


def assemble_interface(grid, state, material) -> InterfaceFluxes:
    """λ± = -κ (p_i - tr p±), positive for flow from the matrix into the fracture."""
    if len(grid.fc_face_plus) != len(state.p_frac):
        raise WingcrackError("interface projections do not match the fracture grid")
    kap = normal_conductivity(state.aperture, material.mu)
    lp = -kap * (state.p_frac - state.p_face[grid.fc_face_plus])
    lm = -kap * (state.p_frac - state.p_face[grid.fc_face_minus])
    return InterfaceFluxes(kap, lp, lm)
