"""Stress intensity factors, kink angle and propagation rules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError, PropagationError

PARIS_EXPONENT = 0.35
KINK_LIMIT = np.arccos(1.0 / 3.0)  # 70.53°, pure mode II


@dataclass(frozen=True)
class SIFPair:
    K_I: float
    K_II: float

    def __post_init__(self):
        if not (np.isfinite(self.K_I) and np.isfinite(self.K_II)):
            raise ValueError("stress intensity factors must be finite")

    def scaled(self, s: float) -> "SIFPair":
        return SIFPair(s * self.K_I, s * self.K_II)


@dataclass(frozen=True)
class PropagationPlan:
    tip_id: str
    propagate: bool
    theta0: float
    length: float
    G: float


def tip_frame(sol):
    """(tip, e1 outward, e2 left normal, upper-face sign) of the tip of interest."""
    dom = sol.domain
    e1 = dom.tip_direction()
    e2 = np.array([-e1[1], e1[0]])
    # the + side is left of the path direction, which is e1 at end 1 and -e1 at end 0
    upper_is_plus = dom.tip_key[1] == 1
    return dom.tip, e1, e2, upper_is_plus


def quarter_point_nodes(dom):
    """P2 node indices (B+, B-, C+, C-) on the two crack faces of the tip element ring."""
    g, mesh = dom.grid, dom.mesh
    tip = dom.tip_node
    if mesh.quarter_tip != tip:
        raise GeometryError("no quarter-point ring at the tip")
    ring = np.sum(np.any(mesh.elems[:, :3] == tip, axis=1))
    if ring != 8:
        raise GeometryError(f"quarter-point ring has {ring} elements, expected 8")
    k, end = dom.tip_key
    path = g.base.frac_paths[k]
    back = int(path[-2] if end == 1 else path[1])
    copies = np.where(g.node_parent == back)[0]
    if len(copies) != 2:
        raise GeometryError("crack face behind the tip is not split")
    c_plus, c_minus = int(copies[0]), int(copies[1])  # the original index stays on the + side
    b_plus = mesh.edge_mid[(min(tip, c_plus), max(tip, c_plus))]
    b_minus = mesh.edge_mid[(min(tip, c_minus), max(tip, c_minus))]
    return b_plus, b_minus, c_plus, c_minus


def compute_sifs(sol) -> SIFPair:
    """Plane-strain displacement correlation on the quarter-point crack faces.

    K = E / (8 (1 - ν²)) √(2π / L) (4 Δu_B - Δu_C), with Δu the upper minus
    lower face displacement in the tip frame and L the tip element edge.
    """
    dom = sol.domain
    bp, bm, cp, cm = quarter_point_nodes(dom)
    U = sol.nodal
    X = dom.mesh.nodes
    tip, e1, e2, upper_plus = tip_frame(sol)
    s = 1.0 if upper_plus else -1.0
    dB = s * (U[bp] - U[bm])
    dC = s * (U[cp] - U[cm])
    L = float(np.linalg.norm(X[cp] - tip))
    E, nu = dom.elastic.E, dom.elastic.nu
    coef = E / (8.0 * (1.0 - nu**2)) * np.sqrt(2.0 * np.pi / L)
    comb = 4.0 * dB - dC
    return SIFPair(float(coef * comb @ e2), float(coef * comb @ e1))


def sigma_theta(K_I, K_II, theta):
    """Tangential stress √(2πr) σ_θ at angle θ (maximal tangential stress theory)."""
    c = np.cos(theta / 2)
    return c * (K_I * c**2 - 1.5 * K_II * np.sin(theta))


def equivalent_k(sifs: SIFPair, theta0: float) -> float:
    """K_eq = K_I cos³(θ0/2) - (3/2) K_II cos(θ0/2) sin θ0."""
    return float(sigma_theta(sifs.K_I, sifs.K_II, theta0))


def kink_angle(sifs: SIFPair):
    """Direction of maximal tangential stress; None for a load-free tip."""
    KI, KII = sifs.K_I, sifs.K_II
    if KI == 0.0 and KII == 0.0:
        return None
    if KII == 0.0:
        return 0.0 if KI > 0 else np.pi
    r = np.sqrt(KI**2 + 8 * KII**2)
    roots = [2 * np.arctan((KI - r) / (4 * KII)), 2 * np.arctan((KI + r) / (4 * KII))]

    def d2(t):
        # second derivative of σ_θ must be negative at a maximum
        h = 1e-5
        return sigma_theta(KI, KII, t + h) - 2 * sigma_theta(KI, KII, t) + sigma_theta(KI, KII, t - h)

    good = [t for t in roots if d2(t) < 0]
    if len(good) == 1:
        return float(good[0])
    cand = good or roots
    return float(max(cand, key=lambda t: sigma_theta(KI, KII, t)))


def propagation_check(sifs: SIFPair, theta0, K_IC: float) -> bool:
    if theta0 is None:
        return False
    return equivalent_k(sifs, theta0) >= K_IC


def energy_release_rate(sifs: SIFPair, E: float, nu: float) -> float:
    """Plane-strain Irwin relation G = (K_I² + K_II²)(1 - ν²)/E."""
    return (sifs.K_I**2 + sifs.K_II**2) * (1 - nu**2) / E


def advance_lengths(G, l_max: float) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if np.any(G < 0):
        raise PropagationError("energy release rates must be non-negative")
    if G.size == 0 or not G.max() > 0:
        raise PropagationError("no tip has a positive energy release rate")
    return l_max * (G / G.max()) ** PARIS_EXPONENT
