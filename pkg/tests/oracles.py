"""Closed-form reference solutions shared by the test modules."""
import numpy as np

from wingcrack.meshkit import FractureNetwork, Rectangle
from wingcrack.microfrac import Elastic, MicroBCs, compute_sifs, make_micro_domain, solve_micro

E, NU = 40e9, 0.2


def uniform_stress_displacement(sxx, syy, sxy, E=E, nu=NU, center=(1.0, 1.0)):
    """Plane-strain displacement of a homogeneous stress state (rigid motion removed at ``center``)."""
    f = (1 + nu) / E
    exx = f * ((1 - nu) * sxx - nu * syy)
    eyy = f * ((1 - nu) * syy - nu * sxx)
    gxy = 2 * f * sxy

    def disp(pts):
        x = np.asarray(pts)[:, 0] - center[0]
        y = np.asarray(pts)[:, 1] - center[1]
        return np.stack([exx * x + 0.5 * gxy * y, 0.5 * gxy * x + eyy * y], axis=1)

    return disp


def center_crack_sifs(sxx=0.0, syy=0.0, sxy=0.0, c=0.05, W=2.0, dh=None):
    """SIFs at the right tip of a traction-free horizontal crack of half-length c in a W x W plate."""
    dh = c / 10 if dh is None else dh
    box = Rectangle.from_size(W, W)
    net = FractureNetwork(((np.array([W / 2 - c, W / 2]), np.array([W / 2 + c, W / 2])),), (("L", "R"),))
    dom = make_micro_domain(box, net, (0, 1), dh, Elastic(E, NU))
    bcs = MicroBCs(uniform_stress_displacement(sxx, syy, sxy, center=(W / 2, W / 2)))
    return compute_sifs(solve_micro(dom, bcs, contact=False))


def mts_brute_force(K_I, K_II, n=10_000):
    """Angle maximizing the tangential stress over an n-point grid of (-π, π)."""
    th = np.linspace(-np.pi, np.pi, n + 2)[1:-1]
    c = np.cos(th / 2)
    s = c * (K_I * c**2 - 1.5 * K_II * np.sin(th))
    return float(th[np.argmax(s)])


def closed_crack_sifs(syy, sxy, mu_s, c=0.05, W=2.0, dh=None):
    """Right-tip SIFs of a horizontal crack grown at the microscale (frictional contact faces)."""
    dh = c / 10 if dh is None else dh
    box = Rectangle.from_size(W, W)
    net = FractureNetwork(((np.array([W / 2 - c, W / 2]), np.array([W / 2 + c, W / 2])),), (("L", "R"),))
    dom = make_micro_domain(box, net, (0, 1), dh, Elastic(E, NU, mu_s=mu_s), n_orig=(1,))
    bcs = MicroBCs(uniform_stress_displacement(0.0, syy, sxy, center=(W / 2, W / 2)))
    return compute_sifs(solve_micro(dom, bcs, contact=True))
