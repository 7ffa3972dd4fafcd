"""Material parameters for the poroelastic matrix and the fractures."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class BiotMaterial:
    E: float
    nu: float
    alpha: float
    phi: float
    c_p: float
    perm: float
    mu: float
    body_force: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.E > 0:
            raise ConfigError("E must be positive")
        if not 0.0 < self.nu < 0.5:
            raise ConfigError("Poisson ratio must lie in (0, 0.5)")
        if not 0.0 <= self.phi <= self.alpha <= 1.0:
            raise ConfigError("need 0 <= phi <= alpha <= 1")
        if not (self.perm > 0 and self.mu > 0):
            raise ConfigError("permeability and viscosity must be positive")
        if not self.M > 0:
            raise ConfigError("storage coefficient must be positive")

    @property
    def bulk(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def shear(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lame(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def M(self) -> float:
        """Storage coefficient phi*c_p + (alpha - phi)/K."""
        return self.phi * self.c_p + (self.alpha - self.phi) / self.bulk

    @property
    def mobility(self) -> float:
        return self.perm / self.mu

    @property
    def p_wave(self) -> float:
        """Plane-strain constrained modulus E(1-nu)/((1+nu)(1-2nu))."""
        return self.lame + 2.0 * self.shear


@dataclass(frozen=True)
class FractureProps:
    a0: float
    mu_s: float
    psi: float
    alpha: float = 1.0
    K_IC: float = math.inf
    dilation_in_aperture: bool = True

    def __post_init__(self):
        if not self.a0 > 0:
            raise ConfigError("initial aperture must be positive")
        if not self.mu_s > 0:
            raise ConfigError("friction coefficient must be positive")
        if not 0.0 <= self.psi < math.pi / 2:
            raise ConfigError("dilation angle must lie in [0, pi/2)")


def cubic_law(a):
    """Fracture transmissivity a^3/12 (m^3)."""
    return a**3 / 12.0


def normal_conductivity(a, mu):
    """Interface conductivity 2*(a^3/12)/(mu*a^2) = a/(6 mu)."""
    return 2.0 * cubic_law(a) / (mu * a**2)
