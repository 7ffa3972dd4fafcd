"""Macroscale state, boundary conditions and injection schedules."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError
from ..meshkit.geometry import SIDES

OPEN, STICK, SLIP = 0, 1, 2
MODE_NAMES = {OPEN: "open", STICK: "stick", SLIP: "slip"}


@dataclass(frozen=True)
class SideBC:
    """Mechanical and flow condition on one side of the rectangle.

    kind: 'roller' (zero normal displacement, zero shear traction),
    'traction' (prescribed normal/shear traction, Pa, tensile positive),
    'fixed' (zero displacement) or 'free'. Flow is no-flow unless
    ``pressure`` is given.
    """

    kind: str = "free"
    normal: float = 0.0
    shear: float = 0.0
    pressure: float | None = None

    def __post_init__(self):
        if self.kind not in ("roller", "traction", "fixed", "free"):
            raise ConfigError(f"unknown boundary kind {self.kind!r}")


@dataclass(frozen=True)
class BoundaryConditions:
    left: SideBC = SideBC("roller")
    right: SideBC = SideBC("traction", normal=-20e6)
    bottom: SideBC = SideBC("roller")
    top: SideBC = SideBC("traction", normal=-10e6)

    def side(self, i: int) -> SideBC:
        return getattr(self, SIDES[i])


@dataclass(frozen=True)
class Injection:
    t_start: float
    t_end: float
    rate: float
    fracture: int


@dataclass(frozen=True)
class InjectionSchedule:
    entries: tuple = ()

    def __post_init__(self):
        by_frac: dict = {}
        for e in self.entries:
            if e.rate < 0:
                raise ConfigError("injection rate must be non-negative")
            if not e.t_end > e.t_start:
                raise ConfigError("injection interval must have positive length")
            by_frac.setdefault(e.fracture, []).append((e.t_start, e.t_end))
        for k, iv in by_frac.items():
            iv.sort()
            for (a0, a1), (b0, b1) in zip(iv[:-1], iv[1:]):
                if b0 < a1:
                    raise ConfigError(f"overlapping injection intervals on fracture {k}")

    def volume(self, fracture: int, t0: float, t1: float) -> float:
        """Injected volume per unit thickness (m^2) over [t0, t1]."""
        v = 0.0
        for e in self.entries:
            if e.fracture == fracture:
                v += e.rate * max(0.0, min(t1, e.t_end) - max(t0, e.t_start))
        return v

    def rate(self, fracture: int, t0: float, t1: float) -> float:
        return self.volume(fracture, t0, t1) / (t1 - t0)


@dataclass(frozen=True, eq=False)
class MacroState:
    """All macroscale unknowns at one time level.

    Fracture quantities are per 1D cell: ``traction`` holds (f_n, f_τ) with
    f_n <= 0 in compression; ``jump`` holds (⟦u⟧_n, ⟦u⟧_τ) with opening positive.
    """

    t: float
    u: np.ndarray
    p: np.ndarray
    u_face: np.ndarray
    p_face: np.ndarray
    p_frac: np.ndarray
    traction: np.ndarray
    jump: np.ndarray
    aperture: np.ndarray
    slip_acc: np.ndarray
    mode: np.ndarray
    flux_if: np.ndarray  # (Nf, 2) interface flux λ on (+, -) sides, per unit length
    vol_strain: np.ndarray  # cell-average div u
    a0: np.ndarray = field(default=None)

    @property
    def num_frac_cells(self) -> int:
        return len(self.p_frac)

    def copy(self, **kw) -> "MacroState":
        return replace(self, **kw)


def zero_state(grid, a0: float, mode: int = STICK) -> MacroState:
    T, F, Nf = grid.num_cells, grid.num_faces, grid.num_frac_cells
    return MacroState(
        t=0.0,
        u=np.zeros((T, 2)),
        p=np.zeros(T),
        u_face=np.zeros((F, 2)),
        p_face=np.zeros(F),
        p_frac=np.zeros(Nf),
        traction=np.zeros((Nf, 2)),
        jump=np.zeros((Nf, 2)),
        aperture=np.full(Nf, float(a0)),
        slip_acc=np.zeros(Nf),
        mode=np.full(Nf, mode, dtype=np.int64),
        flux_if=np.zeros((Nf, 2)),
        vol_strain=np.zeros(T),
        a0=np.full(Nf, float(a0)),
    )
