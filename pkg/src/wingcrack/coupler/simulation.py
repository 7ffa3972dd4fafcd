"""Multiscale time loop: macro step, per-tip micro propagation, commits, remesh and remap."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..macrophys.material import BiotMaterial, FractureProps
from ..macrophys.solver import MacroProblem, NewtonOptions, StepReport
from ..macrophys.state import BoundaryConditions, InjectionSchedule, MacroState, zero_state
from ..meshkit.geometry import FractureNetwork, Rectangle, polyline_length
from ..meshkit.grid import Triangulation, split_along_fractures, triangulate_conforming
from ..meshkit.remesh import extend_fracture, rosette_remesh, tip_direction
from ..microfrac.domain import Elastic, build_micro_domain
from ..microfrac.propagate import MicroStep, micro_propagate_loop, solve_with_refinement
from ..microfrac.sif import (
    SIFPair,
    advance_lengths,
    compute_sifs,
    energy_release_rate,
    equivalent_k,
    kink_angle,
    propagation_check,
)
from .bcs import extract_micro_bcs
from .remap import compose_cell_maps, remap_state


@dataclass(frozen=True)
class NumericsParams:
    dH: float
    eps_m: float = 1.0
    eps_p: float = 0.5
    dt: float = 3600.0
    eps: float = 1e-2
    l: float = 2.0
    l_max: float | None = None
    newton_tol: float = 1e-8
    max_newton: int = 30
    h_max: float | None = None
    grade: float = 0.25
    fine_radius: float | None = None
    refine_rounds: int = 0
    restore_tol: float = 0.01
    restore_radius: float = 5.0

    def __post_init__(self):
        if not 0 < self.eps_m <= 1:
            raise ConfigError("eps_m must lie in (0, 1]")
        if not (self.eps_p > 0 and 0 < self.eps <= 1):
            raise ConfigError("eps_p must be positive and eps must lie in (0, 1]")
        for name in ("dH", "dt", "l"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def advance(self) -> float:
        """Micro advance cap l_max (defaults to ΔH)."""
        return self.l_max if self.l_max is not None else self.dH

    @property
    def commit_length(self) -> float:
        return self.eps_p * self.dH


@dataclass(frozen=True, eq=False)
class Scenario:
    domain: Rectangle
    network: FractureNetwork
    material: BiotMaterial
    props: FractureProps
    bc: BoundaryConditions
    schedule: InjectionSchedule
    numerics: NumericsParams
    t_end: float
    K_IC: float | None = None  # None evaluates SIFs without growing fractures
    stop_tip: str | None = None  # None: the first tip whose wing reaches the length
    stop_wing_length: float | None = None

    @property
    def elastic(self) -> Elastic:
        return Elastic(self.material.E, self.material.nu, self.material.alpha, self.props.mu_s)


@dataclass
class TipLedger:
    """Uncommitted micro growth per tip (polyline from the current macro tip) and last SIFs."""

    extension: dict = field(default_factory=dict)
    sifs: dict = field(default_factory=dict)
    theta0: dict = field(default_factory=dict)

    def length(self, tip: str) -> float:
        e = self.extension.get(tip)
        return polyline_length(e) if e is not None and len(e) > 1 else 0.0


def commit_propagation(extension, eps_p: float, dH: float):
    """Chord from the macro tip to the end of the micro polyline once it is at least ε_p ΔH long."""
    if extension is None or len(extension) < 2:
        return None
    e = np.asarray(extension, dtype=float)
    if polyline_length(e) < eps_p * dH * (1 - 1e-12):
        return None
    return np.stack([e[0], e[-1]])


def chord_angle(tri: Triangulation, tip_id: str, chord) -> tuple[float, float]:
    """(θ0 relative to the macro tip direction, chord length)."""
    k, end = tri.tip_lookup(tip_id)
    d = tip_direction(tri, k, end)
    v = chord[1] - chord[0]
    L = float(np.linalg.norm(v))
    return float(np.arctan2(d[0] * v[1] - d[1] * v[0], d @ v)), L


@dataclass(frozen=True)
class TipRecord:
    tip_id: str
    sifs: SIFPair | None
    theta0: float | None
    K_eq: float
    propagated: bool
    wing_length: float
    micro: tuple = ()


@dataclass(frozen=True, eq=False)
class StepResult:
    index: int
    t: float
    dt: float
    state: MacroState
    report: StepReport
    tips: tuple
    commits: tuple
    grid: object
    solved: MacroState | None = None  # converged macro state before any commit remap
    prev_jump_tau: np.ndarray | None = None  # tangential jump at the start of the step


class Simulation:
    """Mutable driver around immutable grids and states."""

    def __init__(self, sc: Scenario, tri: Triangulation | None = None, state: MacroState | None = None):
        self.sc = sc
        num = sc.numerics
        sc.network.validate(sc.domain, num.dH)
        if tri is None:
            tri = triangulate_conforming(
                sc.domain, sc.network, num.dH, h_max=num.h_max, grade=num.grade,
                fine_radius=num.fine_radius if num.fine_radius is not None else 0.0,
            )
        self._set_grid(tri)
        self.state = state if state is not None else zero_state(self.grid, sc.props.a0)
        self.ledger = TipLedger()
        self.wings = {tid: [x.copy()] for tid, _, _, x in sc.network.tips()}
        self.dt = num.dt
        self.step_index = 0
        self.commit_count = 0
        self.restore_tips: list = []
        self.stop_reason: str | None = None

    # ------------------------------------------------------------------
    def _set_grid(self, tri: Triangulation):
        self.tri = tri
        self.grid = split_along_fractures(tri)
        sc = self.sc
        opts = NewtonOptions(tol=sc.numerics.newton_tol, max_iter=sc.numerics.max_newton)
        self.problem = MacroProblem(self.grid, sc.material, sc.props, sc.bc, sc.schedule, opts, h_ref=sc.numerics.dH)

    @property
    def t(self) -> float:
        return self.state.t

    def tip_ids(self):
        return [tid for tid, _, _, _ in self.tri.network.tips()]

    def wing_length(self, tip: str) -> float:
        w = self.wings[tip]
        return polyline_length(np.array(w)) if len(w) > 1 else 0.0

    # ------------------------------------------------------------------
    def _micro_domain(self, state, tip):
        num = self.sc.numerics
        return build_micro_domain(
            self.grid, state, tip, num.l, num.eps_m, self.sc.elastic, extension=self.ledger.extension.get(tip)
        )

    def evaluate_tips(self, state) -> tuple[list, dict]:
        """Micro evaluation of every tip against one macro snapshot."""
        num = self.sc.numerics
        K_IC = self.sc.K_IC
        first = {}
        for tip in self.tip_ids():
            dom = self._micro_domain(state, tip)
            bcs = extract_micro_bcs(self.grid, state, dom)
            sol = solve_with_refinement(dom, bcs, num.refine_rounds)
            K = compute_sifs(sol)
            first[tip] = (dom, bcs, K)
        records, growth = [], {}
        if K_IC is None:
            for tip, (dom, bcs, K) in first.items():
                th = kink_angle(K)
                keq = equivalent_k(K, th) if th is not None else 0.0
                step = MicroStep(K, th, keq, False, 0.0)
                records.append(TipRecord(tip, K, th, keq, False, self.wing_length(tip), (step,)))
            return records, growth
        crit = {}
        for tip, (dom, bcs, K) in first.items():
            th = kink_angle(K)
            if propagation_check(K, th, K_IC):
                crit[tip] = energy_release_rate(K, self.sc.material.E, self.sc.material.nu)
        steps = {}
        if crit:
            names = sorted(crit)
            lens = advance_lengths([crit[n] for n in names], num.advance)
            steps = dict(zip(names, lens))
        for tip, (dom, bcs, K) in first.items():
            if tip in steps:
                cap = max(num.commit_length - self.ledger.length(tip), 0.0) + num.commit_length
                g = micro_propagate_loop(dom, bcs, K_IC, float(steps[tip]), cap, refine_rounds=num.refine_rounds)
                growth[tip] = g
                hist = tuple(g.history)
            else:
                th = kink_angle(K)
                keq = equivalent_k(K, th) if th is not None else 0.0
                hist = (MicroStep(K, th, keq, False, 0.0),)
            h0 = hist[0]
            records.append(TipRecord(tip, h0.sifs, h0.theta0, h0.K_eq, any(h.propagated for h in hist), 0.0, hist))
        return records, growth

    def _commit(self, growth: dict):
        """Apply every tip whose ledger reached the threshold; returns committed tip ids."""
        num = self.sc.numerics
        for tip, g in growth.items():
            self.ledger.extension[tip] = g.extension
        chords = {}
        for tip in self.tip_ids():
            c = commit_propagation(self.ledger.extension.get(tip), num.eps_p, num.dH)
            if c is not None:
                chords[tip] = c
        if not chords:
            return ()
        tri = self.tri
        kept, sizes = [], []
        for tip in sorted(chords):
            theta0, L = chord_angle(tri, tip, chords[tip])
            res = rosette_remesh(tri, tip, theta0, L, num.dH, num.advance)
            tri = extend_fracture(res.tri, tip, theta0, L)
            kept.append(res.kept)
            sizes.append(len(tri.tris))
            self.wings[tip].append(chords[tip][1].copy())
            self.ledger.extension.pop(tip, None)
        old_grid = self.grid
        cell_map = compose_cell_maps(*kept, sizes=sizes)
        self._set_grid(tri)
        self.state = remap_state(old_grid, self.grid, self.state, cell_map, a0=self.sc.props.a0)
        self.commit_count += len(chords)
        return tuple(sorted(chords))

    def _near_tip_cells(self, tips):
        x = [self.tri.nodes[v] for tid, k, end, v in self.tri.tip_nodes() if tid in tips]
        if not x:
            return np.zeros(0, dtype=np.int64)
        d = np.min([np.linalg.norm(self.grid.cell_centers - xi, axis=1) for xi in x], axis=0)
        return np.where(d <= self.sc.numerics.restore_radius * self.sc.numerics.dH)[0]

    # ------------------------------------------------------------------
    def finished(self) -> bool:
        sc = self.sc
        if self.t >= sc.t_end * (1 - 1e-12):
            self.stop_reason = "t_end"
            return True
        if sc.stop_wing_length is not None:
            tips = [sc.stop_tip] if sc.stop_tip is not None else sorted(self.wings)
            if any(self.wing_length(t) >= sc.stop_wing_length * (1 - 1e-9) for t in tips):
                self.stop_reason = "wing_length"
                return True
        return False

    def step(self) -> StepResult:
        num = self.sc.numerics
        dt = min(self.dt, self.sc.t_end - self.t)
        old = self.state
        new, rep = self.problem.solve_time_step(old, dt)
        records, growth = self.evaluate_tips(new)
        # Δt restoration once the near-tip pressure has settled
        if self.restore_tips:
            cells = self._near_tip_cells(self.restore_tips)
            if len(cells):
                ref = max(float(np.abs(old.p[cells]).max()), 1.0)
                change = float(np.abs(new.p[cells] - old.p[cells]).max()) / ref
            else:
                change = 0.0
            if change < num.restore_tol:
                self.dt = num.dt
                self.restore_tips = []
        self.state = new
        commits = self._commit(growth)
        for tip, g in growth.items():
            self.ledger.sifs[tip] = g.history[-1].sifs
            self.ledger.theta0[tip] = g.history[-1].theta0
        if commits:
            self.dt = num.eps * num.dt
            self.restore_tips = list(commits)
        self.step_index += 1
        recs = tuple(
            TipRecord(r.tip_id, r.sifs, r.theta0, r.K_eq, r.propagated, self.wing_length(r.tip_id), r.micro)
            for r in records
        )
        return StepResult(
            self.step_index, self.t, dt, self.state, rep, recs, commits, self.grid, new, old.jump[:, 1].copy()
        )

    def run(self, on_step=None):
        while not self.finished():
            res = self.step()
            if on_step is not None:
                on_step(res)
        return self.stop_reason


def advance_simulation(sc: Scenario, on_step=None) -> Simulation:
    sim = Simulation(sc)
    sim.run(on_step)
    return sim
