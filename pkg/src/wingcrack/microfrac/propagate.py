"""Repeated micro solves with fixed boundary data until the tip is sub-critical."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PropagationError
from .domain import MicroBCs, MicroDomain, extend_micro_domain, solve_micro
from .refine import adaptive_refine
from .sif import SIFPair, compute_sifs, equivalent_k, kink_angle, propagation_check

MAX_MICRO_ITERATIONS = 50
# a remaining cap below this fraction of the step is not grown (avoids slivers at the tip)
MIN_STEP_FRACTION = 0.25


@dataclass(frozen=True)
class MicroStep:
    sifs: SIFPair
    theta0: float | None
    K_eq: float
    propagated: bool
    length: float


@dataclass(frozen=True, eq=False)
class MicroGrowth:
    domain: MicroDomain
    extension: np.ndarray  # polyline from the macro tip (1 point when nothing grew)
    history: list = field(default_factory=list)

    @property
    def length(self) -> float:
        e = self.extension
        return float(np.linalg.norm(np.diff(e, axis=0), axis=1).sum()) if len(e) > 1 else 0.0

    @property
    def first(self) -> MicroStep:
        return self.history[0]


def solve_with_refinement(dom: MicroDomain, bcs: MicroBCs, rounds: int = 0):
    sol = solve_micro(dom, bcs)
    if rounds:
        sol = adaptive_refine(sol, lambda d: solve_micro(d, bcs), rounds)
    return sol


def micro_propagate_loop(
    dom: MicroDomain,
    bcs: MicroBCs,
    K_IC: float,
    l_max: float,
    cap: float = np.inf,
    *,
    refine_rounds: int = 0,
    max_iterations: int = MAX_MICRO_ITERATIONS,
) -> MicroGrowth:
    """Grow the tip of interest by steps of ``l_max`` while K_eq >= K_IC and the cap allows.

    Boundary data stay fixed. The returned history holds one entry per
    solve; the last entry describes the final (non-growing) state.
    """
    if not l_max > 0:
        raise PropagationError("micro advance length must be positive")
    history = []
    grown = 0.0
    for it in range(max_iterations + 1):
        sol = solve_with_refinement(dom, bcs, refine_rounds)
        sifs = compute_sifs(sol)
        theta = kink_angle(sifs)
        keq = equivalent_k(sifs, theta) if theta is not None else 0.0
        step = min(l_max, cap - grown)
        go = propagation_check(sifs, theta, K_IC) and step >= MIN_STEP_FRACTION * l_max
        if go and it == max_iterations:
            raise PropagationError(f"tip {dom.tip_id}: more than {max_iterations} micro propagation steps")
        history.append(MicroStep(sifs, theta, keq, bool(go), step if go else 0.0))
        if not go:
            break
        dom = extend_micro_domain(dom, theta, step)
        grown += step
    return MicroGrowth(dom, dom.extension(), history)
