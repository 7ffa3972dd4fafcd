"""Tip-local P2 elasticity, stress intensity factors and propagation rules."""
from .domain import (
    Elastic,
    MicroBCs,
    MicroDomain,
    MicroSolution,
    build_micro_domain,
    extend_micro_domain,
    make_micro_domain,
    solve_micro,
)
from .sif import (
    PropagationPlan,
    SIFPair,
    advance_lengths,
    compute_sifs,
    energy_release_rate,
    equivalent_k,
    kink_angle,
    propagation_check,
)

__all__ = [
    "Elastic", "MicroBCs", "MicroDomain", "MicroSolution", "PropagationPlan", "SIFPair",
    "advance_lengths", "build_micro_domain", "compute_sifs", "energy_release_rate", "equivalent_k",
    "extend_micro_domain", "kink_angle", "make_micro_domain", "propagation_check", "solve_micro",
]
