"""Macro/micro coupling: field transfer, commits, remap and the simulation loop."""
from .bcs import extract_micro_bcs
from .checkpoint import load_checkpoint, save_checkpoint
from .remap import compose_cell_maps, remap_state
from .simulation import (
    NumericsParams,
    Scenario,
    Simulation,
    StepResult,
    TipLedger,
    TipRecord,
    advance_simulation,
    commit_propagation,
)
from .transfer import cell_to_node, interpolate, interpolate_p1, node_field

__all__ = [
    "NumericsParams", "Scenario", "Simulation", "StepResult", "TipLedger", "TipRecord",
    "advance_simulation", "cell_to_node", "commit_propagation", "compose_cell_maps", "extract_micro_bcs",
    "interpolate", "interpolate_p1", "load_checkpoint", "node_field", "remap_state", "save_checkpoint",
]
