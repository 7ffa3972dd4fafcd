"""Versioned restart files: triangulation, macro state, wing paths and the uncommitted ledger."""
from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..macrophys.state import MacroState
from ..meshkit.geometry import FractureNetwork
from ..meshkit.grid import Triangulation

FORMAT = "wingcrack-checkpoint"
VERSION = 1


def save_checkpoint(path, sim) -> Path:
    """Write ``sim`` to an npz archive with a JSON header; returns the path written."""
    path = Path(path)
    tri = sim.tri
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "t": sim.state.t,
        "dt": sim.dt,
        "step_index": sim.step_index,
        "commit_count": sim.commit_count,
        "restore_tips": list(sim.restore_tips),
        "tip_ids": [list(ids) for ids in tri.network.tip_ids],
        "h": tri.h,
        "params": {k: v for k, v in tri.params.items()},
        "wings": sorted(sim.wings),
        "ledger": sorted(sim.ledger.extension),
        "num_fractures": len(tri.frac_paths),
    }
    arrays = {"nodes": tri.nodes, "tris": tri.tris}
    for k, p in enumerate(tri.frac_paths):
        arrays[f"path_{k}"] = np.asarray(p)
        arrays[f"fracture_{k}"] = tri.network.fractures[k]
    for f in fields(MacroState):
        if f.name != "t":
            arrays[f"state_{f.name}"] = np.asarray(getattr(sim.state, f.name))
    for tip, w in sim.wings.items():
        arrays[f"wing_{tip}"] = np.asarray(w)
    for tip, e in sim.ledger.extension.items():
        arrays[f"ledger_{tip}"] = np.asarray(e)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path, scenario):
    """Rebuild a Simulation of ``scenario`` from a checkpoint written by :func:`save_checkpoint`."""
    from .simulation import Simulation

    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format") != FORMAT:
            raise ConfigError(f"{path}: not a checkpoint file")
        if meta.get("version") != VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        nf = meta["num_fractures"]
        network = FractureNetwork(
            tuple(z[f"fracture_{k}"] for k in range(nf)), tuple(tuple(ids) for ids in meta["tip_ids"])
        )
        tri = Triangulation(
            scenario.domain, network, z["nodes"], z["tris"], tuple(z[f"path_{k}"] for k in range(nf)),
            meta["h"], dict(meta["params"]),
        )
        kw = {f.name: z[f"state_{f.name}"] for f in fields(MacroState) if f.name != "t"}
        state = MacroState(t=meta["t"], **kw)
        wings = {tip: [x for x in z[f"wing_{tip}"]] for tip in meta["wings"]}
        ledger = {tip: z[f"ledger_{tip}"] for tip in meta["ledger"]}
    sim = Simulation(scenario, tri=tri, state=state)
    sim.wings = wings
    sim.ledger.extension = ledger
    sim.dt = meta["dt"]
    sim.step_index = meta["step_index"]
    sim.commit_count = meta["commit_count"]
    sim.restore_tips = list(meta["restore_tips"])
    return sim
