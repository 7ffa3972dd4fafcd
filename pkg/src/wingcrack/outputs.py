"""Run outputs: time series, SIF history, fracture paths, VTK snapshots and the manifest."""
from __future__ import annotations

import csv
import json
import math
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, serialize_config
from .coupler.checkpoint import save_checkpoint
from .coupler.transfer import displacement_field, pressure_field
from .meshkit.io import write_mesh, write_vtk

TIMESERIES = "timeseries.csv"
SIF_HISTORY = "sif_history.csv"
PATHS = "fracture_paths.txt"
MANIFEST = "manifest.json"
CONFIG = "config.json"
MESH = "mesh_final.txt"
CHECKPOINT = "checkpoint.npz"
VTK_DIR = "vtk"


def num(x) -> str:
    """Shortest round-trip text of a float; 'nan' for missing values."""
    if x is None:
        return "nan"
    return repr(float(x))


def timeseries_header(probe_names) -> list[str]:
    cols = ["t_s", "tip_id", "K_I", "K_II", "theta0_deg", "wing_len_m"]
    for n in probe_names:
        cols += [f"probe_{n}_p_Pa", f"probe_{n}_ux_m", f"probe_{n}_uy_m"]
    return cols


SIF_HEADER = ["t", "tip_id", "K_I", "K_II", "theta0", "K_eq", "propagated"]


def probe_values(grid, state, probes: dict) -> list[float]:
    if not probes:
        return []
    pts = np.array([probes[n] for n in probes], dtype=float)
    p = pressure_field(grid, state.p, state.p_face)(pts)
    u = displacement_field(grid, state.u, state.u_face)(pts)
    out = []
    for i in range(len(pts)):
        out += [float(p[i]), float(u[i, 0]), float(u[i, 1])]
    return out


def versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "pydantic", "fastapi"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def write_paths_block(fh, t: float, tri) -> None:
    fh.write(f"# t_s {num(t)}\n")
    for k, p in enumerate(tri.frac_paths):
        xy = tri.nodes[np.asarray(p)]
        coords = " ".join(f"{num(x)} {num(y)}" for x, y in xy.tolist())
        fh.write(f"{k} {len(p)} {coords}\n")


class RunWriter:
    """Writes every file of one run directory; the manifest carries the run status."""

    def __init__(self, out_dir, cfg: ScenarioConfig, vtk_every: int | None = None):
        self.out = Path(out_dir)
        self.cfg = cfg
        self.vtk_every = cfg.output.vtk_every if vtk_every is None else int(vtk_every)
        self.probes = dict(cfg.probes)
        self.steps = 0
        self.commits = 0

    def start(self, sim) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / CONFIG).write_text(serialize_config(self.cfg))
        with open(self.out / TIMESERIES, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(timeseries_header(self.probes))
        with open(self.out / SIF_HISTORY, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(SIF_HEADER)
        with open(self.out / PATHS, "w") as fh:
            write_paths_block(fh, sim.t, sim.tri)
        if self.vtk_every:
            (self.out / VTK_DIR).mkdir(exist_ok=True)
            self.write_vtk(sim, 0)
        self.write_manifest("running", None, None, None)

    def record(self, res, sim) -> None:
        self.steps = res.index
        self.commits += len(res.commits)
        probes = [num(v) for v in probe_values(res.grid, res.state, self.probes)]
        with open(self.out / TIMESERIES, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for r in res.tips:
                K = r.sifs
                th = math.degrees(r.theta0) if r.theta0 is not None else None
                w.writerow(
                    [num(res.t), r.tip_id, num(K.K_I if K else None), num(K.K_II if K else None), num(th), num(r.wing_length)]
                    + probes
                )
        with open(self.out / SIF_HISTORY, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for r in res.tips:
                for h in r.micro or ():
                    w.writerow([num(res.t), r.tip_id, num(h.sifs.K_I), num(h.sifs.K_II), num(h.theta0), num(h.K_eq), int(h.propagated)])
        if res.commits:
            with open(self.out / PATHS, "a") as fh:
                write_paths_block(fh, res.t, sim.tri)
        if self.vtk_every and res.index % self.vtk_every == 0:
            self.write_vtk(sim, res.index)

    def write_vtk(self, sim, index: int) -> None:
        g, s = sim.grid, sim.state
        write_vtk(
            self.out / VTK_DIR / f"step_{index:05d}.vtk", g.nodes, g.cells,
            cell_data={"p": s.p, "u": s.u, "vol_strain": s.vol_strain},
            title=f"{self.cfg.name} t_s={num(s.t)}",
        )

    def finish(self, sim, status: str, exit_code: int, stop_reason, wall_time: float, error: str | None = None) -> None:
        if sim is not None:
            write_mesh(sim.tri, self.out / MESH)
            if self.cfg.output.checkpoint or status == "nonconvergence":
                save_checkpoint(self.out / CHECKPOINT, sim)
        self.write_manifest(status, exit_code, stop_reason, wall_time, error, sim)

    def write_manifest(self, status, exit_code, stop_reason, wall_time, error=None, sim=None) -> None:
        m = {
            "status": status,
            "exit_code": exit_code,
            "stop_reason": stop_reason,
            "error": error,
            "name": self.cfg.name,
            "config_sha256": self.cfg.config_hash(),
            "config": self.cfg.model_dump(mode="json"),
            "versions": versions(),
            "wall_time_s": wall_time,
            "steps": self.steps,
            "commits": self.commits,
            "final_time_s": sim.t if sim is not None else None,
            "wing_lengths_m": {t: sim.wing_length(t) for t in sorted(sim.wings)} if sim is not None else None,
        }
        (self.out / MANIFEST).write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
