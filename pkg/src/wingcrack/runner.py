"""Drive one configured scenario to completion and map failures to exit codes."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from .config import ScenarioConfig, to_scenario
from .coupler.simulation import Simulation
from .errors import ConfigError, GeometryError, LinearSolverError, NonConvergenceError, PropagationError
from .outputs import RunWriter

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_NONCONVERGENCE = 2
EXIT_GEOMETRY = 3
EXIT_CONFIG = 4


@dataclass(frozen=True)
class RunResult:
    exit_code: int
    status: str
    stop_reason: str | None
    out_dir: str
    steps: int
    commits: int
    message: str | None = None


def run_config(cfg: ScenarioConfig, out_dir, vtk_every: int | None = None, on_step=None) -> RunResult:
    """Run ``cfg`` writing all outputs into ``out_dir``."""
    t0 = time.perf_counter()
    writer = RunWriter(out_dir, cfg, vtk_every)
    sim = None
    try:
        sim = Simulation(to_scenario(cfg))
    except (ConfigError, GeometryError) as exc:
        return RunResult(EXIT_CONFIG, "config_error", None, str(out_dir), 0, 0, str(exc))
    try:
        writer.start(sim)
    except OSError as exc:
        return RunResult(EXIT_IO, "io_error", None, str(out_dir), 0, 0, str(exc))
    status, code, msg = "complete", EXIT_OK, None
    try:
        while not sim.finished():
            res = sim.step()
            writer.record(res, sim)
            log.info("step %d t=%.1f s dt=%.1f s commits=%s", res.index, res.t, res.dt, res.commits)
            if on_step is not None:
                on_step(res)
    except (NonConvergenceError, LinearSolverError) as exc:
        status, code, msg = "nonconvergence", EXIT_NONCONVERGENCE, str(exc)
    except (GeometryError, PropagationError) as exc:
        status, code, msg = "geometry_abort", EXIT_GEOMETRY, str(exc)
    except OSError as exc:
        status, code, msg = "io_error", EXIT_IO, str(exc)
    if msg:
        log.error("%s: %s", status, msg)
    wall = time.perf_counter() - t0
    try:
        writer.finish(sim, status, code, sim.stop_reason if code == EXIT_OK else None, wall, msg)
    except OSError as exc:
        return RunResult(EXIT_IO, "io_error", None, str(out_dir), writer.steps, writer.commits, str(exc))
    return RunResult(code, status, sim.stop_reason if code == EXIT_OK else None, str(out_dir), writer.steps, writer.commits, msg)
