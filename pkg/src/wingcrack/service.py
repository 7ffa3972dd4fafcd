"""HTTP service around the simulator core; the command-line client talks to it."""
from __future__ import annotations

import json
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict

from . import config as cfgmod
from .errors import ConfigError
from .runner import EXIT_CONFIG, run_config


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict[str, Any]


class ValidateResponse(BaseModel):
    valid: bool
    name: str | None = None
    config_sha256: str | None = None
    error: str | None = None


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict[str, Any]
    out_dir: str
    vtk_every: int | None = None


class RunResponse(BaseModel):
    exit_code: int
    status: str
    stop_reason: str | None = None
    out_dir: str
    steps: int = 0
    commits: int = 0
    message: str | None = None


app = FastAPI(title="wingcrack", version="1")


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/presets")
def list_presets() -> list[str]:
    return cfgmod.preset_names()


@app.get("/presets/{name}")
def get_preset(name: str) -> dict[str, Any]:
    try:
        return json.loads(cfgmod.preset_path(name).read_text())
    except ConfigError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None


@app.post("/validate")
def validate(req: ValidateRequest) -> ValidateResponse:
    try:
        cfg = cfgmod.config_from_dict(req.config)
    except ConfigError as exc:
        return ValidateResponse(valid=False, error=str(exc))
    return ValidateResponse(valid=True, name=cfg.name, config_sha256=cfg.config_hash())


@app.post("/runs")
def create_run(req: RunRequest) -> RunResponse:
    """Run a scenario synchronously; config errors come back as exit code 4."""
    try:
        cfg = cfgmod.config_from_dict(req.config)
    except ConfigError as exc:
        return RunResponse(exit_code=EXIT_CONFIG, status="config_error", out_dir=req.out_dir, message=str(exc))
    res = run_config(cfg, req.out_dir, req.vtk_every)
    return RunResponse(**res.__dict__)
