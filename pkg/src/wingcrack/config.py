"""Strict JSON scenario configuration and its translation to a coupled scenario."""
from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coupler.simulation import NumericsParams, Scenario
from .errors import ConfigError, WingcrackError
from .macrophys.material import BiotMaterial, FractureProps
from .macrophys.state import BoundaryConditions, Injection, InjectionSchedule, SideBC
from .meshkit.geometry import FractureNetwork, Rectangle

HOURS_SUFFIX = "_h"


def hours_to_seconds(data):
    """Recursively rename ``<key>_h`` entries to ``<key>`` with the value in seconds."""
    if isinstance(data, list):
        return [hours_to_seconds(v) for v in data]
    if not isinstance(data, dict):
        return data
    out = {}
    for k, v in data.items():
        if isinstance(k, str) and k.endswith(HOURS_SUFFIX) and len(k) > len(HOURS_SUFFIX):
            base = k[: -len(HOURS_SUFFIX)]
            if base in data:
                raise ConfigError(f"both {base!r} and {k!r} given")
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"{k}: hours must be a number")
            out[base] = float(v) * 3600.0
        else:
            out[k] = hours_to_seconds(v)
    return out


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainConfig(_Strict):
    lx: float = Field(gt=0)
    ly: float = Field(gt=0)


class FractureConfig(_Strict):
    points: list[tuple[float, float]] = Field(min_length=2)
    tip_ids: tuple[str, str] | None = None


class MaterialConfig(_Strict):
    E: float
    nu: float
    alpha: float
    phi: float
    c_p: float
    perm: float
    mu: float


class FracturePropsConfig(_Strict):
    a0: float
    mu_s: float
    psi_deg: float
    dilation_in_aperture: bool = True


class SideConfig(_Strict):
    kind: Literal["roller", "traction", "fixed", "free"]
    normal: float = 0.0
    shear: float = 0.0
    pressure: float | None = None


class BoundaryConfig(_Strict):
    left: SideConfig
    right: SideConfig
    bottom: SideConfig
    top: SideConfig


class InjectionConfig(_Strict):
    fracture: int = Field(ge=0)
    rate: float = Field(ge=0)
    start: float
    end: float


class NumericsConfig(_Strict):
    dH: float
    dt: float
    l: float
    eps_m: float = 1.0
    eps_p: float = 0.5
    eps: float = 1e-2
    l_max: float | None = None
    newton_tol: float = 1e-8
    max_newton: int = 30
    h_max: float | None = None
    grade: float = 0.25
    fine_radius: float | None = None
    refine_rounds: int = 0
    restore_tol: float = 0.01
    restore_radius: float = 5.0


class StopConfig(_Strict):
    t_end: float = Field(gt=0)
    wing_tip: str | None = None
    wing_length: float | None = Field(default=None, gt=0)


class OutputConfig(_Strict):
    vtk_every: int = Field(default=10, ge=0)
    checkpoint: bool = True


class ScenarioConfig(_Strict):
    name: str
    domain: DomainConfig
    fractures: list[FractureConfig] = Field(min_length=1)
    material: MaterialConfig
    fracture_props: FracturePropsConfig
    boundary: BoundaryConfig
    injection: list[InjectionConfig] = []
    numerics: NumericsConfig
    K_IC: float | None = None
    probes: dict[str, tuple[float, float]] = {}
    stop: StopConfig
    output: OutputConfig = OutputConfig()

    @field_validator("probes")
    @classmethod
    def _probe_names(cls, v):
        for name in v:
            if not name or not all(c.isalnum() or c == "_" for c in name):
                raise ValueError(f"probe name {name!r} must be alphanumeric or underscore")
        return v

    @model_validator(mode="after")
    def _references(self):
        nf = len(self.fractures)
        for i, inj in enumerate(self.injection):
            if inj.fracture >= nf:
                raise ValueError(f"injection[{i}] refers to fracture {inj.fracture}, only {nf} defined")
        for name, (x, y) in self.probes.items():
            if not (0.0 <= x <= self.domain.lx and 0.0 <= y <= self.domain.ly):
                raise ValueError(f"probe {name!r} lies outside the domain")
        ids = [t for f in self.tip_ids() for t in f]
        if len(set(ids)) != len(ids):
            raise ValueError("tip ids must be unique")
        if self.stop.wing_tip is not None and self.stop.wing_tip not in ids:
            raise ValueError(f"stop.wing_tip {self.stop.wing_tip!r} is not a tip id")
        if (self.stop.wing_tip is not None) and self.stop.wing_length is None:
            raise ValueError("stop.wing_tip needs stop.wing_length")
        return self

    def tip_ids(self) -> list[tuple[str, str]]:
        return [f.tip_ids if f.tip_ids is not None else (f"{k}a", f"{k}b") for k, f in enumerate(self.fractures)]

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def config_from_dict(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: configuration must be a JSON object")
    try:
        cfg = ScenarioConfig.model_validate(hours_to_seconds(data))
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    try:
        to_scenario(cfg)
    except ConfigError:
        raise
    except WingcrackError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_config(path) -> ScenarioConfig:
    """Read and validate a JSON scenario file; errors name the offending path."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def serialize_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def to_scenario(cfg: ScenarioConfig) -> Scenario:
    domain = Rectangle.from_size(cfg.domain.lx, cfg.domain.ly)
    network = FractureNetwork(tuple(tuple(f.points) for f in cfg.fractures), tuple(cfg.tip_ids()))
    m = cfg.material
    material = BiotMaterial(m.E, m.nu, m.alpha, m.phi, m.c_p, m.perm, m.mu)
    fp = cfg.fracture_props
    k_ic = cfg.K_IC if cfg.K_IC is not None else math.inf
    props = FractureProps(fp.a0, fp.mu_s, math.radians(fp.psi_deg), K_IC=k_ic, dilation_in_aperture=fp.dilation_in_aperture)
    b = cfg.boundary
    bc = BoundaryConditions(*(SideBC(s.kind, s.normal, s.shear, s.pressure) for s in (b.left, b.right, b.bottom, b.top)))
    schedule = InjectionSchedule(tuple(Injection(i.start, i.end, i.rate, i.fracture) for i in cfg.injection))
    numerics = NumericsParams(**cfg.numerics.model_dump())
    network.validate(domain, numerics.dH)
    return Scenario(
        domain, network, material, props, bc, schedule, numerics, cfg.stop.t_end,
        K_IC=cfg.K_IC, stop_tip=cfg.stop.wing_tip, stop_wing_length=cfg.stop.wing_length,
    )


def preset_names() -> list[str]:
    root = resources.files("wingcrack") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset_path(name: str):
    p = resources.files("wingcrack") / "presets" / f"{name}.json"
    if not p.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return p


def load_preset(name: str) -> ScenarioConfig:
    p = preset_path(name)
    try:
        return config_from_dict(json.loads(p.read_text()))
    except ConfigError as exc:
        raise ConfigError(f"preset {name}: {exc}") from None
