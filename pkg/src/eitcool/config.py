"""Run configuration: strict YAML schema, overrides, hashing and scheme assembly.

Units in the file: ordinary frequencies in Hz (the code works with angular
frequencies internally), times in s, magnetic field in T, mass in amu.  The
main detuning ``scheme.delta`` is given in units of the linewidth.
"""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .motion import AMU, GeometryConfig, MotionalMode, build_modes
from .scheme import TWO_PI, AtomParams, Scheme, SchemeParams

MODE_NAMES = ("axial", "radial1", "radial2")
ROLES = ("probe", "pump", "pump_866", "repump")
Vec3 = tuple[float, float, float]


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class TrapConfig(_Strict):
    nu_axial: float = Field(904.6e3, gt=0)  # Hz
    nu_radial1: float = Field(2.552e6, gt=0)  # Hz
    nu_radial2: float = Field(2.540e6, gt=0)  # Hz
    mass: float = Field(40.0, gt=0)  # amu
    B: float = Field(416e-6, gt=0)  # T


class BeamSpec(_Strict):
    role: Literal["probe", "pump", "pump_866", "repump"]
    rabi: float = Field(ge=0)  # Hz
    direction: Vec3
    detuning: float | None = None  # Hz from the bare D-P line; single-EIT repump only

    @field_validator("direction")
    @classmethod
    def _unit(cls, v):
        n = float(np.linalg.norm(v))
        if n == 0:
            raise ValueError("direction must be nonzero")
        return tuple(float(x) / n for x in v)


class TuneConfig(_Strict):
    enabled: bool = True
    pump: Literal["axial", "radial1", "radial2"] = "radial1"
    pump_866: Literal["axial", "radial1", "radial2"] = "axial"
    refine: bool = True
    rel_tol: float = Field(0.005, gt=0, lt=0.5)


class SchemeConfig(_Strict):
    kind: Literal["deit", "eit"] = "deit"
    delta: float = Field(3.4, gt=0)  # units of gamma
    gamma: float = Field(20.7e6, gt=0)  # Hz, P1/2 linewidth
    tune: TuneConfig = TuneConfig()


class GeometrySection(_Strict):
    logic_angle: float = 54.7  # deg
    logic_inplane: float = 45.0  # deg
    radial_mode_angles: tuple[float, float] = (26.0, -64.0)  # deg


class SimulationConfig(_Strict):
    mode: Literal["axial", "radial1", "radial2"] = "axial"
    fock_dim: int = Field(17, ge=2, le=60)
    ld_order: Union[Literal[0, 1, 2], Literal["full"]] = 2
    recoil: float = Field(0.4, ge=0, le=1)
    branching_SD: float = Field(0.064, ge=0, lt=1)
    nbar0: dict[Literal["axial", "radial1", "radial2"], float] = {"axial": 11.1, "radial1": 3.6, "radial2": 3.6}
    start: Literal["S+1/2", "dressed"] = "S+1/2"  # initial electronic state
    t_final: float = Field(670e-6, gt=0)  # s
    sample_dt: float = Field(5e-6, gt=0)  # s
    fixed_step: float | None = Field(1e-6, gt=0)  # s; null selects adaptive steps
    tol: float = Field(1e-8, gt=0)
    steady_tol: float = Field(1e-10, gt=0)

    @field_validator("nbar0")
    @classmethod
    def _nbar0(cls, v):
        missing = sorted(set(MODE_NAMES) - set(v))
        if missing:
            raise ValueError(f"nbar0 needs a value for {missing}")
        if any(x < 0 for x in v.values()):
            raise ValueError("nbar0 values must be >= 0")
        return v

    @model_validator(mode="after")
    def _grid(self):
        n = round(self.t_final / self.sample_dt)
        if n < 1 or abs(n * self.sample_dt - self.t_final) > 1e-9 * self.t_final:
            raise ValueError("t_final must be a positive integer multiple of sample_dt")
        return self


class SpectrumConfig(_Strict):
    start: float = -4e6  # Hz
    stop: float = 4e6  # Hz
    points: int = Field(161, ge=3, le=2001)

    @model_validator(mode="after")
    def _order(self):
        if not self.stop > self.start:
            raise ValueError("spectrum stop must exceed start")
        return self


class ScanConfig(_Strict):
    parameter: str = "scheme.delta"
    grid: list[float] = [1.0, 1.5, 2.0, 2.5, 3.0, 3.4, 4.0]
    modes: list[Literal["axial", "radial1", "radial2"]] = ["axial", "radial1"]
    scale_probe: bool = True  # keep probe Rabi / delta fixed along a delta scan
    rates: bool = True

    @field_validator("grid")
    @classmethod
    def _monotone(cls, v):
        if not v:
            raise ValueError("scan grid must not be empty")
        d = np.diff(v)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("scan grid must be strictly monotone")
        return v

    @field_validator("modes")
    @classmethod
    def _modes(cls, v):
        if not v:
            raise ValueError("scan needs at least one mode")
        return v


class OutputConfig(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


def _default_beams() -> list[BeamSpec]:
    return [
        BeamSpec(role="probe", rabi=6e6, direction=(0, 0, 1)),
        BeamSpec(role="pump", rabi=27.8e6, direction=(1, 0, 0)),
        BeamSpec(role="pump_866", rabi=36.8e6, direction=(0, 0, -1)),
        BeamSpec(role="repump", rabi=8e6, direction=(0, 0, -1)),
    ]


class RunConfig(_Strict):
    trap: TrapConfig = TrapConfig()
    scheme: SchemeConfig = SchemeConfig()
    beams: list[BeamSpec] = Field(default_factory=_default_beams)
    geometry: GeometrySection = GeometrySection()
    simulation: SimulationConfig = SimulationConfig()
    spectrum: SpectrumConfig = SpectrumConfig()
    scan: ScanConfig = ScanConfig()
    output: OutputConfig = OutputConfig()

    @field_validator("beams")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("beams block must not be empty")
        return v

    @model_validator(mode="after")
    def _beams(self):
        roles = [b.role for b in self.beams]
        dup = sorted({r for r in roles if roles.count(r) > 1})
        if dup:
            raise ValueError(f"duplicate beam roles {dup}")
        need = {"probe", "pump", "repump"} | ({"pump_866"} if self.scheme.kind == "deit" else set())
        missing = sorted(need - set(roles))
        if missing:
            raise ValueError(f"{self.scheme.kind} scheme needs beam roles {missing}")
        if self.scheme.kind == "eit" and "pump_866" in roles:
            raise ValueError("single-EIT scheme takes no pump_866 beam")
        for b in self.beams:
            if b.detuning is not None and not (b.role == "repump" and self.scheme.kind == "eit"):
                raise ValueError(f"beam {b.role}: detuning is derived from scheme.delta and cannot be set")
        return self

    def beam(self, role: str) -> BeamSpec | None:
        return next((b for b in self.beams if b.role == role), None)


# -- text round trip ---------------------------------------------------------

def _located(exc: ValidationError) -> ConfigError:
    errs = []
    for e in exc.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        errs.append((path, e["msg"]))
    return ConfigError(errs)


def from_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise _located(exc) from None


def parse_config(text: str) -> RunConfig:
    """Validate YAML text; missing keys take their defaults, unknown keys are errors."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<text>", f"not valid YAML: {exc}")]) from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError([("<root>", "top level must be a mapping")])
    return from_dict(data or {})


def to_dict(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json")


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


BUNDLED = ("default", "eit")


def load_config(path: str | Path | None = None) -> RunConfig:
    """Config from ``path``; ``None`` or a bundled name (``default``, ``eit``) loads a packaged one."""
    if path is None or (str(path) in BUNDLED and not Path(path).exists()):
        return parse_config(default_config_text(str(path or "default")))
    return parse_config(Path(path).read_text())


def default_config_text(name: str = "default") -> str:
    if name not in BUNDLED:
        raise ConfigError([("<config>", f"no bundled config {name!r}; choose from {list(BUNDLED)}")])
    return resources.files("eitcool").joinpath(f"data/{name}.yaml").read_text()


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``key=value`` settings; keys are dotted paths, list items by index, values YAML."""
    data = copy.deepcopy(to_dict(cfg))
    for item in overrides:
        if "=" not in item:
            raise ConfigError([(item, "override must look like key=value")])
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        try:
            for p in parts[:-1]:
                node = node[int(p)] if isinstance(node, list) else node[p]
            last = parts[-1]
            if isinstance(node, list):
                node[int(last)] = yaml.safe_load(raw)
            else:
                if last not in node:
                    raise KeyError(last)
                node[last] = yaml.safe_load(raw)
        except (KeyError, IndexError, ValueError, TypeError):
            raise ConfigError([(key, "no such setting")]) from None
    return from_dict(data)


def get_path(cfg: RunConfig, key: str):
    node = to_dict(cfg)
    for p in key.split("."):
        node = node[int(p)] if isinstance(node, list) else node[p]
    return node


# -- physics objects ---------------------------------------------------------

def atom_params(cfg: RunConfig) -> AtomParams:
    return AtomParams(B=cfg.trap.B, gamma=TWO_PI * cfg.scheme.gamma, branching_SD=cfg.simulation.branching_SD)


def scheme_params(cfg: RunConfig) -> SchemeParams:
    g = TWO_PI * cfg.scheme.gamma
    probe, pump, repump = cfg.beam("probe"), cfg.beam("pump"), cfg.beam("repump")
    p866 = cfg.beam("pump_866")
    kw = dict(
        kind=cfg.scheme.kind,
        delta=cfg.scheme.delta * g,
        omega_pi=TWO_PI * probe.rabi,
        omega_sigma=TWO_PI * pump.rabi,
        omega_repump=TWO_PI * repump.rabi,
        probe_direction=probe.direction,
        pump_direction=pump.direction,
        repump_direction=repump.direction,
    )
    if p866 is not None:
        kw.update(omega_866=TWO_PI * p866.rabi, ir_direction=p866.direction)
    else:
        kw.update(omega_866=0.0, ir_direction=repump.direction)
    if repump.detuning is not None:
        kw["repump_detuning"] = TWO_PI * repump.detuning
    return SchemeParams(**kw)


def modes(cfg: RunConfig, fock_dim: int | None = None) -> dict[str, MotionalMode]:
    geo = GeometryConfig(cfg.geometry.logic_angle, cfg.geometry.logic_inplane,
                         tuple(cfg.geometry.radial_mode_angles))
    freqs = {"axial": cfg.trap.nu_axial, "radial1": cfg.trap.nu_radial1, "radial2": cfg.trap.nu_radial2}
    return build_modes({k: TWO_PI * v for k, v in freqs.items()}, geo,
                       fock_dim or cfg.simulation.fock_dim, cfg.trap.mass * AMU)


def build_scheme(cfg: RunConfig) -> Scheme:
    """Scheme with tuned pumps when ``scheme.tune.enabled``."""
    sch = Scheme(atom_params(cfg), scheme_params(cfg))
    t = cfg.scheme.tune
    if not t.enabled:
        return sch
    freqs = {"axial": cfg.trap.nu_axial, "radial1": cfg.trap.nu_radial1, "radial2": cfg.trap.nu_radial2}
    nu_866 = TWO_PI * freqs[t.pump_866] if cfg.scheme.kind == "deit" else None
    return sch.tuned(TWO_PI * freqs[t.pump], nu_866, refine=t.refine, rel_tol=t.rel_tol)


def provenance(cfg: RunConfig) -> dict:
    return {"package": "eitcool", "version": __version__, "config_sha256": config_hash(cfg)}
