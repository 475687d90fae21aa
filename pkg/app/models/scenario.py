"""
Declarative scenario configuration (JSON, schema version 1).

Units are fixed per scenario kind:

* ``plane-strain``: mm, N, MPa. Load factors are top-edge resultants in N.
* ``winkler-beam``: m, kN, kN/m^2. Soil layer moduli are subgrade moduli per
  unit pile length, multiplied by ``soil_modulus_factor``; load factors are
  head forces in kN.

The load program gives the intra-cycle shape as piecewise-linear
(tau / T, s) breakpoints; the applied load is p_min + (p_max - p_min) * s,
optionally multiplied by per-scale amplitudes across cycles.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, root_validator, validator

from app import config
from app.errors import ConfigError
from app.models.material import MaterialParams

logger = logging.getLogger(__name__)

SCENARIO_KINDS = ("plane-strain", "winkler-beam")
SOLVERS = ("incremental", "pgd")


class MaterialSpec(BaseModel):
    E: float = Field(..., gt=0, description="Young's modulus")
    nu: float = Field(0.3, gt=-1.0, lt=0.5)
    sigma_p: float = Field(..., gt=0)
    H_iso: float = Field(0.0, ge=0)
    H_kin: float = Field(0.0, ge=0)
    beta: float = Field(0.0, ge=0, le=1)
    ratchet_direction: str = "implicit"

    @validator("ratchet_direction")
    def _direction(cls, v):
        if v not in ("implicit", "trial"):
            raise ValueError("ratchet_direction must be 'implicit' or 'trial'")
        return v

    def to_params(self) -> MaterialParams:
        return MaterialParams(**self.dict())


class SoilLayerSpec(BaseModel):
    top: float = Field(..., ge=0)
    bottom: float = Field(..., gt=0)
    material: MaterialSpec

    @root_validator(skip_on_failure=True)
    def _ordered(cls, values):
        if values["bottom"] <= values["top"]:
            raise ValueError("layer bottom must lie below its top")
        return values


class PlateGeometry(BaseModel):
    width: float = Field(30.0, gt=0)
    height: float = Field(30.0, gt=0)
    radius: float = Field(6.0, gt=0)
    thickness: float = Field(0.2, gt=0)
    n_tangential: int = Field(16, ge=1)
    n_radial: int = Field(12, ge=1)
    grading: float = Field(1.0, gt=0)
    jitter: float = Field(0.0, ge=0, lt=0.5)
    mesh_file: Optional[str] = None

    @root_validator(skip_on_failure=True)
    def _hole_fits(cls, values):
        if values["radius"] >= 0.5 * min(values["width"], values["height"]):
            raise ValueError("hole radius does not fit inside the plate")
        return values


class PileGeometry(BaseModel):
    length: float = Field(15.0, gt=0)
    r_outer: float = Field(1.0, gt=0)
    r_inner: float = Field(0.92, ge=0)
    E: float = Field(2.1e8, gt=0)
    nu: float = Field(0.3, gt=-1.0, lt=0.5)
    n_elements: int = Field(45, ge=1)
    soil_modulus_factor: float = Field(1.0, gt=0)
    layers: List[SoilLayerSpec]

    @root_validator(skip_on_failure=True)
    def _partition(cls, values):
        if values["r_inner"] >= values["r_outer"]:
            raise ValueError("inner radius must be smaller than outer radius")
        layers = values["layers"]
        if not layers:
            raise ValueError("at least one soil layer is required")
        if abs(layers[0].top) > 1e-9 or abs(layers[-1].bottom - values["length"]) > 1e-9:
            raise ValueError("soil layers must partition the pile depth")
        for a, b in zip(layers, layers[1:]):
            if abs(a.bottom - b.top) > 1e-9:
                raise ValueError("soil layers overlap or leave a gap")
        return values


class LoadProgram(BaseModel):
    shape: List[Tuple[float, float]]
    p_min: float
    p_max: float
    n_tau: int = Field(101, ge=2)
    period: float = Field(1.0, gt=0)
    cycles: int = Field(..., ge=1)
    scales: Optional[List[int]] = None
    scale_amplitudes: Optional[List[List[float]]] = None
    warmup_cycles: int = Field(config.WARMUP_CYCLES, ge=0)

    @validator("shape")
    def _shape(cls, v):
        if len(v) < 2:
            raise ValueError("load shape needs at least two breakpoints")
        taus = [t for t, _ in v]
        if abs(taus[0]) > 1e-12 or abs(taus[-1] - 1.0) > 1e-12:
            raise ValueError("load shape must span tau/T = 0 .. 1")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("load shape breakpoints must increase")
        if abs(v[0][1] - v[-1][1]) > 1e-12:
            raise ValueError("load shape must be periodic: amplitude at tau_1 differs from tau_N")
        return v

    @validator("scales")
    def _scales(cls, v):
        if v is not None and (not v or any(n < 1 for n in v)):
            raise ValueError("scale sizes must be positive")
        return v

    @root_validator(skip_on_failure=True)
    def _amplitudes(cls, values):
        amps = values.get("scale_amplitudes")
        if amps is None:
            return values
        scales = values.get("scales")
        if scales is None or len(amps) != len(scales) or any(len(a) != n for a, n in zip(amps, scales)):
            raise ValueError("scale_amplitudes must give one value per large-time index of every scale")
        if not all(np.allclose(a, 1.0) for a in amps):
            shape = values["shape"]
            p0 = values["p_min"] + (values["p_max"] - values["p_min"]) * shape[0][1]
            if abs(p0) > 1e-12:
                raise ValueError("modulated cycles need a load shape that starts and ends at zero load")
        return values

    @property
    def pgd_cycles(self) -> int:
        return int(np.prod(self.scales)) if self.scales else self.cycles - self.warmup_cycles

    def amplitude(self, tau_fraction: np.ndarray) -> np.ndarray:
        taus, amps = zip(*self.shape)
        s = np.interp(np.asarray(tau_fraction, dtype=float), taus, amps)
        return self.p_min + (self.p_max - self.p_min) * s

    def cycle_amplitude(self) -> np.ndarray:
        """Multiplier of each PGD-window cycle (first scale varies fastest)."""
        if not self.scale_amplitudes:
            return np.ones(self.pgd_cycles)
        out = np.ones(1)
        for amps in self.scale_amplitudes:
            out = np.kron(np.asarray(amps, dtype=float), out)
        return out

    def step_loads(self) -> np.ndarray:
        """Load factor of every pseudo-time step of the whole program."""
        tau = np.linspace(0.0, 1.0, self.n_tau)
        per_cycle = self.amplitude(tau)
        mult = np.concatenate([np.ones(self.warmup_cycles), self.cycle_amplitude()])
        if mult.size != self.cycles:
            mult = np.ones(self.cycles)
        rows = [per_cycle[0] * mult[0]]
        for c in range(self.cycles):
            rows.extend((per_cycle[1:] * mult[c]).tolist())
        return np.asarray(rows)


class SolverSettings(BaseModel):
    newton_tol: float = Field(config.NEWTON_TOL, gt=0)
    newton_abs_tol: float = Field(config.NEWTON_ABS_TOL, gt=0)
    max_newton_iters: int = Field(config.MAX_NEWTON_ITERS, ge=1)
    line_search: bool = False
    tangent: str = "consistent"
    max_bisections: int = Field(config.MAX_BISECTIONS, ge=0)
    state_ring: int = Field(config.STATE_RING, ge=0)

    @validator("tangent")
    def _tangent(cls, v):
        if v not in ("consistent", "elastic"):
            raise ValueError("tangent must be 'consistent' or 'elastic'")
        return v


class PgdSettings(BaseModel):
    max_modes: int = Field(3, ge=1)
    fixed_point_tol: float = Field(config.FIXED_POINT_TOL, gt=0)
    max_sweeps: int = Field(config.MAX_SWEEPS, ge=1)
    stagnation_window: int = Field(config.STAGNATION_WINDOW, ge=2)
    outer_tol: float = Field(config.OUTER_TOL, gt=0)
    max_outer_iters: int = Field(config.MAX_OUTER_ITERS, ge=1)
    mode_accept_ratio: float = Field(config.MODE_ACCEPT_RATIO, gt=0)
    history_sweep: str = "outer"
    keep_states: bool = False

    @validator("history_sweep")
    def _placement(cls, v):
        if v not in ("outer", "per_sweep"):
            raise ValueError("history_sweep must be 'outer' or 'per_sweep'")
        return v


class Scenario(BaseModel):
    schema_version: int = 1
    name: str
    description: str = ""
    kind: str
    solver: str = "incremental"
    seed: int = 0
    material: Optional[MaterialSpec] = None
    plate: Optional[PlateGeometry] = None
    pile: Optional[PileGeometry] = None
    load: LoadProgram
    incremental: SolverSettings = SolverSettings()
    pgd: PgdSettings = PgdSettings()
    probe_depths: List[float] = Field(default_factory=list)

    @validator("schema_version")
    def _version(cls, v):
        if v != config.SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v}")
        return v

    @validator("kind")
    def _kind(cls, v):
        if v not in SCENARIO_KINDS:
            raise ValueError(f"kind must be one of {SCENARIO_KINDS}")
        return v

    @validator("solver")
    def _solver(cls, v):
        if v not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        return v

    @root_validator(skip_on_failure=True)
    def _consistent(cls, values):
        kind = values["kind"]
        if kind == "plane-strain" and (values.get("material") is None or values.get("plate") is None):
            raise ValueError("plane-strain scenarios need 'material' and 'plate'")
        if kind == "winkler-beam" and values.get("pile") is None:
            raise ValueError("winkler-beam scenarios need 'pile'")
        load: LoadProgram = values["load"]
        if load.warmup_cycles > load.cycles:
            raise ValueError("warmup_cycles exceeds the cycle count")
        if values["solver"] == "pgd":
            if load.scales is None:
                raise ValueError("PGD runs need load.scales")
            expected = load.warmup_cycles + int(np.prod(load.scales))
            if load.cycles != expected:
                raise ValueError(
                    f"cycle count {load.cycles} inconsistent with warm-up {load.warmup_cycles} + scales {load.scales}"
                )
        return values

    def with_overrides(self, **overrides) -> "Scenario":
        """Copy with CLI overrides applied and validated again."""
        data = json.loads(self.json())
        load = data["load"]
        if overrides.get("solver"):
            data["solver"] = overrides["solver"]
        if overrides.get("seed") is not None:
            data["seed"] = overrides["seed"]
        if overrides.get("modes") is not None:
            data["pgd"]["max_modes"] = overrides["modes"]
        if overrides.get("warmup") is not None:
            load["warmup_cycles"] = overrides["warmup"]
        if overrides.get("scales") is not None:
            load["scales"] = list(overrides["scales"])
            load["scale_amplitudes"] = None
            if overrides.get("cycles") is None:
                load["cycles"] = load["warmup_cycles"] + int(np.prod(load["scales"]))
        if overrides.get("cycles") is not None:
            load["cycles"] = overrides["cycles"]
            # "--cycles 200 --scales 20,10" names the PGD window, warm-up comes on top
            if overrides.get("scales") is not None and overrides["cycles"] == int(np.prod(overrides["scales"])):
                load["cycles"] = load["warmup_cycles"] + overrides["cycles"]
            if overrides.get("scales") is None and load.get("scales") is not None:
                load["scales"] = None
                load["scale_amplitudes"] = None
        return parse_scenario(data)


def _first_error(err: ValidationError) -> Tuple[str, str]:
    first = err.errors()[0]
    return ".".join(str(p) for p in first["loc"]), first["msg"]


def parse_scenario(data: Union[Dict[str, Any], str]) -> Scenario:
    """Validate a dict or JSON text; failures become ``ConfigError``."""
    try:
        if isinstance(data, str):
            data = json.loads(data)
        return Scenario.parse_obj(data)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, line=e.lineno) from e
    except ValidationError as e:
        loc, msg = _first_error(e)
        raise ConfigError(msg, field=loc) from e


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}") from e
    scenario = parse_scenario(text)
    logger.info(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario


def dump_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(scenario.json(indent=2))
