"""Scenario configuration.

A scenario is one JSON document validated by pydantic. Unknown keys are
rejected, every model is immutable, and :func:`dump_scenario` writes the
canonical text (sorted keys, two-space indent) used in run directories.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .sensors import LinkSpec, SensorId, SensorSpec
from .vessel import VesselParams, default_vessel_params
from .waves import AXES, NonlinearLayout


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VesselConfig(_Strict):
    """Optional overrides of the default vessel; ``None`` keeps the default."""

    mass: Optional[float] = None
    inertia: Optional[list[list[float]]] = None
    added_mass: Optional[list[list[float]]] = None
    damping: Optional[list[list[float]]] = None
    Z_z: Optional[float] = None
    Z_theta: Optional[float] = None
    K_phi: Optional[float] = None
    M_z: Optional[float] = None
    M_theta: Optional[float] = None

    def to_params(self) -> VesselParams:
        base = default_vessel_params()
        kw = {}
        for name in ("mass", "inertia", "added_mass", "damping", "Z_z", "Z_theta", "K_phi", "M_z", "M_theta"):
            value = getattr(self, name)
            kw[name] = getattr(base, name) if value is None else value
        return VesselParams(**kw)


class WaveComponentConfig(_Strict):
    """One wave oscillator.

    ``amplitude`` is the amplitude of ``x1``; the forcing output ``x2`` then
    swings by roughly ``amplitude * omega``. A ``None`` phase is drawn
    uniformly from the run seed.
    """

    omega: float = Field(gt=0)
    amplitude: float = Field(ge=0)
    phase: Optional[float] = None
    gamma: float = Field(default=0.0, ge=0)
    lam: float = Field(default=0.0, ge=0)


class WavesConfig(_Strict):
    u: list[WaveComponentConfig] = []
    v: list[WaveComponentConfig] = []
    w: list[WaveComponentConfig] = []
    p: list[WaveComponentConfig] = []
    q: list[WaveComponentConfig] = []
    r: list[WaveComponentConfig] = []

    def banks(self) -> list[list[WaveComponentConfig]]:
        return [list(getattr(self, a)) for a in AXES]

    def layout(self) -> NonlinearLayout:
        banks = self.banks()
        gammas = [c.gamma for b in banks for c in b]
        return NonlinearLayout(tuple(len(b) for b in banks), np.array(gammas))

    def linear_banks(self) -> list[list[tuple[float, float]]]:
        return [[(c.omega, c.lam) for c in b] for b in self.banks()]


class SensorConfig(_Strict):
    rate: float = Field(gt=0)
    stds: list[float]
    max_range: float = Field(default=1.0e6, gt=0)
    half_fov: float = Field(default=math.pi, gt=0)
    dark: list[tuple[float, float]] = []
    enabled: bool = True

    @field_validator("stds")
    @classmethod
    def _positive(cls, v):
        if not v or any(not (s > 0) for s in v):
            raise ValueError("stds must be positive")
        return v

    def to_spec(self) -> SensorSpec:
        return SensorSpec(self.rate, tuple(self.stds), self.max_range, self.half_fov,
                          tuple(tuple(d) for d in self.dark), self.enabled)


class SensorsConfig(_Strict):
    gps: SensorConfig = SensorConfig(rate=5.0, stds=[0.7, 0.7, 0.7])
    imu: SensorConfig = SensorConfig(rate=20.0, stds=[0.01, 0.01, 0.01, 0.05, 0.05, 0.05])
    uvdar: SensorConfig = SensorConfig(rate=10.0, stds=[0.25, 0.25, 0.25, 0.12, 0.12, 0.12],
                                       max_range=15.0, half_fov=0.6)
    apriltag: SensorConfig = SensorConfig(rate=15.0, stds=[0.04, 0.04, 0.04, 0.06, 0.06, 0.06],
                                          max_range=10.0, half_fov=0.6)

    @model_validator(mode="after")
    def _dims(self):
        for sid in SensorId:
            need = 3 if sid is SensorId.GPS else 6
            got = len(getattr(self, sid.value.lower()).stds)
            if got != need:
                raise ValueError(f"{sid.value} needs {need} noise stds, got {got}")
        return self

    def specs(self) -> dict[SensorId, SensorSpec]:
        return {sid: getattr(self, sid.value.lower()).to_spec() for sid in SensorId}


class LinkConfig(_Strict):
    latency: float = Field(default=0.0, ge=0)
    drop_prob: float = Field(default=0.0, ge=0, lt=1)
    min_rate: float = Field(default=1.0, ge=0)

    def to_spec(self) -> LinkSpec:
        return LinkSpec(self.latency, self.drop_prob, self.min_rate)


class UavConfig(_Strict):
    """Observer UAV: level, hovering ``altitude`` above the lagged USV position.

    The horizontal offset is ``offset_mean + offset_amp sin(2 pi t / offset_period)``
    along heading ``offset_heading``. ``position_error_std`` (m) and
    ``angle_error_std`` (rad) perturb the UAV pose used to convert relative
    detections; both default to zero, i.e. the UAV knows its pose exactly.
    """

    altitude: float = Field(default=4.0, gt=0)
    lag: float = Field(default=0.5, ge=0)
    offset_mean: float = 1.5
    offset_amp: float = 1.32
    offset_period: float = Field(default=20.0, gt=0)
    offset_heading: float = 0.0
    position_error_std: float = Field(default=0.0, ge=0)
    angle_error_std: float = Field(default=0.0, ge=0)


class ProcessNoiseConfig(_Strict):
    """Velocity impulses added once per filter step, std per body axis.

    The same values form the twist block of the filters' process noise.
    """

    twist_std: list[float] = [0.004, 0.004, 0.004, 0.002, 0.002, 0.001]
    pose_std: list[float] = [0.0] * 6

    @field_validator("twist_std", "pose_std")
    @classmethod
    def _six(cls, v):
        if len(v) != 6 or any(s < 0 for s in v):
            raise ValueError("need six non-negative values")
        return v


class InitialConfig(_Strict):
    """Prior standard deviations for the estimators; truth starts at rest at the origin."""

    pose_std: list[float] = [0.5, 0.5, 0.2, 0.05, 0.05, 0.1]
    twist_std: list[float] = [0.1, 0.1, 0.1, 0.05, 0.05, 0.05]
    wave_scale: float = Field(default=1.0, gt=0)
    frequency_rel_std: float = Field(default=0.02, ge=0)


class FilterConfig(_Strict):
    kind: Literal["nonlinear", "linear", "both"] = "both"
    alpha: float = Field(default=0.1, gt=0, le=1)
    beta: float = 2.0
    kappa: float = 0.0
    linear_q_scale: float = Field(default=1.0, gt=0)
    linear_r_scale: dict[str, float] = {}

    @field_validator("linear_r_scale")
    @classmethod
    def _sensors(cls, v):
        for k, s in v.items():
            if k.upper() not in SensorId.__members__ or not (s > 0):
                raise ValueError(f"bad R scale entry {k!r}: {s!r}")
        return v


class PredictionConfig(_Strict):
    enabled: bool = True
    cadence: float = Field(default=2.0, gt=0)
    horizon: float = Field(default=2.0, gt=0)


class Scenario(_Strict):
    duration: float = Field(default=60.0, gt=0)
    truth_dt: float = Field(default=0.002, gt=0)
    filter_dt: float = Field(default=0.02, gt=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    burn_in: float = Field(default=5.0, ge=0)
    sensors_used: list[str] = ["GPS", "IMU", "UVDAR", "APRILTAG"]
    vessel: VesselConfig = VesselConfig()
    waves: WavesConfig = WavesConfig()
    sensors: SensorsConfig = SensorsConfig()
    link: LinkConfig = LinkConfig()
    uav: UavConfig = UavConfig()
    process_noise: ProcessNoiseConfig = ProcessNoiseConfig()
    initial: InitialConfig = InitialConfig()
    filter: FilterConfig = FilterConfig()
    prediction: PredictionConfig = PredictionConfig()
    comment: str = ""

    @field_validator("sensors_used")
    @classmethod
    def _known(cls, v):
        out = []
        for s in v:
            name = s.strip().upper()
            if name not in SensorId.__members__:
                raise ValueError(f"unknown sensor {s!r}")
            if name not in out:
                out.append(name)
        return out

    @model_validator(mode="after")
    def _grid(self):
        ratio = self.filter_dt / self.truth_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("filter_dt must be a positive integer multiple of truth_dt")
        if self.prediction.horizon < self.filter_dt:
            raise ValueError("prediction horizon must be at least one filter step")
        if self.filter_dt > self.duration:
            raise ValueError("duration must cover at least one filter step")
        return self

    @property
    def substeps(self) -> int:
        return int(round(self.filter_dt / self.truth_dt))

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.filter_dt + 1e-9))

    def sensor_ids(self) -> list[SensorId]:
        return [SensorId(s) for s in self.sensors_used]

    def with_updates(self, **changes) -> Scenario:
        """Copy with top-level or dotted-path fields replaced, re-validated."""
        data = self.model_dump(mode="json")
        for key, value in changes.items():
            node = data
            parts = key.split("__")
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = value
        return load_scenario_dict(data)


def load_scenario_dict(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path: str | Path | None = None) -> Scenario:
    """Read a scenario file; ``None`` returns the packaged default scenario."""
    try:
        if path is None:
            text = resources.files("vesselstate").joinpath("data/default_scenario.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    return load_scenario_dict(data)


def default_scenario() -> Scenario:
    return load_scenario(None)


def dump_scenario(scenario: Scenario) -> str:
    """Canonical JSON text of a scenario."""
    data = scenario.model_dump(mode="json")
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=True) + "\n"
