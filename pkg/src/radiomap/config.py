"""Strictly validated configuration files (YAML or JSON).

Two documents exist: a *scenario file* describing the simulated world, and a
*run config* selecting an estimator, grid, checkpoints and outputs. Both carry
``schema_version`` and reject unknown keys.
"""
from __future__ import annotations

import itertools
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .apsm import ApsmConfig, ApsmEstimator
from .errors import ConfigurationError
from .harness import GridSpec, IdwEstimator, NnEstimator
from .kernels import DictConfig, KernelBank, KernelSpec
from .multikernel import MkConfig, MultiKernelEstimator
from .simulator import (
    Area,
    BaseStation,
    MobilityConfig,
    Pl0Shift,
    Position,
    ScenarioConfig,
    StationOff,
    default_scenario,
)

SCHEMA_VERSION = 1
ESTIMATORS = ("apsm", "multikernel", "idw", "nn")
U64_MAX = 2**64 - 1

_DEFAULT = default_scenario()


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AreaModel(_Strict):
    xmin: float = 0.0
    xmax: float = 1000.0
    ymin: float = 0.0
    ymax: float = 1000.0


class StationModel(_Strict):
    x: float
    y: float
    pl0: float = 90.0
    exponent: float = 3.5
    d0: float = 30.0


class MobilityModel(_Strict):
    speed_min: float = _DEFAULT.mobility.speed_min
    speed_max: float = _DEFAULT.mobility.speed_max
    pause_min: float = _DEFAULT.mobility.pause_min
    pause_max: float = _DEFAULT.mobility.pause_max
    dt: float = _DEFAULT.mobility.dt
    n_users: int = _DEFAULT.mobility.n_users


class EventModel(_Strict):
    kind: Literal["pl0_shift", "station_off"]
    step: int = Field(ge=0)
    station: int = Field(ge=0)
    delta_db: float | None = None

    @model_validator(mode="after")
    def _delta(self):
        if self.kind == "pl0_shift" and self.delta_db is None:
            raise ValueError("pl0_shift needs delta_db")
        if self.kind == "station_off" and self.delta_db is not None:
            raise ValueError("station_off takes no delta_db")
        return self

    def to_event(self):
        if self.kind == "pl0_shift":
            return Pl0Shift(self.station, self.delta_db)
        return StationOff(self.station)


def _default_stations() -> list[StationModel]:
    return [
        StationModel(x=s.position.x, y=s.position.y, pl0=s.pl0, exponent=s.exponent, d0=s.d0)
        for s in _DEFAULT.stations
    ]


class ScenarioFile(_Strict):
    schema_version: Literal[1]
    area: AreaModel = Field(default_factory=AreaModel)
    stations: list[StationModel] = Field(default_factory=_default_stations)
    shadow_sigma: float = _DEFAULT.shadow_sigma
    shadow_decorrelation: float = _DEFAULT.shadow_decorrelation
    shadow_grid: int = _DEFAULT.shadow_grid
    meas_noise_sigma: float = _DEFAULT.meas_noise_sigma
    pos_noise_sigma: float = _DEFAULT.pos_noise_sigma
    mobility: MobilityModel = Field(default_factory=MobilityModel)
    n_steps: int = _DEFAULT.n_steps
    seed: int = Field(default=0, ge=0, le=U64_MAX)
    events: list[EventModel] = Field(default_factory=list)

    @model_validator(mode="after")
    def _domain(self):
        cfg = self.to_config()
        for ev in self.events:
            if ev.station >= len(cfg.stations):
                raise ValueError(f"event refers to unknown station {ev.station}")
            if ev.step > cfg.n_steps:
                raise ValueError(f"event step {ev.step} beyond n_steps {cfg.n_steps}")
        return self

    def to_config(self, seed: int | None = None) -> ScenarioConfig:
        return ScenarioConfig(
            area=Area(**self.area.model_dump()),
            stations=tuple(
                BaseStation(Position(s.x, s.y), pl0=s.pl0, exponent=s.exponent, d0=s.d0) for s in self.stations
            ),
            shadow_sigma=self.shadow_sigma,
            shadow_decorrelation=self.shadow_decorrelation,
            shadow_grid=self.shadow_grid,
            meas_noise_sigma=self.meas_noise_sigma,
            pos_noise_sigma=self.pos_noise_sigma,
            mobility=MobilityConfig(**self.mobility.model_dump()),
            n_steps=self.n_steps,
            seed=self.seed if seed is None else seed,
        )

    def to_events(self) -> list[tuple[int, Pl0Shift | StationOff]]:
        return [(e.step, e.to_event()) for e in self.events]


class _Params(_Strict):
    def build(self):
        raise NotImplementedError

    @model_validator(mode="after")
    def _check(self):
        self.build()  # domain errors are ValueErrors and surface as validation errors
        return self


class ApsmParams(_Params):
    kernel: Literal["gaussian", "laplacian"] = "gaussian"
    bandwidth: float = 100.0
    epsilon: float = 1.0
    window_q: int = 2
    weights: list[float] | None = None
    relaxation_mu: float = 1.0
    dict_max_size: int = 400
    coherence_threshold: float = 0.9

    def build(self) -> ApsmEstimator:
        cfg = ApsmConfig(
            kernel=KernelSpec(self.kernel, self.bandwidth),
            epsilon=self.epsilon,
            window_q=self.window_q,
            weights=None if self.weights is None else tuple(self.weights),
            relaxation_mu=self.relaxation_mu,
        )
        return ApsmEstimator(cfg, DictConfig(self.dict_max_size, self.coherence_threshold))


class MultiKernelParams(_Params):
    kernel: Literal["gaussian", "laplacian"] = "gaussian"
    n_kernels: int = 8
    base_bandwidth: float = 12.5
    bandwidths: list[float] | None = None
    epsilon: float = 1.0
    step_gamma: float = 1.0
    lambda_kernel: float = 1e-3
    lambda_dict: float = 1e-3
    reweight_delta: float = 1e-2
    reweight_every: int = 25
    prune_tol: float | None = 1e-8
    window_q: int = 2
    weights: list[float] | None = None
    dict_max_size: int = 400
    coherence_threshold: float = 0.9

    def bank(self) -> KernelBank:
        if self.bandwidths is not None:
            return KernelBank(tuple(KernelSpec(self.kernel, b) for b in self.bandwidths))
        return KernelBank.geometric(self.n_kernels, self.base_bandwidth, self.kernel)

    def build(self) -> MultiKernelEstimator:
        cfg = MkConfig(
            epsilon=self.epsilon,
            step_gamma=self.step_gamma,
            lambda_kernel=self.lambda_kernel,
            lambda_dict=self.lambda_dict,
            reweight_delta=self.reweight_delta,
            reweight_every=self.reweight_every,
            prune_tol=self.prune_tol,
            window_q=self.window_q,
            weights=None if self.weights is None else tuple(self.weights),
        )
        return MultiKernelEstimator(self.bank(), cfg, DictConfig(self.dict_max_size, self.coherence_threshold))


class IdwParams(_Params):
    power: float = 2.0

    def build(self) -> IdwEstimator:
        return IdwEstimator(self.power)


class NnParams(_Params):
    def build(self) -> NnEstimator:
        return NnEstimator()


class EstimatorParams(_Strict):
    apsm: ApsmParams = Field(default_factory=ApsmParams)
    multikernel: MultiKernelParams = Field(default_factory=MultiKernelParams)
    idw: IdwParams = Field(default_factory=IdwParams)
    nn: NnParams = Field(default_factory=NnParams)


class GridModel(_Strict):
    nx: int = Field(default=50, ge=2)
    ny: int = Field(default=50, ge=2)


class RunConfig(_Strict):
    """A run: scenario (file path or inline), estimator choice, scoring and output settings.

    ``sweep`` maps parameter names of the selected estimator (or ``seed``) to the
    values to try; the sweep is their Cartesian product.
    """

    schema_version: Literal[1]
    scenario: Path | ScenarioFile
    estimator: Literal["apsm", "multikernel", "idw", "nn"] = "multikernel"
    estimators: EstimatorParams = Field(default_factory=EstimatorParams)
    grid: GridModel = Field(default_factory=GridModel)
    checkpoints: list[int] | None = None
    out: Path | None = None
    seed: int | None = Field(default=None, ge=0, le=U64_MAX)
    measurements: Path | None = None
    sweep: dict[str, list[Any]] = Field(default_factory=dict)
    include_runtime: bool = False

    @field_validator("scenario", "measurements")
    @classmethod
    def _exists(cls, v):
        if isinstance(v, Path) and not v.is_file():
            raise ValueError(f"file not found: {v}")
        return v

    @field_validator("checkpoints")
    @classmethod
    def _increasing(cls, v):
        if v is not None:
            if not v:
                raise ValueError("checkpoints must not be empty")
            if v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
                raise ValueError("checkpoints must be positive and strictly increasing")
        return v

    def params(self) -> _Params:
        return getattr(self.estimators, self.estimator)

    def scenario_file(self) -> ScenarioFile:
        if isinstance(self.scenario, ScenarioFile):
            return self.scenario
        return load_scenario(self.scenario)

    def scenario_config(self) -> ScenarioConfig:
        return self.scenario_file().to_config(self.seed)

    def grid_spec(self, area: Area) -> GridSpec:
        return GridSpec(area, self.grid.nx, self.grid.ny)

    def sweep_points(self) -> list[dict[str, Any]]:
        """Cartesian product of the sweep grid in key-sorted, value-listed order; empty grid -> [].

        Keys are checked here rather than at load time so that one config can
        carry a sweep while other commands override the estimator.
        """
        allowed = set(type(self.params()).model_fields) | {"seed"}
        bad = sorted(set(self.sweep) - allowed)
        if bad:
            raise ConfigurationError(f"sweep keys {bad} are not parameters of estimator {self.estimator!r}")
        if not self.sweep:
            return []
        keys = sorted(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def resolved(self) -> "RunConfig":
        """Same run with the scenario inlined, so it no longer depends on other files."""
        return self.model_copy(update={"scenario": self.scenario_file()})


def _read_document(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = yaml.safe_load(text)  # JSON is a YAML subset
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML/JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return doc


def _validate(model: type[BaseModel], doc: dict, where: str):
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def load_scenario(path: str | Path) -> ScenarioFile:
    path = Path(path)
    return _validate(ScenarioFile, _read_document(path), str(path))


def load_run_config(
    path: str | Path,
    seed: int | None = None,
    estimator: str | None = None,
    out: str | Path | None = None,
) -> RunConfig:
    """Load a run config; relative file references resolve against the config's directory.

    ``seed``, ``estimator`` and ``out`` override the file's values.
    """
    path = Path(path)
    doc = _read_document(path)
    base = path.parent
    for key in ("scenario", "measurements", "out"):
        if isinstance(doc.get(key), str):
            p = Path(doc[key])
            doc[key] = str(p if p.is_absolute() else base / p)
    if seed is not None:
        doc["seed"] = seed
    if estimator is not None:
        doc["estimator"] = estimator
    if out is not None:
        doc["out"] = str(out)
    return _validate(RunConfig, doc, str(path))
