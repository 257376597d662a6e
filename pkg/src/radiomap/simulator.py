"""Synthetic cellular downlink: ground-truth path-loss maps, trajectories, measurement streams.

Path loss per station follows the log-distance law plus a spatially correlated
Gaussian (dB) shadowing field with exponential correlation. The radio map is
the pointwise minimum over active stations. All randomness derives from the
scenario seed through independent ``SeedSequence`` children, so a scenario
reproduces bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigurationError, InvalidInputError, OutOfAreaError
from .kernels import Measurement, Position, as_points

# SeedSequence children
_SHADOW, _MOBILITY, _NOISE = 0, 1, 2


@dataclass(frozen=True)
class Area:
    xmin: float = 0.0
    xmax: float = 1000.0
    ymin: float = 0.0
    ymax: float = 1000.0

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigurationError(f"degenerate area {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, points) -> np.ndarray:
        p = as_points(points)
        return (
            (p[:, 0] >= self.xmin) & (p[:, 0] <= self.xmax)
            & (p[:, 1] >= self.ymin) & (p[:, 1] <= self.ymax)
        )


@dataclass(frozen=True)
class BaseStation:
    position: Position
    pl0: float = 40.0
    exponent: float = 3.5
    d0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", Position(*map(float, self.position)))
        if not 1.5 <= self.exponent <= 6.0:
            raise ConfigurationError(f"path-loss exponent {self.exponent} outside [1.5, 6]")
        if not self.d0 > 0:
            raise ConfigurationError("reference distance d0 must be > 0")
        if self.pl0 < 0:
            raise ConfigurationError("pl0 must be >= 0")


@dataclass(frozen=True)
class MobilityConfig:
    """Random-waypoint parameters; speeds in m/s, pauses and ``dt`` in seconds."""

    speed_min: float = 5.0
    speed_max: float = 15.0
    pause_min: float = 0.0
    pause_max: float = 5.0
    dt: float = 1.0
    n_users: int = 1

    def __post_init__(self):
        if not 0 < self.speed_min <= self.speed_max:
            raise ConfigurationError("need 0 < speed_min <= speed_max")
        if not 0 <= self.pause_min <= self.pause_max:
            raise ConfigurationError("need 0 <= pause_min <= pause_max")
        if not self.dt > 0:
            raise ConfigurationError("dt must be > 0")
        if self.n_users < 1:
            raise ConfigurationError("n_users must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    area: Area = field(default_factory=Area)
    stations: tuple[BaseStation, ...] = ()
    shadow_sigma: float = 6.0
    shadow_decorrelation: float = 100.0
    shadow_grid: int = 64
    meas_noise_sigma: float = 1.0
    pos_noise_sigma: float = 0.0
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    n_steps: int = 5000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        for name in ("shadow_sigma", "meas_noise_sigma", "pos_noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not self.shadow_decorrelation > 0:
            raise ConfigurationError("shadow_decorrelation must be > 0")
        if not 2 <= self.shadow_grid <= 64:
            raise ConfigurationError("shadow_grid must lie in [2, 64]")
        if self.n_steps < 0:
            raise ConfigurationError("n_steps must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")

    def rng(self, stream: int, sub: int | None = None) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed).spawn(3)[stream]
        if sub is not None:
            seq = seq.spawn(sub + 1)[sub]
        return np.random.default_rng(seq)


def default_scenario(seed: int = 0, **overrides) -> ScenarioConfig:
    """The 1 km x 1 km, three-station desk-scale scenario with 20 round-robin users."""
    stations = tuple(
        BaseStation(Position(x, y), pl0=90.0, exponent=3.5, d0=30.0)
        for x, y in ((200.0, 250.0), (780.0, 330.0), (450.0, 800.0))
    )
    kwargs = dict(
        stations=stations,
        shadow_decorrelation=200.0,
        mobility=MobilityConfig(n_users=20),
        seed=seed,
    )
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


@lru_cache(maxsize=8)
def _shadow_factor(nx: int, ny: int, dx: float, dy: float, decorrelation: float) -> np.ndarray:
    """Cholesky factor of the exponential covariance on an ``nx`` x ``ny`` grid (unit variance)."""
    gx, gy = np.meshgrid(np.arange(nx) * dx, np.arange(ny) * dy, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d = np.sqrt((pts[:, None, 0] - pts[None, :, 0]) ** 2 + (pts[:, None, 1] - pts[None, :, 1]) ** 2)
    cov = np.exp(-d / decorrelation)
    cov[np.diag_indices_from(cov)] += 1e-10
    L = np.linalg.cholesky(cov)
    L.setflags(write=False)
    return L


def sample_shadow_fields(cfg: ScenarioConfig, n_fields: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``n_fields`` independent shadowing fields on the scenario grid.

    Returns grid x coordinates, y coordinates and values of shape
    ``(n_fields, nx, ny)``.
    """
    n = cfg.shadow_grid
    xs = np.linspace(cfg.area.xmin, cfg.area.xmax, n)
    ys = np.linspace(cfg.area.ymin, cfg.area.ymax, n)
    rng = cfg.rng(_SHADOW)
    z = rng.standard_normal((n_fields, n * n))
    if cfg.shadow_sigma == 0 or n_fields == 0:
        return xs, ys, np.zeros((n_fields, n, n))
    L = _shadow_factor(n, n, xs[1] - xs[0], ys[1] - ys[0], cfg.shadow_decorrelation)
    vals = cfg.shadow_sigma * (z @ L.T)
    return xs, ys, vals.reshape(n_fields, n, n)


@dataclass(frozen=True, eq=False)
class GroundTruthMap:
    """Strongest-station path-loss map. Immutable; events produce new maps."""

    config: ScenarioConfig
    stations: tuple[BaseStation, ...]
    active: tuple[bool, ...]
    grid_x: np.ndarray
    grid_y: np.ndarray
    shadow: np.ndarray  # (S, nx, ny)

    @classmethod
    def build(cls, cfg: ScenarioConfig) -> "GroundTruthMap":
        xs, ys, fields = sample_shadow_fields(cfg, len(cfg.stations))
        fields.setflags(write=False)
        return cls(cfg, cfg.stations, (True,) * len(cfg.stations), xs, ys, fields)

    @property
    def area(self) -> Area:
        return self.config.area

    def _check_in_area(self, pts: np.ndarray) -> None:
        if not np.all(self.area.contains(pts)):
            raise OutOfAreaError("query position outside the scenario area")

    def shadowing(self, station: int, points) -> np.ndarray:
        pts = as_points(points)
        interp = RegularGridInterpolator((self.grid_x, self.grid_y), self.shadow[station], method="linear")
        return interp(pts)

    def per_station(self, points) -> np.ndarray:
        """Path loss to every station (active or not), shape ``(S, N)``."""
        pts = as_points(points)
        self._check_in_area(pts)
        out = np.empty((len(self.stations), len(pts)))
        for s, bs in enumerate(self.stations):
            d = np.hypot(pts[:, 0] - bs.position.x, pts[:, 1] - bs.position.y)
            trend = bs.pl0 + 10.0 * bs.exponent * np.log10(np.maximum(d, bs.d0) / bs.d0)
            out[s] = np.maximum(trend + self.shadowing(s, pts), 0.0)
        return out

    def strongest(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Index of the strongest active station and its path loss, per point."""
        if not any(self.active):
            raise ConfigurationError("no active base station")
        pl = self.per_station(points)
        pl[~np.asarray(self.active)] = np.inf
        idx = np.argmin(pl, axis=0)  # first minimum = lowest index on ties
        return idx, pl[idx, np.arange(pl.shape[1])]

    def __call__(self, points) -> np.ndarray:
        return self.strongest(points)[1]

    predict = __call__


def path_loss_bs(gmap: GroundTruthMap, station: int, x) -> float:
    _check_station(gmap, station)
    return float(gmap.per_station(x)[station, 0])


def strongest_bs(gmap: GroundTruthMap, x) -> tuple[int, float]:
    if not gmap.stations:
        raise ConfigurationError("scenario has no base stations")
    idx, val = gmap.strongest(x)
    return int(idx[0]), float(val[0])


def _check_station(gmap: GroundTruthMap, station: int) -> None:
    if not 0 <= station < len(gmap.stations):
        raise ConfigurationError(f"unknown station index {station}")


@dataclass(frozen=True)
class Pl0Shift:
    station: int
    delta_db: float


@dataclass(frozen=True)
class StationOff:
    station: int


def apply_event(gmap: GroundTruthMap, event: Pl0Shift | StationOff) -> GroundTruthMap:
    _check_station(gmap, event.station)
    if isinstance(event, Pl0Shift):
        stations = list(gmap.stations)
        bs = stations[event.station]
        stations[event.station] = replace(bs, pl0=bs.pl0 + event.delta_db)
        return replace(gmap, stations=tuple(stations))
    if isinstance(event, StationOff):
        active = list(gmap.active)
        active[event.station] = False
        return replace(gmap, active=tuple(active))
    raise InvalidInputError(f"unknown event {event!r}")


def gen_trajectory(cfg: ScenarioConfig, n_steps: int | None = None, user: int = 0) -> np.ndarray:
    """Random-waypoint path of one user sampled every ``dt`` seconds, shape ``(n_steps, 2)``.

    The walker starts at a uniform point, travels in straight lines at a uniform
    random speed to uniform waypoints and pauses there for a uniform random time.
    Each user index draws from its own random stream.
    """
    n = cfg.n_steps if n_steps is None else n_steps
    if n < 1:
        raise InvalidInputError("n_steps must be >= 1")
    mob, area = cfg.mobility, cfg.area
    rng = cfg.rng(_MOBILITY, sub=user)

    def uniform_point():
        return np.array([rng.uniform(area.xmin, area.xmax), rng.uniform(area.ymin, area.ymax)])

    out = np.empty((n, 2))
    pos = uniform_point()
    target, speed, pause_left = uniform_point(), rng.uniform(mob.speed_min, mob.speed_max), 0.0
    for k in range(n):
        out[k] = pos
        budget = mob.dt
        if pause_left > 0:
            used = min(pause_left, budget)
            pause_left -= used
            budget -= used
            if pause_left > 0:
                continue
            target, speed = uniform_point(), rng.uniform(mob.speed_min, mob.speed_max)
        while budget > 0:
            gap = target - pos
            dist = float(np.hypot(*gap))
            reach = speed * budget
            if reach < dist:
                pos = pos + gap * (reach / dist)
                break
            pos = target.copy()
            budget -= dist / speed
            pause_left = rng.uniform(mob.pause_min, mob.pause_max)
            if pause_left > budget:
                pause_left -= budget
                break
            budget -= pause_left
            pause_left = 0.0
            target, speed = uniform_point(), rng.uniform(mob.speed_min, mob.speed_max)
        # clamp protects against round-off only; waypoints are inside the area
        pos = np.clip(pos, [area.xmin, area.ymin], [area.xmax, area.ymax])
    return out


def report_positions(cfg: ScenarioConfig, n_steps: int | None = None) -> np.ndarray:
    """True positions of the reports in arrival order.

    Users report round-robin: report ``k`` comes from user ``k % n_users``, whose
    own path advances one ``dt`` between its consecutive reports.
    """
    n = cfg.n_steps if n_steps is None else n_steps
    users = cfg.mobility.n_users
    if users == 1:
        return gen_trajectory(cfg, n)
    per_user = -(-n // users)
    out = np.empty((per_user * users, 2))
    for u in range(users):
        out[u::users] = gen_trajectory(cfg, per_user, user=u)
    return out[:n]


def _noisy_reports(cfg: ScenarioConfig, traj: np.ndarray, truth: np.ndarray) -> list[Measurement]:
    rng = cfg.rng(_NOISE)
    pos_noise = rng.standard_normal((len(traj), 2)) * cfg.pos_noise_sigma
    val_noise = rng.standard_normal(len(traj)) * cfg.meas_noise_sigma
    values = np.maximum(truth + val_noise, 0.0)
    reported = traj + pos_noise
    return [
        Measurement(Position(float(p[0]), float(p[1])), float(v), k + 1)
        for k, (p, v) in enumerate(zip(reported, values))
    ]


def gen_measurements(gmap: GroundTruthMap, trajectory) -> list[Measurement]:
    """Noisy reports along ``trajectory`` with time indices ``1..n``.

    Values are the strongest-station loss at the *true* position plus Gaussian
    noise, clamped at zero; reported positions carry independent Gaussian noise.
    """
    traj = as_points(trajectory)
    return _noisy_reports(gmap.config, traj, gmap(traj))


def simulate_stream(
    cfg: ScenarioConfig,
    events: Sequence[tuple[int, Pl0Shift | StationOff]] = (),
) -> tuple[list[Measurement], list[tuple[int, GroundTruthMap]]]:
    """Trajectory plus measurements under a piecewise-constant truth.

    ``events`` are ``(step, event)`` pairs; an event affects measurements with
    ``time_index > step``. Returns the stream and the ``(first_time_index, map)``
    segments, the first of which is the unmodified map. Noise draws do not
    depend on the events, so a null event reproduces the plain stream.
    """
    current = GroundTruthMap.build(cfg)
    segments = [(1, current)]
    for step, ev in sorted(events, key=lambda e: e[0]):
        current = apply_event(current, ev)
        segments.append((step + 1, current))
    if cfg.n_steps == 0:
        return [], segments
    traj = report_positions(cfg)
    truth = np.empty(len(traj))
    starts = [s for s, _ in segments] + [len(traj) + 1]
    for (start, gm), stop in zip(segments, starts[1:]):
        lo, hi = min(start - 1, len(traj)), min(stop - 1, len(traj))
        if hi > lo:
            truth[lo:hi] = gm(traj[lo:hi])
    return _noisy_reports(cfg, traj, truth), segments


def truth_at(segments: Sequence[tuple[int, GroundTruthMap]], time_index: int) -> GroundTruthMap:
    """The map in force for measurement ``time_index``."""
    current = segments[0][1]
    for start, gm in segments:
        if start <= time_index:
            current = gm
    return current
