"""Scoring and experiment orchestration.

Estimators are anything with ``observe(measurement)`` and ``snapshot()``; a
snapshot is anything with ``predict(points) -> array``. Scoring only ever calls
``predict`` on a snapshot, so it cannot disturb estimator state.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, InvalidInputError
from .kernels import Measurement, as_points
from .simulator import (
    Area,
    GroundTruthMap,
    Pl0Shift,
    ScenarioConfig,
    StationOff,
    simulate_stream,
    truth_at,
)


class Snapshot(Protocol):
    def predict(self, points) -> np.ndarray: ...


class OnlineEstimator(Protocol):
    name: str

    def observe(self, m: Measurement): ...

    def snapshot(self) -> Snapshot: ...


@dataclass(frozen=True)
class GridSpec:
    area: Area = field(default_factory=Area)
    nx: int = 50
    ny: int = 50

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError("grid needs nx, ny >= 2")

    @property
    def xs(self) -> np.ndarray:
        a = self.area
        return a.xmin + (np.arange(self.nx) + 0.5) * a.width / self.nx

    @property
    def ys(self) -> np.ndarray:
        a = self.area
        return a.ymin + (np.arange(self.ny) + 0.5) * a.height / self.ny

    def centers(self) -> np.ndarray:
        """Cell centers, x-major: row ``i * ny + j`` is ``(xs[i], ys[j])``."""
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    @property
    def cell_diagonal(self) -> float:
        return float(np.hypot(self.area.width / self.nx, self.area.height / self.ny))


@dataclass
class EvalReport:
    rmse: float
    mae: float
    sampled_rmse: float
    sampled_radius: float
    sampled_fraction: float
    truth: np.ndarray = field(repr=False)
    estimate: np.ndarray = field(repr=False)
    grid: GridSpec = field(repr=False, default_factory=GridSpec)
    n_measurements: int = 0
    runtime: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def error_grid(self) -> np.ndarray:
        """Absolute errors as an ``(nx, ny)`` array."""
        return np.abs(self.estimate - self.truth).reshape(self.grid.nx, self.grid.ny)

    def summary(self, include_runtime: bool = False) -> dict:
        out = {
            "n_measurements": self.n_measurements,
            "rmse_db": self.rmse,
            "mae_db": self.mae,
            "sampled_rmse_db": self.sampled_rmse,
            "sampled_radius_m": self.sampled_radius,
            "sampled_fraction": self.sampled_fraction,
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny},
            "metadata": self.metadata,
        }
        if include_runtime:
            out["runtime_s"] = self.runtime
        return out

    def grid_rows(self) -> list[tuple[float, float, float, float, float]]:
        pts = self.grid.centers()
        err = np.abs(self.estimate - self.truth)
        return [
            (float(p[0]), float(p[1]), float(t), float(e), float(a))
            for p, t, e, a in zip(pts, self.truth, self.estimate, err)
        ]


def sampled_radius(positions: np.ndarray) -> float:
    """Twice the median distance from a measurement to its nearest other measurement."""
    if len(positions) < 2:
        return float("nan")
    d, _ = cKDTree(positions).query(positions, k=2)
    return 2.0 * float(np.median(d[:, 1]))


def sampled_mask(grid: GridSpec, positions: np.ndarray, radius: float) -> np.ndarray:
    if not len(positions) or not np.isfinite(radius):
        return np.zeros(grid.nx * grid.ny, dtype=bool)
    d, _ = cKDTree(positions).query(grid.centers())
    return d <= radius


def grid_eval(
    snapshot: Snapshot,
    truth: GroundTruthMap | Snapshot,
    grid: GridSpec,
    measurements: Sequence[Measurement] = (),
    radius: float | None = None,
    metadata: dict | None = None,
) -> EvalReport:
    """Score a frozen estimate against the truth at every grid cell center.

    Estimates are clamped at 0 dB for reporting. The sampled region is the set of
    cells within ``radius`` of a reported measurement position; by default the
    radius is twice the median nearest-neighbour spacing of the measurements.
    """
    t0 = time.perf_counter()
    pts = grid.centers()
    est = np.maximum(np.asarray(snapshot.predict(pts), dtype=float), 0.0)
    tru = np.asarray(truth.predict(pts), dtype=float)
    err = est - tru
    positions = as_points([m.position for m in measurements]) if len(measurements) else np.zeros((0, 2))
    r = sampled_radius(positions) if radius is None else float(radius)
    mask = sampled_mask(grid, positions, r)
    sampled = float(np.sqrt(np.mean(err[mask] ** 2))) if mask.any() else float("nan")
    return EvalReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        sampled_rmse=sampled,
        sampled_radius=r,
        sampled_fraction=float(mask.mean()),
        truth=tru,
        estimate=est,
        grid=grid,
        n_measurements=len(measurements),
        runtime=time.perf_counter() - t0,
        metadata=dict(metadata or {}),
    )


def _stack(measurements: Sequence[Measurement]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not len(measurements):
        raise InvalidInputError("baseline needs at least one measurement")
    pos = as_points([m.position for m in measurements])
    vals = np.array([m.path_loss for m in measurements])
    times = np.array([m.time_index for m in measurements])
    order = np.argsort(times, kind="stable")
    return pos[order], vals[order], times[order]


def _idw_predict(pos, vals, points, power: float) -> np.ndarray:
    pts = as_points(points)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), 512):
        chunk = pts[lo:lo + 512]
        d = np.hypot(chunk[:, None, 0] - pos[None, :, 0], chunk[:, None, 1] - pos[None, :, 1])
        hit = d == 0
        exact = hit.any(axis=1)
        d = np.where(exact[:, None], 1.0, d)  # exact-hit rows are overwritten below
        # scale by the nearest distance so large powers do not underflow
        w = (d / d.min(axis=1)[:, None]) ** (-power)
        vals_chunk = (w @ vals) / w.sum(axis=1)
        if exact.any():
            vals_chunk[exact] = vals[hit[exact].argmax(axis=1)]
        out[lo:lo + 512] = vals_chunk
    return out


def _nn_predict(pos, vals, points) -> np.ndarray:
    pts = as_points(points)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), 512):
        chunk = pts[lo:lo + 512]
        d2 = (chunk[:, None, 0] - pos[None, :, 0]) ** 2 + (chunk[:, None, 1] - pos[None, :, 1]) ** 2
        out[lo:lo + 512] = vals[d2.argmin(axis=1)]  # first minimum = earliest time index
    return out


def baseline_idw(measurements: Sequence[Measurement], x, power: float = 2.0) -> float:
    pos, vals, _ = _stack(measurements)
    return float(_idw_predict(pos, vals, x, power)[0])


def baseline_nn(measurements: Sequence[Measurement], x) -> float:
    pos, vals, _ = _stack(measurements)
    return float(_nn_predict(pos, vals, x)[0])


@dataclass(frozen=True, eq=False)
class _BaselineSnapshot:
    kind: str
    pos: np.ndarray
    vals: np.ndarray
    power: float = 2.0

    def predict(self, points) -> np.ndarray:
        if not len(self.vals):
            return np.zeros(len(as_points(points)))
        if self.kind == "nn":
            return _nn_predict(self.pos, self.vals, points)
        return _idw_predict(self.pos, self.vals, points, self.power)


class _BaselineEstimator:
    def __init__(self):
        self.measurements: list[Measurement] = []

    def observe(self, m: Measurement):
        if self.measurements and m.time_index <= self.measurements[-1].time_index:
            from .errors import OrderingError

            raise OrderingError("measurement stream is not strictly time-ordered")
        self.measurements.append(m)
        return None


class IdwEstimator(_BaselineEstimator):
    name = "idw"

    def __init__(self, power: float = 2.0):
        super().__init__()
        if not power > 0:
            raise ConfigurationError("IDW power must be > 0")
        self.power = power

    def snapshot(self) -> _BaselineSnapshot:
        if not self.measurements:
            return _BaselineSnapshot("idw", np.zeros((0, 2)), np.zeros(0), self.power)
        pos, vals, _ = _stack(self.measurements)
        return _BaselineSnapshot("idw", pos, vals, self.power)


class NnEstimator(_BaselineEstimator):
    name = "nn"

    def snapshot(self) -> _BaselineSnapshot:
        if not self.measurements:
            return _BaselineSnapshot("nn", np.zeros((0, 2)), np.zeros(0))
        pos, vals, _ = _stack(self.measurements)
        return _BaselineSnapshot("nn", pos, vals)


def _check_checkpoints(checkpoints: Sequence[int], n: int) -> list[int]:
    cps = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ConfigurationError("checkpoints must be strictly increasing")
    if cps and (cps[0] < 1 or cps[-1] > n):
        raise ConfigurationError(f"checkpoints must lie in [1, {n}]")
    return cps


def replay(
    stream: Sequence[Measurement],
    estimator: OnlineEstimator,
    checkpoints: Sequence[int] = (),
    on_checkpoint: Callable[[int, Snapshot, float], None] | None = None,
) -> list:
    """Feed ``stream`` into ``estimator``; call ``on_checkpoint(n, snapshot, elapsed)`` at each checkpoint.

    Returns the per-step diagnostics emitted by the estimator.
    """
    cps = set(_check_checkpoints(checkpoints, len(stream)))
    diags = []
    elapsed = 0.0
    for n, m in enumerate(stream, start=1):
        t0 = time.perf_counter()
        diags.append(estimator.observe(m))
        elapsed += time.perf_counter() - t0
        if n in cps and on_checkpoint is not None:
            on_checkpoint(n, estimator.snapshot(), elapsed)
    return diags


def learning_curve(
    scenario: ScenarioConfig,
    make_estimator: Callable[[], OnlineEstimator],
    checkpoints: Sequence[int],
    grid: GridSpec | None = None,
    stream: Sequence[Measurement] | None = None,
    truth: GroundTruthMap | None = None,
) -> list[tuple[int, EvalReport]]:
    """Score snapshots of one estimator run at each checkpoint."""
    grid = grid or GridSpec(scenario.area)
    if stream is None or truth is None:
        stream, segments = simulate_stream(scenario)
        truth = segments[0][1]
    _check_checkpoints(checkpoints, len(stream))
    if not checkpoints:
        return []
    est = make_estimator()
    out: list[tuple[int, EvalReport]] = []

    def score(n, snap, elapsed):
        rep = grid_eval(snap, truth, grid, stream[:n], metadata={"estimator": est.name, "seed": scenario.seed})
        rep.runtime = elapsed
        out.append((n, rep))

    replay(stream, est, checkpoints, score)
    return out


Event = Pl0Shift | StationOff


@dataclass
class TrackingResult:
    event_step: int
    checkpoints: list[int]
    sampled_rmse: list[float]
    rmse: list[float]

    def level(self, lo: int, hi: int) -> float:
        """Mean sampled rmse over checkpoints ``n`` with ``lo < n <= hi``."""
        vals = [r for n, r in zip(self.checkpoints, self.sampled_rmse) if lo < n <= hi]
        if not vals:
            raise InvalidInputError(f"no checkpoint in ({lo}, {hi}]")
        return float(np.mean(vals))

    def at(self, n: int) -> float:
        return self.sampled_rmse[self.checkpoints.index(n)]


def tracking_experiment(
    scenario: ScenarioConfig,
    event: Event | None,
    event_step: int,
    make_estimator: Callable[[], OnlineEstimator],
    checkpoints: Sequence[int],
    grid: GridSpec | None = None,
) -> TrackingResult:
    """Sampled-region rmse over time against the truth in force at each checkpoint.

    ``event`` (or ``None`` for a null run) hits the map after measurement
    ``event_step``.
    """
    if not 0 <= event_step <= scenario.n_steps:
        raise ConfigurationError("event step outside the stream")
    grid = grid or GridSpec(scenario.area)
    events = [(event_step, event)] if event is not None else []
    stream, segments = simulate_stream(scenario, events)
    cps = _check_checkpoints(checkpoints, len(stream))
    est = make_estimator()
    sampled, total = [], []

    def score(n, snap, _elapsed):
        rep = grid_eval(snap, truth_at(segments, n), grid, stream[:n])
        sampled.append(rep.sampled_rmse)
        total.append(rep.rmse)

    replay(stream, est, cps, score)
    return TrackingResult(event_step, cps, sampled, total)
