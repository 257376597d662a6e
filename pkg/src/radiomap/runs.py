"""The four run commands as pure functions ``RunConfig -> {filename: text}``.

Nothing here touches the filesystem except reading an optional measurement
file; :func:`write_outputs` does the writing. Every command also emits the
resolved config so a run directory is self-describing.
"""
from __future__ import annotations

import os
import random
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import io as rio
from .config import RunConfig
from .errors import ConfigurationError
from .harness import grid_eval, replay
from .kernels import Measurement
from .simulator import simulate_stream, truth_at

THREADS_ENV = "RADIOMAP_THREADS"
RESOLVED_CONFIG = "config.resolved.json"


def worker_count(env: dict | None = None) -> int:
    """Worker pool size: ``RADIOMAP_THREADS`` if set, else the CPU count."""
    raw = (os.environ if env is None else env).get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _resolved_json(run: RunConfig) -> str:
    res = run.resolved()
    if res.seed is None:
        res = res.model_copy(update={"seed": res.scenario.seed})
    # the output directory is where these bytes land, not part of what they depend on
    return rio.dumps(res.model_dump(mode="json", exclude={"out"}))


def _world(run: RunConfig, measurements: Sequence[Measurement] | None = None):
    """Stream and truth segments; an external stream replaces the simulated one."""
    scenario = run.scenario_file()
    cfg = scenario.to_config(run.seed)
    if measurements is None and run.measurements is not None:
        measurements = rio.read_measurements(run.measurements)
    if measurements is not None:
        _, segments = simulate_stream(replace(cfg, n_steps=0), scenario.to_events())
        return list(measurements), segments, cfg
    stream, segments = simulate_stream(cfg, scenario.to_events())
    return stream, segments, cfg


def _checkpoints(run: RunConfig, n: int) -> list[int]:
    cps = run.checkpoints or [n]
    if n == 0:
        raise ConfigurationError("empty measurement stream")
    if cps[-1] > n:
        raise ConfigurationError(f"checkpoint {cps[-1]} beyond stream length {n}")
    return cps


def cmd_simulate(run: RunConfig) -> dict[str, str]:
    """Measurement stream, scenario snapshot and a dump of the initial truth on the grid."""
    scenario = run.scenario_file()
    cfg = scenario.to_config(run.seed)
    stream, segments = simulate_stream(cfg, scenario.to_events())
    grid = run.grid_spec(cfg.area)
    pts = grid.centers()
    truth = segments[0][1].predict(pts)
    snap = scenario.model_copy(update={"seed": cfg.seed})
    return {
        "measurements.csv": rio.measurements_csv(stream),
        "scenario.json": rio.dumps(snap.model_dump(mode="json")),
        "truth_grid.csv": rio.write_table(("x", "y", "truth_db"), ((p[0], p[1], t) for p, t in zip(pts, truth))),
        RESOLVED_CONFIG: _resolved_json(run),
    }


def cmd_reconstruct(run: RunConfig, measurements: Sequence[Measurement] | None = None) -> dict[str, str]:
    """Run the selected estimator over the stream; emit per-step diagnostics and the final map."""
    stream, _, cfg = _world(run, measurements)
    est = run.params().build()
    diags = replay(stream, est, ())
    grid = run.grid_spec(cfg.area)
    pts = grid.centers()
    est_vals = np.maximum(est.snapshot().predict(pts), 0.0)
    files = {
        "map.csv": rio.write_table(("x", "y", "estimate_db"), ((p[0], p[1], v) for p, v in zip(pts, est_vals))),
        RESOLVED_CONFIG: _resolved_json(run),
    }
    if diags and diags[0] is not None:
        files["diagnostics.csv"] = rio.diagnostics_csv(diags)
    return files


def evaluate_run(run: RunConfig, measurements: Sequence[Measurement] | None = None) -> list:
    """EvalReports at every checkpoint, each scored against the truth in force at that time."""
    stream, segments, cfg = _world(run, measurements)
    cps = _checkpoints(run, len(stream))
    grid = run.grid_spec(cfg.area)
    est = run.params().build()
    reports = []

    def score(n, snap, elapsed):
        t = stream[n - 1].time_index
        rep = grid_eval(snap, truth_at(segments, t), grid, stream[:n],
                        metadata={"estimator": run.estimator, "seed": cfg.seed})
        rep.runtime = elapsed
        reports.append(rep)

    replay(stream, est, cps, score)
    return reports


def cmd_evaluate(run: RunConfig, measurements: Sequence[Measurement] | None = None) -> dict[str, str]:
    reports = evaluate_run(run, measurements)
    body = {
        "estimator": run.estimator,
        "seed": reports[-1].metadata["seed"],
        "checkpoints": [r.summary(run.include_runtime) for r in reports],
        "final": reports[-1].summary(run.include_runtime),
    }
    return {
        "report.json": rio.dumps(body),
        "grid.csv": rio.grid_csv(reports[-1].grid_rows()),
        RESOLVED_CONFIG: _resolved_json(run),
    }


SWEEP_METRICS = ("n_measurements", "rmse_db", "mae_db", "sampled_rmse_db")


def _sweep_job(payload: tuple[dict, dict[str, Any]]) -> list:
    """One sweep point, from a JSON-able config dump so it pickles cheaply."""
    run_doc, point = payload
    run = RunConfig.model_validate(run_doc)
    params = {k: v for k, v in point.items() if k != "seed"}
    update: dict[str, Any] = {}
    if "seed" in point:
        update["seed"] = point["seed"]
    if params:
        cur = run.params().model_dump()
        new_params = type(run.params()).model_validate({**cur, **params})
        update["estimators"] = run.estimators.model_copy(update={run.estimator: new_params})
    run = run.model_copy(update=update)
    rep = evaluate_run(run)[-1]
    s = rep.summary()
    seed = run.seed if run.seed is not None else run.scenario_file().seed
    return [point[k] if k != "seed" else seed for k in sorted(point)] + [s[m] for m in SWEEP_METRICS]


def run_jobs(fn: Callable, payloads: Sequence, workers: int, order: Sequence[int] | None = None) -> list:
    """Evaluate ``fn`` on every payload; results come back in payload order regardless of ``order``."""
    idx = list(range(len(payloads))) if order is None else list(order)
    if sorted(idx) != list(range(len(payloads))):
        raise ConfigurationError("order must be a permutation of the payload indices")
    results: list = [None] * len(payloads)
    if workers <= 1 or len(payloads) <= 1:
        for i in idx:
            results[i] = fn(payloads[i])
        return results
    with ProcessPoolExecutor(max_workers=min(workers, len(payloads))) as pool:
        futures = {i: pool.submit(fn, payloads[i]) for i in idx}
        for i, fut in futures.items():
            results[i] = fut.result()
    return results


def cmd_sweep(run: RunConfig, workers: int | None = None, shuffle_seed: int | None = None) -> dict[str, str]:
    """One row per point of the sweep grid. ``shuffle_seed`` permutes execution order (testing aid)."""
    points = run.sweep_points()
    keys = sorted(run.sweep)
    doc = run.resolved().model_dump(mode="json")
    payloads = [(doc, p) for p in points]
    order = None
    if shuffle_seed is not None:
        order = list(range(len(payloads)))
        random.Random(shuffle_seed).shuffle(order)
    rows = run_jobs(_sweep_job, payloads, worker_count() if workers is None else workers, order)
    return {
        "sweep.csv": rio.write_table(tuple(keys) + SWEEP_METRICS, rows),
        RESOLVED_CONFIG: _resolved_json(run),
    }


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def write_outputs(out_dir: str | Path, files: dict[str, str]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        p = out / name
        p.write_text(files[name])
        written.append(p)
    return written
