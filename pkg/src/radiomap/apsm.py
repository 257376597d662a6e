"""Single-kernel online regression by parallel projections onto hyperslabs.

The estimate is a kernel expansion ``f = sum_i c_i k(x_i, .)`` whose centers are
the dictionary entries. Each incoming measurement ``(x, y)`` defines the
hyperslab ``{f : |y - f(x)| <= eps}``; an update moves ``f`` towards a weighted
average of its projections onto the ``q`` most recent hyperslabs.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError, OrderingError
from .kernels import (
    DictConfig,
    Dictionary,
    KernelSpec,
    Measurement,
    admit_or_evict,
    as_points,
    kernel_values,
    pairwise_distances,
)

MERGE_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class RkhsFunction:
    """Kernel expansion over the dictionary centers plus optional off-dictionary centers.

    Off-dictionary ("temporary") centers appear only as intermediate results of
    :func:`project_hyperslab`; :func:`apsm_update` folds them back.
    """

    kernel: KernelSpec
    dictionary: Dictionary
    coefficients: np.ndarray = None
    extra_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    extra_coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        coef = np.zeros(len(self.dictionary)) if self.coefficients is None else self.coefficients
        coef = np.array(coef, dtype=float).reshape(-1)
        if len(coef) != len(self.dictionary):
            raise InvalidInputError(
                f"{len(coef)} coefficients for a dictionary of size {len(self.dictionary)}"
            )
        xc = np.array(self.extra_centers, dtype=float).reshape(-1, 2)
        xv = np.array(self.extra_coefficients, dtype=float).reshape(-1)
        if len(xc) != len(xv):
            raise InvalidInputError("extra centers and coefficients differ in length")
        for arr in (coef, xc, xv):
            arr.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "extra_centers", xc)
        object.__setattr__(self, "extra_coefficients", xv)

    @classmethod
    def zero(cls, kernel: KernelSpec, dictionary: Dictionary) -> "RkhsFunction":
        return cls(kernel, dictionary)

    @property
    def centers(self) -> np.ndarray:
        return np.vstack([self.dictionary.positions, self.extra_centers])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.coefficients, self.extra_coefficients])

    def predict(self, points) -> np.ndarray:
        pts = as_points(points)
        centers = self.centers
        if not len(centers):
            return np.zeros(len(pts))
        out = np.empty(len(pts))
        for lo in range(0, len(pts), 2048):
            out[lo:lo + 2048] = kernel_values(self.kernel, pts[lo:lo + 2048], centers) @ self.weights
        return out

    def norm(self) -> float:
        return rkhs_norm(self.kernel, self.centers, self.weights)


def rkhs_norm(kernel: KernelSpec, centers, weights) -> float:
    """``sqrt(w^T G w)`` for an expansion; round-off negatives clip to zero."""
    w = np.asarray(weights, dtype=float)
    if not len(w):
        return 0.0
    g = kernel_values(kernel, centers, centers)
    return float(np.sqrt(max(w @ g @ w, 0.0)))


def rkhs_distance(f: RkhsFunction, g: RkhsFunction) -> float:
    """``||f - g||``; coincident centers are merged first so equal functions give exactly 0."""
    if f.kernel != g.kernel:
        raise InvalidInputError("functions live in different RKHSs")
    centers, inv = np.unique(np.vstack([f.centers, g.centers]), axis=0, return_inverse=True)
    w = np.bincount(inv.reshape(-1), weights=np.concatenate([f.weights, -g.weights]), minlength=len(centers))
    keep = w != 0.0
    return rkhs_norm(f.kernel, centers[keep], w[keep])


def evaluate(f: RkhsFunction, x) -> float:
    return float(f.predict(x)[0])


@dataclass(frozen=True)
class Hyperslab:
    position: tuple[float, float]
    target: float
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("hyperslab half-width must be > 0")

    def contains(self, f: RkhsFunction) -> bool:
        return abs(self.target - evaluate(f, self.position)) <= self.epsilon


@dataclass(frozen=True)
class ApsmConfig:
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("gaussian", 100.0))
    epsilon: float = 1.0
    window_q: int = 2
    weights: tuple[float, ...] | None = None
    relaxation_mu: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")
        if self.window_q < 1:
            raise ConfigurationError("window_q must be >= 1")
        if not 0.0 < self.relaxation_mu < 2.0:
            raise ConfigurationError("relaxation_mu must lie in (0, 2)")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != self.window_q:
                raise ConfigurationError("need one weight per window slot")
            if min(w) <= 0 or abs(sum(w) - 1.0) > 1e-12:
                raise ConfigurationError("weights must be positive and sum to 1")
            object.__setattr__(self, "weights", w)


def _overshoot(residual: np.ndarray, epsilon) -> np.ndarray:
    """Signed distance of the prediction to the slab, zero inside it."""
    return np.sign(residual) * np.maximum(np.abs(residual) - epsilon, 0.0)


def _add_at(f: RkhsFunction, positions: np.ndarray, amounts: np.ndarray) -> RkhsFunction:
    """Return ``f + sum_j amounts[j] * k(positions[j], .)``, reusing coinciding centers."""
    coef = f.coefficients.copy()
    xc = [tuple(p) for p in f.extra_centers]
    xv = list(f.extra_coefficients)
    for pos, amount in zip(positions, amounts):
        if amount == 0.0:
            continue
        i = f.dictionary.index_of(pos)
        if i is not None:
            coef[i] += amount
            continue
        key = (float(pos[0]), float(pos[1]))
        if key in xc:
            xv[xc.index(key)] += amount
        else:
            xc.append(key)
            xv.append(amount)
    return replace(f, coefficients=coef, extra_centers=np.array(xc).reshape(-1, 2), extra_coefficients=xv)


def project_hyperslab(f: RkhsFunction, s: Hyperslab) -> RkhsFunction:
    """Metric projection of ``f`` onto the hyperslab ``s``.

    Leaves ``f`` untouched when it is already inside the slab, otherwise adds a
    multiple of ``k(s.position, .)`` so that the prediction lands on the nearer
    slab boundary.
    """
    pos = as_points(s.position)
    r = s.target - evaluate(f, pos)
    if abs(r) <= s.epsilon:
        return f
    beta = _overshoot(np.array([r]), s.epsilon) / kernel_values(f.kernel, pos, pos)[0, 0]
    return _add_at(f, pos, beta)


def _absorb_temporaries(f: RkhsFunction) -> RkhsFunction:
    """Fold off-dictionary centers into the nearest dictionary center, or drop negligible ones."""
    if not len(f.extra_centers):
        return f
    coef = f.coefficients.copy()
    if len(f.dictionary):
        scale = MERGE_RTOL * (np.abs(coef).max() if len(coef) else 0.0)
        nearest = pairwise_distances(f.extra_centers, f.dictionary.positions).argmin(axis=1)
        for i, c in zip(nearest, f.extra_coefficients):
            if abs(c) > scale:
                coef[i] += c
    return replace(f, coefficients=coef, extra_centers=np.zeros((0, 2)), extra_coefficients=np.zeros(0))


def _admit(f: RkhsFunction, m: Measurement) -> RkhsFunction:
    new_dict, admitted, evicted = admit_or_evict(f.dictionary, m)
    if not admitted:
        return f
    coef = f.coefficients
    if evicted is not None:
        coef = np.delete(coef, evicted)
    return replace(f, dictionary=new_dict, coefficients=np.append(coef, 0.0))


def _slab_weights(cfg_weights, count: int) -> np.ndarray:
    if cfg_weights is None:
        return np.full(count, 1.0 / count)
    if len(cfg_weights) != count:
        raise ConfigurationError(f"{len(cfg_weights)} weights for {count} hyperslabs")
    return np.asarray(cfg_weights, dtype=float)


def apsm_update(
    f: RkhsFunction,
    recent: Sequence[Hyperslab],
    cfg: ApsmConfig,
    new: Measurement | None = None,
    weights: Sequence[float] | None = None,
) -> RkhsFunction:
    """One relaxed parallel-projection step ``f + mu * (sum_j w_j P_j(f) - f)``.

    ``new``, if given, is offered to the dictionary before projecting. Explicit
    ``weights`` override ``cfg.weights``; either way their number must match
    ``len(recent)``. Centers outside the dictionary that the projections create
    are folded into their nearest dictionary center.
    """
    if not recent:
        raise InvalidInputError("apsm_update needs at least one hyperslab")
    w = _slab_weights(cfg.weights if weights is None else weights, len(recent))
    if new is not None:
        f = _admit(f, new)
    pos = as_points([s.position for s in recent])
    eps = np.array([s.epsilon for s in recent])
    targets = np.array([s.target for s in recent])
    residual = targets - f.predict(pos)
    diag = np.array([kernel_values(f.kernel, p, p)[0, 0] for p in pos])
    beta = _overshoot(residual, eps) / diag
    f = _add_at(f, pos, (cfg.relaxation_mu * w) * beta)
    return _absorb_temporaries(f)


@dataclass
class StepDiagnostics:
    step: int
    residual_before: float
    residual_after: float
    dict_size: int


class ApsmEstimator:
    """Online wrapper: feed measurements one at a time with :meth:`observe`."""

    name = "apsm"

    def __init__(self, cfg: ApsmConfig | None = None, dict_cfg: DictConfig | None = None):
        self.cfg = cfg or ApsmConfig()
        self.dict_cfg = dict_cfg or DictConfig()
        self.f = RkhsFunction.zero(self.cfg.kernel, self.dict_cfg.empty(self.cfg.kernel))
        self.window: deque[Hyperslab] = deque(maxlen=self.cfg.window_q)
        self.last_time: int | None = None
        self.steps = 0

    def observe(self, m: Measurement) -> StepDiagnostics:
        if self.last_time is not None and m.time_index <= self.last_time:
            raise OrderingError(f"measurement time {m.time_index} after {self.last_time}")
        x = np.asarray(m.position, dtype=float)
        before = abs(m.path_loss - evaluate(self.f, x))
        self.window.append(Hyperslab(tuple(x), m.path_loss, self.cfg.epsilon))
        w = None
        if self.cfg.weights is not None and len(self.window) < self.cfg.window_q:
            # warm-up: the newest slabs take the trailing weights, rescaled to sum to one
            tail = np.asarray(self.cfg.weights[-len(self.window):])
            w = tail / tail.sum()
        self.f = apsm_update(self.f, list(self.window), self.cfg, new=m, weights=w)
        self.last_time = m.time_index
        self.steps += 1
        after = abs(m.path_loss - evaluate(self.f, x))
        return StepDiagnostics(self.steps, before, after, len(self.f.dictionary))

    def snapshot(self) -> RkhsFunction:
        return self.f

    def predict(self, points) -> np.ndarray:
        return self.f.predict(points)


def run_stream_apsm(
    stream: Sequence[Measurement],
    cfg: ApsmConfig | None = None,
    dict_cfg: DictConfig | None = None,
) -> tuple[RkhsFunction, list[StepDiagnostics]]:
    check_ordered(stream)
    est = ApsmEstimator(cfg, dict_cfg)
    diags = [est.observe(m) for m in stream]
    return est.snapshot(), diags


def check_ordered(stream: Sequence[Measurement]) -> None:
    times = [m.time_index for m in stream]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise OrderingError("measurement stream is not strictly time-ordered")
