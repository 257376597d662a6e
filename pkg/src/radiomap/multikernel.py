"""Multi-kernel estimator trained by forward-backward splitting.

The estimate at ``x`` is ``<A, K(x)>`` where ``K(x)[m, i] = k_m(x, x_i)`` for a
bank of ``M`` kernels and ``I`` dictionary centers. Each step takes a gradient
step on the weighted half squared (Frobenius) distance to the recent
measurement sets, then applies two weighted group soft-thresholds: one over
columns (prunes dictionary entries) and one over rows (switches kernels off).
Group weights are refreshed periodically from the current row/column norms.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .apsm import _slab_weights, check_ordered
from .errors import (
    ConfigurationError,
    DegenerateConstraintError,
    DimensionError,
    InvalidInputError,
    OrderingError,
)
from .kernels import (
    DictConfig,
    Dictionary,
    KernelBank,
    Measurement,
    admit_or_evict,
    as_points,
    bank_values,
    kernel_matrix_at,
    pairwise_distances,
)


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    kernel_matrix: np.ndarray
    target: float
    epsilon: float

    def __post_init__(self):
        k = np.asarray(self.kernel_matrix, dtype=float)
        if k.ndim != 2:
            raise DimensionError("kernel matrix must be 2-D")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")
        if not np.any(k):
            raise DegenerateConstraintError("kernel matrix has zero Frobenius norm")
        object.__setattr__(self, "kernel_matrix", k)


@dataclass(frozen=True)
class MkConfig:
    epsilon: float = 1.0
    step_gamma: float = 1.0
    lambda_kernel: float = 1e-3
    lambda_dict: float = 1e-3
    reweight_delta: float = 1e-2
    reweight_every: int = 25
    prune_tol: float | None = 1e-8
    window_q: int = 2
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")
        if not 0.0 < self.step_gamma < 2.0:
            raise ConfigurationError("step_gamma must lie in (0, 2)")
        if self.lambda_kernel < 0 or self.lambda_dict < 0:
            raise ConfigurationError("regularization weights must be >= 0")
        if not self.reweight_delta > 0:
            raise ConfigurationError("reweight_delta must be > 0")
        if self.reweight_every < 1:
            raise ConfigurationError("reweight_every must be >= 1")
        if self.prune_tol is not None and self.prune_tol < 0:
            raise ConfigurationError("prune_tol must be >= 0")
        if self.window_q < 1:
            raise ConfigurationError("window_q must be >= 1")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != self.window_q:
                raise ConfigurationError("need one weight per window slot")
            if min(w) <= 0 or abs(sum(w) - 1.0) > 1e-12:
                raise ConfigurationError("weights must be positive and sum to 1")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True, eq=False)
class RowColWeights:
    row_w: np.ndarray
    col_w: np.ndarray

    @classmethod
    def ones(cls, n_rows: int, n_cols: int) -> "RowColWeights":
        return cls(np.ones(n_rows), np.ones(n_cols))


def _check_shapes(a: np.ndarray, k: np.ndarray) -> None:
    if a.shape != k.shape:
        raise DimensionError(f"parameter matrix {a.shape} vs kernel matrix {k.shape}")


def estimate_mk(A: np.ndarray, K: np.ndarray) -> float:
    """Trace inner product ``<A, K>``."""
    A = np.asarray(A, dtype=float)
    K = np.asarray(K, dtype=float)
    _check_shapes(A, K)
    return float(np.sum(A * K))


def _step_size(A: np.ndarray, s: MeasurementSet) -> float:
    """Coefficient ``c`` with ``P_S(A) = A + c * K``."""
    K = s.kernel_matrix
    _check_shapes(A, K)
    r = s.target - float(np.sum(A * K))
    if abs(r) <= s.epsilon:
        return 0.0
    return float(np.sign(r) * (abs(r) - s.epsilon) / np.sum(K * K))


def project_measurement_set(A: np.ndarray, s: MeasurementSet) -> np.ndarray:
    """Frobenius-metric projection onto ``{A : |<A, K> - y| <= eps}``."""
    A = np.asarray(A, dtype=float)
    c = _step_size(A, s)
    if c == 0.0:
        return A
    return A + c * s.kernel_matrix


def _group_shrink(A: np.ndarray, tau: float, w: np.ndarray, axis: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    w = np.asarray(w, dtype=float)
    if tau == 0:
        return A
    if w.shape != (A.shape[1 - axis],):
        raise DimensionError(f"{w.shape[0]} group weights for axis of length {A.shape[1 - axis]}")
    norms = np.sqrt(np.sum(A * A, axis=axis))
    thresh = tau * w
    scale = np.zeros_like(norms)
    live = norms > thresh
    scale[live] = 1.0 - thresh[live] / norms[live]
    return A * (scale[None, :] if axis == 0 else scale[:, None])


def prox_col_groups(A: np.ndarray, tau: float, col_w: np.ndarray) -> np.ndarray:
    """Weighted block soft-threshold of each column (one column per dictionary entry)."""
    return _group_shrink(A, tau, col_w, axis=0)


def prox_row_groups(A: np.ndarray, tau: float, row_w: np.ndarray) -> np.ndarray:
    """Weighted block soft-threshold of each row (one row per kernel)."""
    return _group_shrink(A, tau, row_w, axis=1)


def fb_update(
    A: np.ndarray,
    recent: Sequence[MeasurementSet],
    cfg: MkConfig,
    w: RowColWeights,
    weights: Sequence[float] | None = None,
) -> np.ndarray:
    if not recent:
        raise InvalidInputError("fb_update needs at least one measurement set")
    A = np.asarray(A, dtype=float)
    set_w = _slab_weights(cfg.weights if weights is None else weights, len(recent))
    # forward step: A - gamma * sum_j w_j (A - P_j(A)), written with P_j(A) = A + c_j K_j
    coefs = [cfg.step_gamma * wj * _step_size(A, s) for wj, s in zip(set_w, recent)]
    forward = A
    for c, s in zip(coefs, recent):
        if c != 0.0:
            forward = forward + c * s.kernel_matrix
    out = prox_col_groups(forward, cfg.step_gamma * cfg.lambda_dict, w.col_w)
    return prox_row_groups(out, cfg.step_gamma * cfg.lambda_kernel, w.row_w)


def update_weights(A: np.ndarray, delta: float) -> RowColWeights:
    if not delta > 0:
        raise ConfigurationError("delta must be > 0")
    A = np.asarray(A, dtype=float)
    return RowColWeights(
        row_w=1.0 / (np.sqrt(np.sum(A * A, axis=1)) + delta),
        col_w=1.0 / (np.sqrt(np.sum(A * A, axis=0)) + delta),
    )


def prune_dictionary_mk(A: np.ndarray, dictionary: Dictionary, tol: float) -> tuple[np.ndarray, Dictionary]:
    """Drop dictionary entries whose parameter column has norm ``<= tol``."""
    A = np.asarray(A, dtype=float)
    if A.shape[1] != len(dictionary):
        raise DimensionError("parameter matrix and dictionary are out of sync")
    dead = np.flatnonzero(np.sqrt(np.sum(A * A, axis=0)) <= tol)
    if not len(dead):
        return A, dictionary
    return np.delete(A, dead, axis=1), dictionary.remove(dead)


@dataclass(frozen=True, eq=False)
class MkSnapshot:
    """Frozen ``(A, dictionary, bank)`` triple that can be evaluated anywhere."""

    A: np.ndarray
    dictionary: Dictionary
    bank: KernelBank
    weights: RowColWeights | None = None

    def kernel_matrix(self, x) -> np.ndarray:
        return kernel_matrix_at(self.bank, self.dictionary, x)

    def predict(self, points) -> np.ndarray:
        pts = as_points(points)
        out = np.zeros(len(pts))
        if not len(self.dictionary):
            return out
        for lo in range(0, len(pts), 1024):
            d = pairwise_distances(pts[lo:lo + 1024], self.dictionary.positions)
            for m, k in enumerate(self.bank.kernels):
                out[lo:lo + 1024] += k.of_distance(d) @ self.A[m]
        return out


@dataclass
class MkDiagnostics:
    step: int
    residual_before: float
    residual_after: float
    dict_size: int
    zero_row_count: int
    zero_col_count: int


class MultiKernelEstimator:
    """Online multi-kernel estimator; one :meth:`observe` call per measurement."""

    name = "multikernel"

    def __init__(self, bank: KernelBank, cfg: MkConfig | None = None, dict_cfg: DictConfig | None = None):
        self.bank = bank
        self.cfg = cfg or MkConfig()
        self.dict_cfg = dict_cfg or DictConfig()
        self.dictionary = self.dict_cfg.empty(bank.reference_kernel())
        self.A = np.zeros((bank.size, 0))
        self.w = RowColWeights.ones(bank.size, 0)
        self.window: deque[Measurement] = deque(maxlen=self.cfg.window_q)
        self.last_time: int | None = None
        self.steps = 0

    def _kernel_matrices(self, positions: np.ndarray) -> np.ndarray:
        return bank_values(self.bank, pairwise_distances(positions, self.dictionary.positions))

    def _admit(self, m: Measurement) -> None:
        new_dict, admitted, evicted = admit_or_evict(self.dictionary, m)
        if not admitted:
            return
        A, col_w = self.A, self.w.col_w
        if evicted is not None:
            A = np.delete(A, evicted, axis=1)
            col_w = np.delete(col_w, evicted)
        self.dictionary = new_dict
        self.A = np.hstack([A, np.zeros((self.bank.size, 1))])
        # new columns start at the neutral weight until the next reweighting
        self.w = RowColWeights(self.w.row_w, np.append(col_w, 1.0))

    def observe(self, m: Measurement) -> MkDiagnostics:
        if self.last_time is not None and m.time_index <= self.last_time:
            raise OrderingError(f"measurement time {m.time_index} after {self.last_time}")
        self._admit(m)
        self.window.append(m)
        pos = as_points([p.position for p in self.window])
        Ks = self._kernel_matrices(pos)  # (M, q, I)
        K_new = Ks[:, -1, :]
        before = abs(m.path_loss - estimate_mk(self.A, K_new))
        w = None
        if self.cfg.weights is not None and len(self.window) < self.cfg.window_q:
            tail = np.asarray(self.cfg.weights[-len(self.window):])
            w = tail / tail.sum()
        else:
            w = _slab_weights(self.cfg.weights, len(self.window))
        # a kernel matrix that underflowed to zero carries no constraint on A; drop it and renormalize
        live = [j for j in range(len(self.window)) if np.any(Ks[:, j, :])]
        if live:
            sets = [MeasurementSet(Ks[:, j, :], self.window[j].path_loss, self.cfg.epsilon) for j in live]
            wl = np.asarray(w)[live]
            self.A = fb_update(self.A, sets, self.cfg, self.w, weights=wl / wl.sum())
        after = abs(m.path_loss - estimate_mk(self.A, K_new))
        zero_rows = int(np.sum(~self.A.any(axis=1)))
        zero_cols = int(np.sum(~self.A.any(axis=0)))
        self.steps += 1
        self.last_time = m.time_index
        if self.steps % self.cfg.reweight_every == 0:
            self.w = update_weights(self.A, self.cfg.reweight_delta)
            if self.cfg.prune_tol is not None:
                keep = np.sqrt(np.sum(self.A * self.A, axis=0)) > self.cfg.prune_tol
                self.A, self.dictionary = prune_dictionary_mk(self.A, self.dictionary, self.cfg.prune_tol)
                self.w = RowColWeights(self.w.row_w, self.w.col_w[keep])
        return MkDiagnostics(self.steps, before, after, len(self.dictionary), zero_rows, zero_cols)

    def snapshot(self) -> MkSnapshot:
        A = self.A.copy()
        A.setflags(write=False)
        return MkSnapshot(A, self.dictionary, self.bank, self.w)

    def predict(self, points) -> np.ndarray:
        return self.snapshot().predict(points)


def run_stream_mk(
    stream: Sequence[Measurement],
    bank: KernelBank,
    cfg: MkConfig | None = None,
    dict_cfg: DictConfig | None = None,
) -> tuple[MkSnapshot, list[MkDiagnostics]]:
    check_ordered(stream)
    est = MultiKernelEstimator(bank, cfg, dict_cfg)
    diags = [est.observe(m) for m in stream]
    return est.snapshot(), diags
