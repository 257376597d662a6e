"""Reproducing kernels, Gram / kernel matrices and the measurement dictionary.

Positions are plain ``(x, y)`` pairs in meters. Everything here is an immutable
value; "updates" return new objects.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyDictionaryError,
    InvalidInputError,
    OrderingError,
)

FAMILIES = ("gaussian", "laplacian")


class Position(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Measurement:
    position: Position
    path_loss: float
    time_index: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.position)):
            raise InvalidInputError(f"non-finite position {self.position!r}")
        if not np.isfinite(self.path_loss) or self.path_loss < 0:
            raise InvalidInputError(f"path loss must be finite and >= 0, got {self.path_loss}")


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    bandwidth: float = 100.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigurationError(f"bandwidth must be > 0, got {self.bandwidth}")

    def of_distance(self, d):
        """Kernel profile as a function of Euclidean distance (array-friendly)."""
        if self.family == "gaussian":
            return np.exp(-np.square(d) / (2.0 * self.bandwidth**2))
        return np.exp(-np.asarray(d) / self.bandwidth)


@dataclass(frozen=True)
class KernelBank:
    kernels: tuple[KernelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if len(self.kernels) < 1:
            raise ConfigurationError("kernel bank needs at least one kernel")
        bws = [k.bandwidth for k in self.kernels]
        if len(set(bws)) != len(bws):
            raise ConfigurationError("kernel bandwidths must be pairwise distinct")

    @classmethod
    def geometric(cls, n_kernels: int, base_bandwidth: float, family: str = "gaussian") -> "KernelBank":
        """Bandwidth ladder ``base * 2**m`` for ``m = 0..n_kernels-1``."""
        if n_kernels < 1:
            raise ConfigurationError("n_kernels must be >= 1")
        return cls(tuple(KernelSpec(family, base_bandwidth * 2.0**m) for m in range(n_kernels)))

    @property
    def size(self) -> int:
        return len(self.kernels)

    def reference_kernel(self) -> KernelSpec:
        """The median-bandwidth kernel (lower median for even sizes)."""
        ordered = sorted(self.kernels, key=lambda k: k.bandwidth)
        return ordered[(len(ordered) - 1) // 2]


def as_points(points) -> np.ndarray:
    """Coerce a position or a sequence of positions to a finite ``(N, 2)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError(f"expected (N, 2) positions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("positions must be finite")
    return arr


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # direct differences rather than the |a|^2+|b|^2-2ab expansion: exact symmetry, no negative round-off
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)


def eval_kernel(spec: KernelSpec, a, b) -> float:
    pa = as_points(a)[0]
    pb = as_points(b)[0]
    dx = pa[0] - pb[0]
    dy = pa[1] - pb[1]
    return float(spec.of_distance(np.sqrt(dx * dx + dy * dy)))


def kernel_values(spec: KernelSpec, points, centers) -> np.ndarray:
    """Matrix ``[k(points[n], centers[i])]`` of shape ``(N, I)``."""
    return spec.of_distance(pairwise_distances(as_points(points), as_points(centers)))


def gram_matrix(spec: KernelSpec, positions) -> np.ndarray:
    pts = as_points(positions)
    if len(pts) == 0:
        raise InvalidInputError("gram_matrix needs at least one position")
    return kernel_values(spec, pts, pts)


def bank_values(bank: KernelBank, distances: np.ndarray) -> np.ndarray:
    """Stack the bank's profiles over a distance array: result shape ``(M,) + distances.shape``."""
    return np.stack([k.of_distance(distances) for k in bank.kernels])


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Retained measurements used as expansion centers, oldest first.

    ``positions`` is ``(I, 2)``; ``values`` and ``times`` are length ``I``.
    """

    max_size: int = 400
    coherence_threshold: float = 0.9
    reference_kernel: KernelSpec = field(default_factory=KernelSpec)
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    times: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if self.max_size < 1:
            raise ConfigurationError("max_size must be >= 1")
        if not 0.0 < self.coherence_threshold < 1.0:
            raise ConfigurationError("coherence_threshold must lie in (0, 1)")
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        vals = np.array(self.values, dtype=float).reshape(-1)
        times = np.array(self.times, dtype=np.int64).reshape(-1)
        if not len(pos) == len(vals) == len(times):
            raise InvalidInputError("dictionary arrays have inconsistent lengths")
        if len(pos) > self.max_size:
            raise ConfigurationError("dictionary exceeds max_size")
        if len(np.unique(times)) != len(times):
            raise InvalidInputError("dictionary time indices must be unique")
        for arr in (pos, vals, times):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "times", times)

    @classmethod
    def from_measurements(cls, measurements: Iterable[Measurement], **kwargs) -> "Dictionary":
        ms = list(measurements)
        return cls(
            positions=np.array([m.position for m in ms], dtype=float).reshape(-1, 2),
            values=[m.path_loss for m in ms],
            times=[m.time_index for m in ms],
            **kwargs,
        )

    def __len__(self) -> int:
        return len(self.times)

    @property
    def entries(self) -> list[Measurement]:
        return [
            Measurement(Position(float(p[0]), float(p[1])), float(v), int(t))
            for p, v, t in zip(self.positions, self.values, self.times)
        ]

    @property
    def last_time(self) -> int | None:
        return int(self.times.max()) if len(self) else None

    def _with(self, positions, values, times) -> "Dictionary":
        return Dictionary(
            max_size=self.max_size,
            coherence_threshold=self.coherence_threshold,
            reference_kernel=self.reference_kernel,
            positions=positions,
            values=values,
            times=times,
        )

    def remove(self, indices: Sequence[int]) -> "Dictionary":
        keep = np.ones(len(self), dtype=bool)
        keep[list(indices)] = False
        return self._with(self.positions[keep], self.values[keep], self.times[keep])

    def index_of(self, position) -> int | None:
        """Index of an entry located exactly at ``position``, if any."""
        if not len(self):
            return None
        hit = np.flatnonzero((self.positions[:, 0] == position[0]) & (self.positions[:, 1] == position[1]))
        return int(hit[0]) if len(hit) else None


def coherence(dictionary: Dictionary, candidate) -> float:
    if not len(dictionary):
        return 0.0
    return float(kernel_values(dictionary.reference_kernel, candidate, dictionary.positions).max())


def admit_or_evict(dictionary: Dictionary, m: Measurement) -> tuple[Dictionary, bool, int | None]:
    """Try to add ``m`` to the dictionary.

    ``m`` is admitted iff its coherence with the current entries is at most the
    threshold. A full dictionary evicts its oldest entry to make room. Returns
    the new dictionary, the admission flag and the index (in the *old*
    dictionary) of the evicted entry, or ``None``.
    """
    last = dictionary.last_time
    if last is not None and m.time_index <= last:
        raise OrderingError(f"measurement time {m.time_index} is not newer than {last}")
    if coherence(dictionary, m.position) > dictionary.coherence_threshold:
        return dictionary, False, None
    positions, values, times = dictionary.positions, dictionary.values, dictionary.times
    evicted = None
    if len(dictionary) >= dictionary.max_size:
        evicted = int(np.argmin(times))
        keep = np.arange(len(dictionary)) != evicted
        positions, values, times = positions[keep], values[keep], times[keep]
    new = dictionary._with(
        np.vstack([positions, np.asarray(m.position, dtype=float)[None, :]]),
        np.append(values, m.path_loss),
        np.append(times, m.time_index),
    )
    return new, True, evicted


def kernel_matrix_at(bank: KernelBank, dictionary: Dictionary, x) -> np.ndarray:
    """Kernel matrix at ``x``: row ``m`` is kernel ``m``, column ``i`` is dictionary entry ``i``."""
    if not len(dictionary):
        raise EmptyDictionaryError("kernel matrix of an empty dictionary")
    d = pairwise_distances(as_points(x), dictionary.positions)[0]
    return bank_values(bank, d)


@dataclass(frozen=True)
class DictConfig:
    """Dictionary parameters; ``reference_kernel=None`` lets the estimator pick one."""

    max_size: int = 400
    coherence_threshold: float = 0.9
    reference_kernel: KernelSpec | None = None

    def empty(self, default_kernel: KernelSpec) -> Dictionary:
        return Dictionary(
            max_size=self.max_size,
            coherence_threshold=self.coherence_threshold,
            reference_kernel=self.reference_kernel or default_kernel,
        )
