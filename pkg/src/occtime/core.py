"""Time grids, sample paths and the seeding contract."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid ``0, delta, ..., steps_n * delta = horizon_T``."""

    horizon_T: float
    steps_n: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon_T) and self.horizon_T > 0):
            raise DomainError(f"horizon_T must be positive, got {self.horizon_T}")
        if int(self.steps_n) != self.steps_n or self.steps_n < 1:
            raise DomainError(f"steps_n must be a positive integer, got {self.steps_n}")
        object.__setattr__(self, "horizon_T", float(self.horizon_T))
        object.__setattr__(self, "steps_n", int(self.steps_n))

    @property
    def delta(self) -> float:
        return self.horizon_T / self.steps_n

    def times(self) -> np.ndarray:
        """All ``steps_n + 1`` grid times, endpoints included."""
        return np.arange(self.steps_n + 1) * self.delta

    def refine(self, m: int) -> "TimeGrid":
        return TimeGrid(self.horizon_T, self.steps_n * int(m))


def make_grid(T: float, n: int) -> TimeGrid:
    return TimeGrid(T, n)


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SamplePath:
    """Path on a (fine) grid; ``values`` has ``steps_n + 1`` entries."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.shape != (self.grid.steps_n + 1,):
            raise DomainError(
                f"SamplePath needs {self.grid.steps_n + 1} values, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("SamplePath values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class ObservedPath:
    """Observations at ``k * delta``, ``k = 0, ..., steps_n - 1``."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.shape != (self.grid.steps_n,):
            raise DomainError(
                f"ObservedPath needs {self.grid.steps_n} values, got {values.shape}"
            )
        object.__setattr__(self, "values", values)


def refinement_factor(fine_steps: int, n: int) -> int:
    if n < 1 or fine_steps % n:
        raise DomainError(f"fine grid of {fine_steps} steps is not a multiple of n={n}")
    return fine_steps // n


def subsample(fine: SamplePath, n: int) -> ObservedPath:
    """Observe ``fine`` at the left endpoints of an ``n``-step coarse grid."""
    m = refinement_factor(fine.grid.steps_n, n)
    return ObservedPath(TimeGrid(fine.grid.horizon_T, n), fine.values[: n * m : m])


def subsample_values(values: np.ndarray, n: int) -> np.ndarray:
    """Array version of :func:`subsample` acting on the last axis.

    ``values`` holds ``N + 1`` fine-grid states per row; the result holds the
    ``n`` left-endpoint observations.
    """
    m = refinement_factor(values.shape[-1] - 1, n)
    return values[..., : n * m : m]


@dataclass(frozen=True)
class SeedSpec:
    """Seed of one replication.

    The stream is derived with :class:`numpy.random.SeedSequence` using
    ``master_seed`` as entropy and ``(replication_index,)`` as spawn key, so
    replication ``r`` draws the same numbers whether it runs alone, in a batch,
    or on another thread.
    """

    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if int(self.replication_index) < 0:
            raise DomainError("replication_index must be non-negative")

    def generator(self) -> np.random.Generator:
        return replication_rng(self.master_seed, self.replication_index)


def replication_rng(master_seed: int, replication_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication_index),))
    return np.random.Generator(np.random.PCG64(ss))
