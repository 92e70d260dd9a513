"""Occupation-time functionals, their Riemann-sum estimator and exact truths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import DomainError, ObservedPath, SamplePath, SeedSpec, TimeGrid, replication_rng
from .funcspace import FunctionSpec
from .processes import (BrownianMotion, InitialLaw, OuProcess, _ar1, bm_interval_moments,
                        ou_interval_moments)

TRUTH_KINDS = ("fine-grid", "exact-gaussian", "exact-jump")
FINE_RULES = ("left", "trapezoid")


class UnsupportedCombination(DomainError):
    """Requested truth is not available for this process or function."""


@dataclass(frozen=True)
class FunctionalPair:
    gamma_true: float
    gamma_hat: float
    truth_kind: str

    def __post_init__(self):
        if self.truth_kind not in TRUTH_KINDS:
            raise DomainError(f"unknown truth kind {self.truth_kind!r}")
        if not (math.isfinite(self.gamma_true) and math.isfinite(self.gamma_hat)):
            raise DomainError("functional values must be finite")

    @property
    def error(self) -> float:
        return self.gamma_true - self.gamma_hat


def riemann_sums(obs_values: np.ndarray, f: FunctionSpec, delta: float) -> np.ndarray:
    """Left-endpoint sums along the last axis of ``(..., n)`` observations."""
    return np.sum(f(obs_values), axis=-1) * delta


def fine_sums(values: np.ndarray, f: FunctionSpec, delta: float, rule: str = "trapezoid"):
    """Quadrature of ``f(X)`` along the last axis of ``(..., N+1)`` fine-grid states.

    ``rule="left"`` drops the terminal state.  ``rule="trapezoid"`` averages the
    endpoints, whose pathwise error is unbiased at first order in the step.
    """
    fx = f(values)
    if rule == "left":
        return np.sum(fx[..., :-1], axis=-1) * delta
    if rule == "trapezoid":
        return integrate.trapezoid(fx, dx=delta, axis=-1)
    raise DomainError(f"unknown fine rule {rule!r}")


def gamma_riemann(obs: ObservedPath, f: FunctionSpec) -> float:
    """``sum_k f(X_{(k-1) delta}) delta`` over the ``n`` observations."""
    return float(riemann_sums(obs.values, f, obs.grid.delta))


def gamma_fine(path: SamplePath, f: FunctionSpec, rule: str = "trapezoid") -> float:
    """Ground-truth proxy for ``int_0^T f(X_r) dr`` from a fine sample path."""
    return float(fine_sums(path.values, f, path.grid.delta, rule))


def ergodic_average(obs: ObservedPath, f: FunctionSpec) -> float:
    return gamma_riemann(obs, f) / obs.grid.horizon_T


# ---------------------------------------------------------------------------
# exact joint simulation of (X_{k delta}, int X dr) for Gaussian processes

def _interval_law(process, delta):
    if isinstance(process, OuProcess):
        return ou_interval_moments(delta)
    if isinstance(process, BrownianMotion):
        return bm_interval_moments(delta)
    raise UnsupportedCombination(
        f"exact integral simulation needs OU or Brownian motion, got {type(process).__name__}")


def gaussian_paths_with_integral(process, grid: TimeGrid, init: InitialLaw | None,
                                 master_seed: int, reps: int, start: int = 0):
    """Grid states ``(reps, n+1)`` and exact ``int_0^T X_r dr`` for OU or BM.

    Per interval the pair (endpoint, integral increment) is drawn from its
    bivariate Gaussian law given the left endpoint.
    """
    decay, drift_int, var_x, cov, var_int = _interval_law(process, grid.delta)
    if init is None:
        init = InitialLaw.at(0.0) if isinstance(process, BrownianMotion) else InitialLaw.stationary()
    init = process.check_init(init)
    n = grid.steps_n
    sx = math.sqrt(var_x)
    if sx > 0:
        load = cov / sx
        resid = math.sqrt(max(var_int - load * load, 0.0))
    else:
        load, resid = 0.0, 0.0
    x0 = np.empty(reps)
    z = np.empty((reps, n, 2))
    for i in range(reps):
        rng = replication_rng(master_seed, start + i)
        x0[i] = init.sample(rng, process)
        z[i] = rng.standard_normal((n, 2))
    paths = _ar1(x0, decay, sx * z[..., 0])
    noise_int = load * z[..., 0] + resid * z[..., 1]
    exact = drift_int * paths[:, :-1].sum(axis=1) + noise_int.sum(axis=1)
    return paths, exact


def simulate_ou_with_exact_integral(grid: TimeGrid, init: InitialLaw | None, seed: SeedSpec,
                                    process=None) -> tuple[ObservedPath, float]:
    """Coarse observations and the exact ``Gamma_T(identity)`` for OU (or BM)."""
    process = OuProcess() if process is None else process
    paths, exact = gaussian_paths_with_integral(process, grid, init, seed.master_seed, 1,
                                                seed.replication_index)
    return ObservedPath(grid, paths[0, :-1]), float(exact[0])


def exact_gaussian_pair(process, f: FunctionSpec, grid: TimeGrid, init, seed: SeedSpec):
    """:class:`FunctionalPair` with exact truth for affine ``f``."""
    if f.affine is None:
        raise UnsupportedCombination("exact Gaussian truth needs an affine function")
    obs, integral = simulate_ou_with_exact_integral(grid, init, seed, process)
    a, b = f.affine
    return FunctionalPair(a * integral + b * grid.horizon_T, gamma_riemann(obs, f),
                          "exact-gaussian")
