"""Path simulators for the stationary processes under study.

Every simulator draws replication ``r`` from its own stream
``replication_rng(master_seed, r)`` in a fixed order (initial state first,
then the driving noise), so batched and single-path calls return identical
values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, signal

from ._expfun import phi
from .core import DomainError, SamplePath, SeedSpec, TimeGrid, replication_rng


class NonIntegrableError(ValueError):
    """The speed density (or a normalizer) is not integrable on the range."""


# ---------------------------------------------------------------------------
# initial laws

@dataclass(frozen=True, eq=False)
class InitialLaw:
    """Law of ``X_0``.

    ``kind`` is ``stationary`` (draw from the process's invariant law),
    ``density`` (Lebesgue density on ``support``), ``point`` (a point mass at
    ``point``) or ``discrete`` (probabilities ``probs`` over jump states).
    """

    kind: str = "stationary"
    density: Callable | None = None
    support: tuple | None = None
    point: float | None = None
    probs: tuple | None = None
    table_points: int = 4096

    def __post_init__(self):
        if self.kind not in ("stationary", "density", "point", "discrete"):
            raise DomainError(f"unknown initial law kind {self.kind!r}")
        if self.kind == "density":
            if self.density is None or self.support is None:
                raise DomainError("density initial law needs density and support")
            lo, hi = self.support
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise DomainError("density support must be a finite interval")
            mass, _ = integrate.quad(lambda x: float(self.density(x)), lo, hi, limit=200)
            if abs(mass - 1.0) > 1e-6:
                raise DomainError(f"initial density integrates to {mass}, not 1")
        if self.kind == "point" and self.point is None:
            raise DomainError("point initial law needs a point")
        if self.kind == "discrete":
            p = np.asarray(self.probs, dtype=float)
            if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                raise DomainError("discrete initial law needs a probability vector")

    @classmethod
    def stationary(cls):
        return cls("stationary")

    @classmethod
    def from_density(cls, density, support):
        return cls("density", density=density, support=tuple(float(s) for s in support))

    @classmethod
    def uniform(cls, lo, hi):
        lo, hi = float(lo), float(hi)
        width = hi - lo
        return cls.from_density(lambda x: np.where((x >= lo) & (x <= hi), 1.0 / width, 0.0),
                                (lo, hi))

    @classmethod
    def gaussian(cls, mean=0.0, sd=1.0, width=10.0):
        dens = lambda x: np.exp(-0.5 * ((np.asarray(x) - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        lo, hi = mean - width * sd, mean + width * sd
        return cls.from_density(dens, (lo, hi))

    @classmethod
    def at(cls, x):
        return cls("point", point=float(x))

    @classmethod
    def discrete_law(cls, probs):
        return cls("discrete", probs=tuple(float(p) for p in probs))

    @cached_property
    def _table(self):
        lo, hi = self.support
        x = np.linspace(lo, hi, self.table_points)
        return x, _cdf_table(x, np.asarray(self.density(x), dtype=float))

    def sample(self, rng: np.random.Generator, process=None) -> float:
        if self.kind == "stationary":
            if process is None:
                raise DomainError("stationary initial law needs a process")
            return process.sample_stationary(rng)
        if self.kind == "point":
            return float(self.point)
        if self.kind == "discrete":
            return float(_draw_discrete(rng, np.cumsum(self.probs)))
        x, cdf = self._table
        return float(np.interp(rng.random(), cdf, x))

    def radon_nikodym_sup(self, process, points: int = 20001) -> float:
        """``sup d(eta)/d(mu)`` against the process's invariant density."""
        if self.kind == "stationary":
            return 1.0
        if self.kind != "density":
            raise DomainError("density ratio needs a density initial law")
        lo, hi = self.support
        x = np.linspace(lo, hi, points)
        mu = np.asarray(process.stationary_density(x), dtype=float)
        eta = np.asarray(self.density(x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(eta > 0, eta / mu, 0.0)
        return float(np.max(ratio))


def _cdf_table(x, dens):
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return cdf


def _draw_discrete(rng, cum):
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), len(cum) - 1)


# ---------------------------------------------------------------------------
# folding map

def fold(x, M: float):
    """Fold the real line onto ``[-M, M]`` with period ``4M``.

    Identity on ``[-M, M)``, reflected on ``[M, 3M)``; 1-Lipschitz.
    """
    if not M > 0:
        raise DomainError("M must be positive")
    x = np.asarray(x, dtype=float)
    y = np.mod(x + M, 4 * M)
    out = np.where(y < 2 * M, y - M, 3 * M - y)
    # keep the identity branch exact instead of round-tripping through mod
    out = np.where(np.abs(x) <= M, x, out)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Gaussian interval moments

def ou_interval_moments(delta: float):
    """Noise covariance of ``(X_delta, int_0^delta X dr)`` for the OU process.

    Returns ``(decay, drift_int, var_x, cov, var_int)``: given ``X_0 = x`` the
    means are ``decay * x`` and ``drift_int * x``.
    """
    d = float(delta)
    decay = math.exp(-d)
    drift_int = -math.expm1(-d)
    var_x = -math.expm1(-2 * d)
    cov = math.expm1(-d) ** 2
    var_int = float(4 * (-d) ** 3 * (phi(3, -d) - 2 * phi(3, -2 * d)))
    return decay, drift_int, var_x, cov, var_int


def bm_interval_moments(delta: float):
    d = float(delta)
    return 1.0, d, d, d * d / 2, d**3 / 3


# ---------------------------------------------------------------------------
# processes

class _Process:
    """Shared batching logic; subclasses provide ``_evolve``."""

    name = "process"
    default_init = "stationary"

    def sample_stationary(self, rng):
        raise DomainError(f"{self.name} has no stationary law")

    def stationary_density(self, x):
        raise DomainError(f"{self.name} has no stationary density")

    def stationary_mean(self, f) -> float:
        raise DomainError(f"{self.name} has no stationary mean")

    def check_init(self, init: InitialLaw):
        return init

    def sample_paths(self, grid: TimeGrid, init: InitialLaw | None, master_seed: int,
                     reps: int, start: int = 0) -> np.ndarray:
        """States at all grid times for replications ``start .. start+reps-1``."""
        init = self.check_init(init if init is not None else InitialLaw(self.default_init))
        x0 = np.empty(reps)
        noise = np.empty((reps, grid.steps_n))
        for i in range(reps):
            rng = replication_rng(master_seed, start + i)
            x0[i] = init.sample(rng, self)
            noise[i] = rng.standard_normal(grid.steps_n)
        return self._evolve(grid, x0, noise)

    def simulate(self, grid: TimeGrid, init: InitialLaw | None, seed: SeedSpec) -> SamplePath:
        vals = self.sample_paths(grid, init, seed.master_seed, 1, seed.replication_index)[0]
        return SamplePath(grid, vals)


@dataclass(frozen=True)
class OuProcess(_Process):
    """``dX = -X dr + sqrt(2) dW`` with invariant law N(0, 1), simulated exactly."""

    name = "ou"

    def sample_stationary(self, rng):
        return float(rng.standard_normal())

    def stationary_density(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

    def stationary_mean(self, f) -> float:
        from .funcspace import composite_nodes
        x, w = composite_nodes(-14.0, 14.0, f.breakpoints, 0.05, 16)
        return float(np.sum(w * f(x) * self.stationary_density(x)))

    @staticmethod
    def transition(delta: float):
        """Mean factor and variance of ``X_{t+delta}`` given ``X_t``."""
        return math.exp(-delta), -math.expm1(-2 * delta)

    def _evolve(self, grid, x0, noise):
        a, var = self.transition(grid.delta)
        return _ar1(x0, a, math.sqrt(var) * noise)


def _ar1(x0, a, shocks):
    """``y_0 = x0``, ``y_{k+1} = a y_k + shocks_k`` along the last axis."""
    a = float(a)
    if a == 1.0:
        body = x0[:, None] + np.cumsum(shocks, axis=1)
    else:
        body, _ = signal.lfilter([1.0], [1.0, -a], shocks, axis=1, zi=(a * x0)[:, None])
    return np.concatenate([x0[:, None], body], axis=1)


@dataclass(frozen=True)
class BrownianMotion(_Process):
    """``X_r = X_0 + B_r``; not stationary, so the initial law must be given."""

    name = "bm"
    default_init = "point"

    def check_init(self, init):
        if init is None or init.kind == "stationary":
            raise DomainError("Brownian motion needs a point mass or a compactly supported density")
        if init.kind == "discrete":
            raise DomainError("Brownian motion needs a real-valued initial law")
        return init

    def sample_paths(self, grid, init=None, master_seed=0, reps=1, start=0):
        return super().sample_paths(grid, InitialLaw.at(0.0) if init is None else init,
                                    master_seed, reps, start)

    def _evolve(self, grid, x0, noise):
        return _ar1(x0, 1.0, math.sqrt(grid.delta) * noise)


@dataclass(frozen=True)
class ReflectedBrownianMotion(_Process):
    """Brownian motion reflected at ``-M`` and ``M``, obtained by folding."""

    M: float = 1.0
    name = "reflected-bm"

    def __post_init__(self):
        if not self.M > 0:
            raise DomainError("M must be positive")

    def check_init(self, init):
        M = self.M
        if init.kind == "point" and abs(init.point) > M:
            raise DomainError(f"initial point {init.point} outside [-{M}, {M}]")
        if init.kind == "density" and (init.support[0] < -M or init.support[1] > M):
            raise DomainError(f"initial density support {init.support} outside [-{M}, {M}]")
        if init.kind == "discrete":
            raise DomainError("reflected BM needs a real-valued initial law")
        return init

    def sample_stationary(self, rng):
        return float(rng.uniform(-self.M, self.M))

    def stationary_density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= self.M, 0.5 / self.M, 0.0)

    def stationary_mean(self, f) -> float:
        from .funcspace import composite_nodes
        x, w = composite_nodes(-self.M, self.M, f.breakpoints, 0.05, 16)
        return float(np.sum(w * f(x)) / (2 * self.M))

    def _evolve(self, grid, x0, noise):
        return fold(_ar1(x0, 1.0, math.sqrt(grid.delta) * noise), self.M)


@dataclass(frozen=True, eq=False)
class JumpProcess(_Process):
    """``X_r = Y_{N_r}``: embedded chain ``Y`` with kernel ``P``, Poisson clock ``N``.

    States are ``0, ..., S-1``.  ``stationary_mu`` defaults to the normalized
    left Perron eigenvector of ``P``.
    """

    rate_lambda: float
    transition_P: np.ndarray
    stationary_mu: np.ndarray | None = None
    name = "jump"

    def __post_init__(self):
        P = np.array(self.transition_P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DomainError("transition_P must be square")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise DomainError("transition_P must be row-stochastic")
        if not self.rate_lambda >= 0:
            raise DomainError("rate_lambda must be non-negative")
        mu = self.stationary_mu
        if mu is None:
            w, v = np.linalg.eig(P.T)
            k = int(np.argmin(np.abs(w - 1)))
            mu = np.abs(np.real(v[:, k]))
            mu = mu / mu.sum()
        mu = np.array(mu, dtype=float)
        if mu.shape != (P.shape[0],) or np.any(mu < 0) or abs(mu.sum() - 1) > 1e-12:
            raise DomainError("stationary_mu must be a probability vector")
        if np.max(np.abs(mu @ P - mu)) > 1e-10:
            raise DomainError("stationary_mu is not invariant for transition_P")
        P.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "transition_P", P)
        object.__setattr__(self, "stationary_mu", mu)
        object.__setattr__(self, "_cum", np.cumsum(P, axis=1))

    @property
    def n_states(self) -> int:
        return self.transition_P.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.transition_P, self.transition_P.T, atol=1e-14, rtol=0))

    @property
    def is_reversible(self) -> bool:
        """Detailed balance ``mu_x P_xy = mu_y P_yx``, i.e. ``L`` self-adjoint in ``L^2(mu)``."""
        F = self.stationary_mu[:, None] * self.transition_P
        return bool(np.allclose(F, F.T, atol=1e-13, rtol=0))

    @property
    def generator(self) -> np.ndarray:
        return self.rate_lambda * (self.transition_P - np.eye(self.n_states))

    def sample_stationary(self, rng):
        return float(_draw_discrete(rng, np.cumsum(self.stationary_mu)))

    def stationary_mean(self, f) -> float:
        return float(self.stationary_mu @ f(np.arange(self.n_states)))

    def check_init(self, init):
        if init.kind == "density":
            raise DomainError("jump processes need a discrete initial law")
        if init.kind == "point" and init.point not in range(self.n_states):
            raise DomainError(f"initial state {init.point} is not a state")
        if init.kind == "discrete" and len(init.probs) != self.n_states:
            raise DomainError("initial probabilities do not match the state count")
        return init

    def events(self, rng, T: float, init: InitialLaw):
        """Jump times in ``(0, T)`` and the states held from each time on.

        ``states[0]`` is ``X_0``; ``states[i]`` is the state after the i-th event.
        """
        x = int(init.sample(rng, self))
        count = int(rng.poisson(self.rate_lambda * T)) if self.rate_lambda > 0 else 0
        times = np.sort(rng.uniform(0.0, T, count))
        u = rng.random(count)
        states = np.empty(count + 1, dtype=np.intp)
        states[0] = x
        cum = self._cum
        for i in range(count):
            x = min(int(np.searchsorted(cum[x], u[i], side="right")), self.n_states - 1)
            states[i + 1] = x
        return times, states

    def sample_paths_with_integral(self, grid, init, master_seed, reps, f, start=0):
        """Grid states plus the exact occupation integral ``int_0^T f(X_r) dr``.

        Grid times are right-continuous: a jump at ``k * delta`` is already
        reflected in the state recorded there.
        """
        init = self.check_init(init if init is not None else InitialLaw.stationary())
        t_grid = grid.times()
        T = grid.horizon_T
        fvals = f(np.arange(self.n_states))
        paths = np.empty((reps, grid.steps_n + 1))
        exact = np.empty(reps)
        for i in range(reps):
            rng = replication_rng(master_seed, start + i)
            times, states = self.events(rng, T, init)
            paths[i] = states[np.searchsorted(times, t_grid, side="right")]
            holding = np.diff(np.concatenate([[0.0], times, [T]]))
            exact[i] = float(np.dot(fvals[states], holding))
        return paths, exact

    def sample_paths(self, grid, init=None, master_seed=0, reps=1, start=0):
        # any f works for the integral; identity keeps the code path shared
        from .funcspace import state_vector
        wrap = state_vector(np.zeros(self.n_states))
        paths, _ = self.sample_paths_with_integral(grid, init, master_seed, reps, wrap, start)
        return paths


@dataclass(frozen=True, eq=False)
class ScalarDiffusion(_Process):
    """``dX = b(X) dr + sigma(X) dW`` on ``[lower, upper]``, Euler-Maruyama.

    Finite boundaries reflect: an Euler step leaving the interval is mirrored
    back inside.  ``sampling_range`` bounds the inverse-CDF table used for a
    stationary start when a boundary is infinite.
    """

    drift: Callable
    vol: Callable
    lower: float = -math.inf
    upper: float = math.inf
    sampling_range: tuple = (-10.0, 10.0)
    table_points: int = 4096
    name = "euler-diffusion"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise DomainError("lower boundary must be below upper boundary")
        lo, hi = self.table_range
        xs = np.linspace(lo, hi, 1001)
        sig = np.asarray(self.vol(xs), dtype=float) * np.ones_like(xs)
        if np.any(~np.isfinite(sig)) or np.min(sig) <= 0:
            raise DomainError("volatility must be strictly positive on the state range")

    @property
    def table_range(self):
        lo = self.lower if np.isfinite(self.lower) else max(self.sampling_range[0], self.lower)
        hi = self.upper if np.isfinite(self.upper) else min(self.sampling_range[1], self.upper)
        return float(lo), float(hi)

    @cached_property
    def _stationary_table(self):
        lo, hi = self.table_range
        x = np.linspace(lo, hi, self.table_points)
        logm = _log_speed_on_grid(self.drift, self.vol, x)
        dens = np.exp(logm - np.max(logm))
        cdf = _cdf_table(x, dens)
        norm = np.sum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))
        return x, cdf, dens / norm

    def sample_stationary(self, rng):
        x, cdf, _ = self._stationary_table
        return float(np.interp(rng.random(), cdf, x))

    def stationary_density(self, x):
        xs, _, dens = self._stationary_table
        return np.interp(x, xs, dens, left=0.0, right=0.0)

    def stationary_mean(self, f) -> float:
        from .funcspace import composite_nodes
        lo, hi = self.table_range
        x, w = composite_nodes(lo, hi, f.breakpoints, 0.05, 16)
        return float(np.sum(w * f(x) * self.stationary_density(x)))

    def _reflect(self, x):
        lo, hi = self.lower, self.upper
        if np.isfinite(lo) and np.isfinite(hi):
            half = 0.5 * (hi - lo)
            return fold(x - (lo + half), half) + lo + half
        if np.isfinite(lo):
            return np.where(x < lo, 2 * lo - x, x)
        if np.isfinite(hi):
            return np.where(x > hi, 2 * hi - x, x)
        return x

    def _evolve(self, grid, x0, noise):
        dt = grid.delta
        sq = math.sqrt(dt)
        out = np.empty((x0.size, grid.steps_n + 1))
        x = x0.copy()
        out[:, 0] = x
        for k in range(grid.steps_n):
            x = x + self.drift(x) * dt + self.vol(x) * sq * noise[:, k]
            x = self._reflect(x)
            out[:, k + 1] = x
        return out


@dataclass(frozen=True, eq=False)
class ReflectedDiffusion(ScalarDiffusion):
    """Scalar diffusion on a compact interval with reflecting boundaries."""

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise DomainError("reflected diffusions need finite boundaries")
        super().__post_init__()


# ---------------------------------------------------------------------------
# module-level operations

def simulate_ou(grid: TimeGrid, init: InitialLaw | None, seed: SeedSpec) -> SamplePath:
    return OuProcess().simulate(grid, init, seed)


def simulate_bm(grid: TimeGrid, init: InitialLaw | None, seed: SeedSpec) -> SamplePath:
    return BrownianMotion().simulate(grid, InitialLaw.at(0.0) if init is None else init, seed)


def simulate_reflected_bm(grid: TimeGrid, M: float, init: InitialLaw | None,
                          seed: SeedSpec) -> SamplePath:
    return ReflectedBrownianMotion(M).simulate(grid, init, seed)


def simulate_jump(grid: TimeGrid, jp: JumpProcess, init: InitialLaw | None,
                  seed: SeedSpec) -> SamplePath:
    return jp.simulate(grid, init, seed)


def simulate_scalar_diffusion(grid: TimeGrid, b: Callable, sigma: Callable, bounds,
                              init: InitialLaw | None, seed: SeedSpec) -> SamplePath:
    proc = ScalarDiffusion(b, sigma, float(bounds[0]), float(bounds[1]))
    return proc.simulate(grid, init, seed)


def _log_speed_on_grid(b, sigma, x):
    """``log m`` on a sorted grid, anchored at ``x[0]``; adaptive quad per cell."""
    g = lambda y: 2.0 * float(b(y)) / float(sigma(y)) ** 2
    inc = np.array([integrate.quad(g, x[i], x[i + 1])[0] for i in range(x.size - 1)])
    inner = np.concatenate([[0.0], np.cumsum(inc)])
    return inner - 2.0 * np.log(np.abs(np.asarray(sigma(x), dtype=float) * np.ones_like(x)))


def speed_density(b: Callable, sigma: Callable, x0: float = 0.0) -> Callable:
    """Unnormalized speed density ``sigma(x)^-2 exp(int_x0^x 2b/sigma^2 dy)``."""
    x0 = float(x0)
    g = lambda y: 2.0 * float(b(y)) / float(sigma(y)) ** 2

    def m(x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        for i, xi in enumerate(xs):
            inner, _ = integrate.quad(g, x0, xi, limit=200)
            out[i] = math.exp(inner) / float(sigma(xi)) ** 2
        return out[0] if np.ndim(x) == 0 else out.reshape(np.shape(x))

    return m


def speed_normalizer(m: Callable, lower: float, upper: float) -> float:
    """``C0`` with ``C0 * int_lower^upper m = 1``.

    Raises :class:`NonIntegrableError` when the integral diverges.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            mass, err = integrate.quad(lambda x: float(m(x)), lower, upper, limit=200)
        except (integrate.IntegrationWarning, OverflowError) as exc:
            raise NonIntegrableError(f"speed density not integrable on [{lower}, {upper}]") from exc
    if not np.isfinite(mass) or mass <= 0 or err > 1e-6 * mass:
        raise NonIntegrableError(f"speed density not integrable on [{lower}, {upper}]")
    # quad can return a finite value for a constant on an infinite range
    if not (np.isfinite(lower) and np.isfinite(upper)):
        probe = [x for x in (lower, upper) if not np.isfinite(x)]
        for end in probe:
            far = math.copysign(1e6, end)
            try:
                tail = abs(float(m(far))) * 1e6
            except OverflowError:
                tail = math.inf
            if tail > 1e-6 * mass:
                raise NonIntegrableError("speed density does not decay at an infinite boundary")
    return 1.0 / mass


def stationary_speed_density(b: Callable, sigma: Callable, lower: float, upper: float,
                             x0: float = 0.0) -> Callable:
    m = speed_density(b, sigma, x0)
    c0 = speed_normalizer(m, lower, upper)
    return lambda x: c0 * m(x)
