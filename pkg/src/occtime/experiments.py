"""Monte Carlo error estimation, rate sweeps and bound checks.

Replications are independent: replication ``i`` always draws from the stream
``replication_rng(master_seed, i)``, so batching, thread count and the set of
grid sizes in a sweep never change the underlying random drivers.  Sweeps over
``n`` simulate once on the finest grid and subsample (common random numbers).
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np
from scipy import integrate, stats

from .core import DomainError, SeedSpec, TimeGrid, make_grid
from .funcspace import FunctionSpec
from .functionals import (UnsupportedCombination, fine_sums, gaussian_paths_with_integral,
                          riemann_sums)
from .processes import BrownianMotion, InitialLaw, JumpProcess, OuProcess
from .spectral import psi_diag, psi_ergodic, psi_offdiag

BOUND_CONSTANT = 8.0
DEFAULT_REFINEMENT = 64
_BATCH_BUDGET = 2**23  # floats per simulated block


@dataclass(frozen=True)
class ErrorEstimate:
    """Monte Carlo estimate of ``E|Gamma_T(f) - Gamma_hat_{T,n}(f)|^2``."""

    mean_sq: float
    stderr: float
    reps: int
    config_digest: str
    truth_kind: str = "fine-grid"

    @property
    def rms(self) -> float:
        return math.sqrt(self.mean_sq)

    @property
    def rms_stderr(self) -> float:
        # delta method
        return self.stderr / (2 * self.rms) if self.mean_sq > 0 else 0.0


@dataclass(frozen=True)
class RateFit:
    """Log-log least-squares fit of RMS error against ``delta`` (or ``T``).

    ``points`` holds ``(abscissa, rms, rms_stderr)`` for the fitted points;
    ``excluded`` lists abscissae dropped because their error was exactly 0.
    ``slope`` is NaN when fewer than two points remain.
    """

    points: tuple
    slope: float
    intercept: float
    r_squared: float
    abscissa: str = "delta"
    excluded: tuple = ()
    estimates: tuple = field(default=(), repr=False)

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.slope)

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)


@dataclass(frozen=True)
class BoundReport:
    ratios: tuple
    bound_values: tuple
    max_ratio: float
    C: float
    passed: bool


# ---------------------------------------------------------------------------
# bookkeeping

def _plain(value):
    if is_dataclass(value) and not isinstance(value, type):
        return {"type": type(value).__name__,
                **{f.name: _plain(getattr(value, f.name)) for f in fields(value)}}
    if isinstance(value, FunctionSpec):
        return {"name": value.name, "tag": value.class_tag, "params": _plain(dict(value.params))}
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if callable(value):
        return getattr(value, "__qualname__", type(value).__name__)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def config_digest(**parts) -> str:
    """Short SHA-256 digest of a JSON description of an experiment."""
    text = json.dumps(_plain(parts), sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve_truth(process, f: FunctionSpec, truth: str = "auto") -> str:
    if truth == "auto":
        if isinstance(process, JumpProcess):
            return "exact-jump"
        if isinstance(process, (OuProcess, BrownianMotion)) and f.affine is not None:
            return "exact-gaussian"
        return "fine-grid"
    if truth == "exact-gaussian":
        if not isinstance(process, (OuProcess, BrownianMotion)) or f.affine is None:
            raise UnsupportedCombination("exact Gaussian truth needs OU/BM and an affine function")
    elif truth == "exact-jump":
        if not isinstance(process, JumpProcess):
            raise UnsupportedCombination("exact jump truth needs a jump process")
    elif truth != "fine-grid":
        raise DomainError(f"unknown truth kind {truth!r}")
    return truth


def _seed(seed) -> int:
    return seed.master_seed if isinstance(seed, SeedSpec) else int(seed)


def _batches(reps, width):
    size = max(1, min(reps, _BATCH_BUDGET // (width + 1)))
    return [(s, min(size, reps - s)) for s in range(0, reps, size)]


def _run_batches(job, reps, width, workers):
    spans = _batches(reps, width)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda sp: job(*sp), spans))
    else:
        parts = [job(*sp) for sp in spans]
    return parts


def sweep_errors(process, f: FunctionSpec, T: float, ns, reps: int, seed, init=None,
                 refinement: int = DEFAULT_REFINEMENT, truth: str = "auto",
                 rule: str = "trapezoid", workers: int = 1):
    """Per-replication errors ``Gamma - Gamma_hat`` for every ``n`` in ``ns``.

    Returns ``(truth_kind, {n: array of length reps})``.  Paths are simulated
    once on a grid that every ``n`` divides.
    """
    ns = [int(n) for n in ns]
    if any(n < 1 for n in ns):
        raise DomainError("grid sizes must be positive")
    kind = resolve_truth(process, f, truth)
    master = _seed(seed)
    if f.is_constant:
        return kind, {n: np.zeros(reps) for n in ns}
    base = math.lcm(*ns)
    steps = base if kind != "fine-grid" else base * int(refinement)
    grid = make_grid(T, steps)

    def job(start, count):
        if kind == "exact-gaussian":
            paths, integral = gaussian_paths_with_integral(process, grid, init, master,
                                                           count, start)
            a, b = f.affine
            true = a * integral + b * T
        elif kind == "exact-jump":
            paths, true = process.sample_paths_with_integral(grid, init, master, count, f,
                                                             start)
        else:
            paths = process.sample_paths(grid, init, master, count, start)
            true = fine_sums(paths, f, grid.delta, rule)
        out = {}
        for n in ns:
            stride = steps // n
            out[n] = true - riemann_sums(paths[:, :steps:stride], f, T / n)
        return out

    parts = _run_batches(job, reps, steps, workers)
    return kind, {n: np.concatenate([p[n] for p in parts]) for n in ns}


def estimate_from_errors(errors: np.ndarray, digest: str, truth_kind: str) -> ErrorEstimate:
    sq = np.asarray(errors, dtype=float) ** 2
    reps = sq.size
    mean_sq = float(np.mean(sq))
    stderr = float(np.std(sq, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return ErrorEstimate(mean_sq, stderr, reps, digest, truth_kind)


# ---------------------------------------------------------------------------
# public experiments

def mc_l2_error(process, f: FunctionSpec, grid: TimeGrid, reps: int, seed, init=None,
                refinement: int = DEFAULT_REFINEMENT, truth: str = "auto",
                rule: str = "trapezoid", workers: int = 1, digest: str | None = None,
                min_reps: int = 100) -> ErrorEstimate:
    """Monte Carlo ``||Gamma_T(f) - Gamma_hat_{T,n}(f)||^2_{L^2(P)}``.

    Ground truth is the exact integral when available (affine ``f`` on OU or
    BM, any ``f`` on a jump process) and the fine-grid quadrature with
    ``refinement`` fine steps per coarse step otherwise.
    """
    if reps < min_reps:
        raise DomainError(f"reps must be at least {min_reps}")
    kind, errs = sweep_errors(process, f, grid.horizon_T, [grid.steps_n], reps, seed, init,
                              refinement, truth, rule, workers)
    if digest is None:
        digest = config_digest(process=process, f=f, T=grid.horizon_T, n=grid.steps_n,
                               reps=reps, seed=_seed(seed), init=init, refinement=refinement,
                               truth=kind, rule=rule)
    return estimate_from_errors(errs[grid.steps_n], digest, kind)


def fit_loglog(xs, estimates, abscissa="delta") -> RateFit:
    """OLS of ``log rms`` on ``log x``; zero-error points are excluded."""
    order = np.argsort(xs)[::-1] if abscissa == "delta" else np.argsort(xs)
    pts, excluded, kept = [], [], []
    for i in order:
        est = estimates[i]
        if est.mean_sq > 0:
            pts.append((float(xs[i]), est.rms, est.rms_stderr))
        else:
            excluded.append(float(xs[i]))
        kept.append(est)
    if len(pts) >= 2:
        lx = np.log([p[0] for p in pts])
        ly = np.log([p[1] for p in pts])
        res = stats.linregress(lx, ly)
        slope, intercept, r2 = float(res.slope), float(res.intercept), float(res.rvalue**2)
    else:
        slope = intercept = r2 = math.nan
    return RateFit(tuple(pts), slope, intercept, r2, abscissa, tuple(excluded), tuple(kept))


def rate_sweep(process, f: FunctionSpec, T: float, ns, reps: int, seed, init=None,
               refinement: int = DEFAULT_REFINEMENT, truth: str = "auto",
               rule: str = "trapezoid", workers: int = 1, digest: str | None = None) -> RateFit:
    """Slope of log RMS error against log ``delta`` over the grid sizes ``ns``."""
    ns = [int(n) for n in ns]
    if len(ns) < 4 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("ns must be strictly increasing with at least 4 values")
    kind, errs = sweep_errors(process, f, T, ns, reps, seed, init, refinement, truth, rule,
                              workers)
    if digest is None:
        digest = config_digest(process=process, f=f, T=T, ns=ns, reps=reps, seed=_seed(seed),
                               init=init, refinement=refinement, truth=kind, rule=rule)
    ests = [estimate_from_errors(errs[n], digest, kind) for n in ns]
    return fit_loglog(np.array([T / n for n in ns]), ests, "delta")


def bound_values(deltas, s: float, norm_value: float, T: float, C: float = BOUND_CONSTANT,
                 prefactor: float = 1.0, lower_order_norm: float = 0.0) -> np.ndarray:
    """``C * prefactor * sqrt(T) * (norm * delta^{(1+s)/2} + lower * delta)``."""
    d = np.asarray(deltas, dtype=float)
    return C * prefactor * math.sqrt(T) * (norm_value * d ** ((1 + s) / 2)
                                           + lower_order_norm * d)


def bound_check(sweep: RateFit, s: float, norm_value: float, T: float,
                C: float = BOUND_CONSTANT, prefactor: float = 1.0,
                lower_order_norm: float = 0.0) -> BoundReport:
    """Check ``rms <= C * norm * sqrt(T) * delta^{(1+s)/2}`` at every sweep point.

    ``ratios`` are ``rms / (bound / C)``, so the check passes when every ratio
    is at most ``C``.  Excluded (zero-error) points satisfy the bound trivially.
    """
    if not sweep.points:
        return BoundReport((), (), 0.0, C, True)
    deltas = np.array([p[0] for p in sweep.points])
    rms = np.array([p[1] for p in sweep.points])
    bounds = bound_values(deltas, s, norm_value, T, C, prefactor, lower_order_norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bounds > 0, C * rms / bounds, np.where(rms > 0, np.inf, 0.0))
    mx = float(np.max(ratios))
    return BoundReport(tuple(ratios.tolist()), tuple(bounds.tolist()), mx, C, bool(mx <= C))


def ergodic_sweep(process, f: FunctionSpec, Ts, delta: float, reps: int, seed, init=None,
                  target: float | None = None, workers: int = 1,
                  digest: str | None = None) -> RateFit:
    """RMS of ``Gamma_hat_{T,n}(f) / T - int f dmu`` against ``T`` at fixed ``delta``.

    Each path is simulated once up to ``max(Ts)`` and every shorter horizon
    uses its prefix.
    """
    Ts = [float(t) for t in Ts]
    if len(Ts) < 4 or any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise DomainError("Ts must be strictly increasing with at least 4 values")
    counts = [round(t / delta) for t in Ts]
    if any(c < 1 or abs(c * delta - t) > 1e-9 * t for c, t in zip(counts, Ts)):
        raise DomainError("every horizon must be a whole number of steps")
    if target is None:
        target = process.stationary_mean(f)
    master = _seed(seed)
    grid = make_grid(Ts[-1], counts[-1])
    if digest is None:
        digest = config_digest(process=process, f=f, Ts=Ts, delta=delta, reps=reps,
                               seed=master, init=init)

    def job(start, count):
        fx = f(process.sample_paths(grid, init, master, count, start)[:, :-1])
        csum = np.cumsum(fx, axis=1)
        return np.stack([csum[:, c - 1] / c - target for c in counts], axis=1)

    errs = np.concatenate(_run_batches(job, reps, counts[-1], workers))
    if f.is_constant:
        errs = np.zeros_like(errs)
    ests = [estimate_from_errors(errs[:, j], digest, "exact-mean") for j in range(len(Ts))]
    return fit_loglog(np.array(Ts), ests, "T")


def nonstationary_check(process, f: FunctionSpec, init: InitialLaw, T: float, ns, reps: int,
                        seed, s: float, norm_value: float, C: float = BOUND_CONSTANT,
                        lower_order_norm: float = 0.0, **kw):
    """Rate sweep from ``X_0 ~ eta`` checked against the bound scaled by
    ``||d eta / d mu||_inf^{1/2}``.  Returns ``(RateFit, BoundReport, sup)``."""
    sup = 1.0 if init.kind == "stationary" else init.radon_nikodym_sup(process)
    fit = rate_sweep(process, f, T, ns, reps, seed, init, **kw)
    report = bound_check(fit, s, norm_value, T, C, math.sqrt(sup), lower_order_norm)
    return fit, report, sup


@dataclass(frozen=True)
class FoldingReport:
    Ms: tuple
    ns: tuple
    rms: tuple          # rms[i][j] at Ms[i], ns[j]
    max_rel_change: float


def folding_stability(Ms, f: FunctionSpec, T: float, ns, reps: int, seed,
                      init: InitialLaw | None = None, refinement: int = DEFAULT_REFINEMENT):
    """RMS errors of reflected Brownian motion sweeps for barriers ``Ms``.

    ``max_rel_change`` compares the last two barriers at every ``n``.  All
    barriers share the same free Brownian drivers.
    """
    from .processes import ReflectedBrownianMotion
    init = InitialLaw.uniform(-1.0, 1.0) if init is None else init
    table = []
    for M in Ms:
        _, errs = sweep_errors(ReflectedBrownianMotion(float(M)), f, T, ns, reps, seed, init,
                               refinement, "fine-grid")
        table.append(tuple(float(np.sqrt(np.mean(errs[n] ** 2))) for n in ns))
    rel = [abs(a - b) / b for a, b in zip(table[-2], table[-1]) if b > 0]
    return FoldingReport(tuple(float(m) for m in Ms), tuple(int(n) for n in ns), tuple(table),
                         max(rel) if rel else 0.0)


# ---------------------------------------------------------------------------
# scalar-function checks

@dataclass(frozen=True)
class PsiReport:
    samples: int
    exp_violations: int
    psi_violations: int
    max_exp_ratio: float
    max_psi_ratio: float
    quadrature_max_rel: float


def _sample_left_half_plane(rng, size, log_range=(-4.0, 3.0)):
    r = 10 ** rng.uniform(*log_range, size)
    theta = rng.uniform(np.pi / 2, 3 * np.pi / 2, size)
    z = r * np.exp(1j * theta)
    # include the real axis explicitly
    real = rng.random(size) < 0.25
    return np.where(real, -r + 0j, z)


def _cquad(fun, a, b, **kw):
    re = integrate.quad(lambda x: np.real(fun(x)), a, b, **kw)[0]
    im = integrate.quad(lambda x: np.imag(fun(x)), a, b, **kw)[0]
    return re + 1j * im


def psi_quadrature(lam: complex, n: int, delta: float, T: float | None = None):
    """Defining integrals of the three scalar functions by nested quadrature."""
    kw = dict(epsabs=1e-15, epsrel=1e-12, limit=200)
    e = lambda t: np.exp(lam * t)
    inner = lambda h: _cquad(lambda r: e(h - r) - 1.0, 0.0, h, **kw)
    diag = 2 * n * (_cquad(inner, 0.0, delta, **kw)
                    + delta * _cquad(lambda h: 1.0 - e(h), 0.0, delta, **kw))
    lags = np.arange(1, n)
    pair = float(np.sum(n - lags)) if lam == 0 else np.sum((n - lags) * np.exp(lam * lags * delta))
    off = 2 * pair * (_cquad(lambda r: np.exp(-lam * r) * (1 - e(r)), 0.0, delta, **kw)
                      * _cquad(lambda h: e(h) - 1.0, 0.0, delta, **kw))
    T = n * delta if T is None else T
    inner_e = lambda h: _cquad(lambda r: e(h - r), 0.0, h, **kw)
    erg = 2.0 / T**2 * _cquad(inner_e, 0.0, T, **kw)
    return diag, off, erg


def psi_check(samples: int = 10_000, seed: int = 0, quad_points: int = 24) -> PsiReport:
    """Sampled checks of ``|1 - e^z| <= 2|z|^s`` and ``|Psi| <= 4 n delta^{2+s} |lambda|^s``.

    Also compares the closed forms against nested quadrature at
    ``quad_points`` sampled ``(lambda, n, delta)`` triples.
    """
    rng = np.random.default_rng(seed)
    z = _sample_left_half_plane(rng, samples)
    s = rng.uniform(0.0, 1.0, samples)
    lhs = np.abs(np.expm1(z))
    rhs = 2 * np.abs(z) ** s
    exp_ratio = lhs / rhs

    lam = _sample_left_half_plane(rng, samples)
    n = rng.integers(1, 513, samples)
    delta = 10 ** rng.uniform(-3, 0.5, samples)
    psi = np.abs(psi_diag(lam, n, delta))
    bound = 4 * n * delta ** (2 + s) * np.abs(lam) ** s
    psi_ratio = psi / bound

    worst = 0.0
    qlam = _sample_left_half_plane(rng, quad_points, (-2.0, 1.5))
    qn = rng.integers(1, 9, quad_points)
    qd = 10 ** rng.uniform(-2, 0, quad_points)
    for lm, nn, dd in zip(qlam, qn, qd):
        ref = psi_quadrature(complex(lm), int(nn), float(dd))
        got = (psi_diag(lm, nn, dd), psi_offdiag(lm, nn, dd), psi_ergodic(lm, nn * dd))
        for a, b in zip(got, ref):
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    return PsiReport(samples, int(np.sum(exp_ratio > 1)), int(np.sum(psi_ratio > 1)),
                     float(exp_ratio.max()), float(psi_ratio.max()), float(worst))
