"""Test functions and the norms that control the discretization error.

All functions here are one-dimensional.  A :class:`FunctionSpec` is a
vectorized evaluator plus enough metadata (class tag, breakpoints, declared
norms) for the quadrature routines to treat kinks and jumps correctly.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .core import DomainError

CLASS_TAGS = ("smooth", "holder", "indicator", "sobolev", "generic")


class SupportWarning(UserWarning):
    """A function has non-negligible mass outside the FFT box."""


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """Evaluable scalar function with class metadata.

    Parameters
    ----------
    evaluator : callable
        Vectorized map from an array of states to an array of values.
    class_tag : str
        One of ``smooth``, ``holder``, ``indicator``, ``sobolev``, ``generic``.
    params : mapping
        Class parameters, e.g. ``alpha`` for ``holder`` or ``K``/``L`` for
        ``indicator``.
    declared_norms : mapping
        Analytically known norms, keyed by name (``"holder"``, ``"mu"``, ...).
    breakpoints : tuple of float
        Points where ``f`` or its derivative is singular; quadrature panels
        are split there.
    affine : (a, b) or None
        Set when ``f(x) = a * x + b``; enables exact Gaussian ground truth.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    class_tag: str = "generic"
    params: Mapping = field(default_factory=dict)
    declared_norms: Mapping[str, float] = field(default_factory=dict)
    breakpoints: tuple = ()
    affine: tuple | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.class_tag not in CLASS_TAGS:
            raise DomainError(f"unknown class tag {self.class_tag!r}")
        if self.class_tag == "holder":
            alpha = self.params.get("alpha")
            if alpha is None or not 0 < alpha <= 1:
                raise DomainError("holder functions need alpha in (0, 1]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.evaluator(x), dtype=float), x.shape)

    @property
    def is_constant(self) -> bool:
        return self.affine is not None and self.affine[0] == 0.0

    def scaled(self, a: float) -> "FunctionSpec":
        a = float(a)
        ev = self.evaluator
        norms = {k: abs(a) * v for k, v in self.declared_norms.items()}
        affine = None if self.affine is None else (a * self.affine[0], a * self.affine[1])
        tag = self.class_tag if a != 0 else "smooth"
        return replace(self, evaluator=lambda x: a * ev(x), declared_norms=norms,
                       affine=affine if a != 0 else (0.0, 0.0), class_tag=tag,
                       name=f"{a!r}*{self.name}")

    def shifted(self, c: float) -> "FunctionSpec":
        c = float(c)
        ev = self.evaluator
        affine = None if self.affine is None else (self.affine[0], self.affine[1] + c)
        keep = {k: v for k, v in self.declared_norms.items() if k == "holder"}
        return replace(self, evaluator=lambda x: ev(x) + c, affine=affine,
                       declared_norms=keep, name=f"{self.name}+{c!r}")

    def __mul__(self, a):
        return self.scaled(a)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, FunctionSpec):
            f, g = self.evaluator, other.evaluator
            affine = None
            if self.affine is not None and other.affine is not None:
                affine = (self.affine[0] + other.affine[0], self.affine[1] + other.affine[1])
            tag = self.class_tag if self.class_tag == other.class_tag else "generic"
            params = dict(self.params) if tag == self.class_tag and tag != "indicator" else {}
            if tag == "indicator":
                tag = "generic"
            return FunctionSpec(lambda x: f(x) + g(x), tag, params, {},
                                tuple(sorted(set(self.breakpoints) | set(other.breakpoints))),
                                affine, f"{self.name}+{other.name}")
        return self.shifted(other)

    __radd__ = __add__


# ---------------------------------------------------------------------------
# constructors

def identity() -> FunctionSpec:
    return FunctionSpec(lambda x: x, "smooth", {}, {"mu": 1.0, "holder": 1.0},
                        affine=(1.0, 0.0), name="identity")


def constant(c: float = 1.0) -> FunctionSpec:
    c = float(c)
    return FunctionSpec(lambda x: np.full(np.shape(x), c), "smooth", {"c": c},
                        {"mu": abs(c), "holder": 0.0}, affine=(0.0, c), name="constant")


def indicator(K: float, L: float = math.inf) -> FunctionSpec:
    """``1`` on the right-open interval ``[K, L)``, ``0`` elsewhere."""
    K, L = float(K), float(L)
    if not K < L:
        raise DomainError("indicator needs K < L")
    bps = (K,) if math.isinf(L) else (K, L)
    return FunctionSpec(lambda x: ((x >= K) & (x < L)).astype(float), "indicator",
                        {"K": K, "L": L}, {}, bps, name="indicator")


def holder_abs(alpha: float = 0.5, cap: float | None = None) -> FunctionSpec:
    """``min(|x|, cap)**alpha``; Hölder-``alpha`` with constant 1."""
    alpha = float(alpha)
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    if cap is None:
        ev = lambda x: np.abs(x) ** alpha
        bps = (0.0,)
    else:
        cap = float(cap)
        if cap <= 0:
            raise DomainError("cap must be positive")
        ev = lambda x: np.minimum(np.abs(x), cap) ** alpha
        bps = (-cap, 0.0, cap)
    return FunctionSpec(ev, "holder", {"alpha": alpha, "cap": cap}, {"holder": 1.0},
                        bps, name="holder_abs")


def hermite_value(k: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal (w.r.t. N(0,1)) probabilists' Hermite polynomial ``He_k/sqrt(k!)``."""
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for j in range(k):
        prev, cur = cur, (x * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
    return cur


def hermite(k: int) -> FunctionSpec:
    k = int(k)
    if k < 0:
        raise DomainError("hermite degree must be non-negative")
    affine = (1.0, 0.0) if k == 1 else ((0.0, 1.0) if k == 0 else None)
    return FunctionSpec(lambda x: hermite_value(k, x), "smooth", {"k": k}, {"mu": 1.0},
                        affine=affine, name="hermite")


def tabulated(xs, ys) -> FunctionSpec:
    """Piecewise-linear interpolant of ``(xs, ys)``, constant beyond the table."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    if xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise DomainError("tabulated function needs at least two distinct x values")
    return FunctionSpec(lambda x: np.interp(x, xs, ys), "generic",
                        {"xs": xs.tolist(), "ys": ys.tolist()}, {},
                        tuple(xs.tolist()) if xs.size <= 64 else (), name="tabulated")


def tabulated_from_csv(path) -> FunctionSpec:
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                continue  # header line
            xs.append(x)
            ys.append(y)
    spec = tabulated(xs, ys)
    return replace(spec, params={**spec.params, "path": str(path)})


def state_vector(values) -> FunctionSpec:
    """Function on the states ``0, ..., S-1`` of a jump process."""
    vals = np.asarray(values, dtype=float)

    def ev(x):
        return vals[np.asarray(x).astype(np.intp)]

    return FunctionSpec(ev, "generic", {"values": vals.tolist()}, {}, name="state_vector")


# ---------------------------------------------------------------------------
# quadrature helpers

def composite_nodes(a: float, b: float, breakpoints=(), panel_width: float = 0.25,
                    order: int = 16, grading: int = 12):
    """Gauss-Legendre nodes/weights on ``[a, b]``.

    Panels are split at ``breakpoints`` and geometrically graded towards each
    of them (ratio 1/2, ``grading`` levels), which keeps the rule accurate for
    jumps and algebraic singularities sitting on a breakpoint.
    """
    cuts = {a, b}
    for p in breakpoints:
        if a < p < b:
            cuts.add(p)
    cuts = sorted(cuts)
    edges = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        seg = np.linspace(lo, hi, max(1, int(math.ceil((hi - lo) / panel_width))) + 1)
        fine = [lo]
        # grade only the panels adjacent to a breakpoint
        if lo in breakpoints or hi in breakpoints:
            width = seg[1] - seg[0]
            if lo in breakpoints:
                fine += [lo + width * 0.5**j for j in range(grading, 0, -1)]
            inner = seg[1:-1].tolist()
            fine += inner
            if hi in breakpoints:
                fine += [hi - width * 0.5**j for j in range(1, grading + 1)]
            fine.append(hi)
            edges.append(np.array(sorted(set(fine))))
        else:
            edges.append(seg)
    e = np.unique(np.concatenate(edges))
    t, w = leggauss(order)
    lo, hi = e[:-1, None], e[1:, None]
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
    weights = 0.5 * (hi - lo) * w
    return nodes.ravel(), weights.ravel()


def standard_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def mu_norm(f: FunctionSpec, mu_density=standard_normal_pdf, box=(-14.0, 14.0),
            panel_width: float = 0.05, order: int = 16) -> float:
    """``||f||_mu`` by composite quadrature on ``box``."""
    x, w = composite_nodes(box[0], box[1], f.breakpoints, panel_width, order)
    return float(math.sqrt(np.sum(w * f(x) ** 2 * mu_density(x))))


# ---------------------------------------------------------------------------
# norms

def holder_norm(f: FunctionSpec, domain=(-1.0, 1.0), grid_points: int = 2001,
                alpha: float | None = None) -> float:
    """Largest Hölder quotient over all pairs of a uniform grid.

    This is a lower estimate of the supremum.  ``alpha`` defaults to the
    function's own class parameter, or 1 when it has none.
    """
    if grid_points < 2:
        raise DomainError("grid_points must be at least 2")
    if alpha is None:
        alpha = f.params.get("alpha", 1.0) if f.class_tag == "holder" else 1.0
    x = np.linspace(domain[0], domain[1], int(grid_points))
    fx = f(x)
    best = 0.0
    chunk = max(1, 4_000_000 // x.size)
    for start in range(0, x.size, chunk):
        xi = x[start:start + chunk, None]
        dist = np.abs(xi - x[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.abs(fx[start:start + chunk, None] - fx[None, :]) / dist**alpha
        q[dist == 0] = 0.0
        best = max(best, float(np.max(q)))
    return best


def _bump(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def bump_normalizer() -> float:
    val, _ = integrate.quad(lambda y: float(_bump(y)), -1, 1, epsabs=0.0, epsrel=1e-12,
                            limit=200)
    return 1.0 / val


def bump_kernel(y):
    """Standard mollifier ``c * exp(-1/(1-y^2))`` on ``(-1, 1)`` with unit mass."""
    return bump_normalizer() * _bump(y)


def mollify(f: FunctionSpec, eps: float, order: int = 48) -> FunctionSpec:
    """Convolution ``f * phi_eps`` with the standard bump kernel.

    The integral over the kernel support is split wherever ``x - eps*y`` hits
    one of ``f``'s breakpoints, so jumps do not spoil the Gauss-Legendre rule.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    eps = float(eps)
    t, w = leggauss(order)
    bps = np.asarray(f.breakpoints, dtype=float)

    def ev(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        inner = np.clip((flat[:, None] - bps[None, :]) / eps, -1.0, 1.0)
        edges = np.concatenate(
            [np.full((flat.size, 1), -1.0), np.sort(inner, axis=1), np.ones((flat.size, 1))],
            axis=1,
        )
        lo, hi = edges[:, :-1, None], edges[:, 1:, None]
        y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        wy = 0.5 * (hi - lo) * w * _bump(y)
        # normalize the discrete kernel so constants are reproduced exactly
        wy = wy / np.sum(wy, axis=(1, 2), keepdims=True)
        vals = f(flat[:, None, None] - eps * y)
        return np.sum(wy * vals, axis=(1, 2)).reshape(x.shape)

    norms = {k: v for k, v in f.declared_norms.items() if k == "holder"}
    return FunctionSpec(ev, "smooth", {"eps": eps, "source": f.name}, norms, (),
                        f.affine, name=f"mollified({f.name})")


def fourier_transform_grid(f: FunctionSpec, box=(-32.0, 32.0), fft_points: int = 2**16):
    """Samples of ``Ff(u) = (2 pi)^(-1/2) int f(x) e^{-iux} dx`` on the FFT grid.

    Returns ``(u, Ff(u), du)`` with frequencies in FFT order.
    """
    a, b = box
    dx = (b - a) / fft_points
    x = a + dx * np.arange(fft_points)
    fx = f(x)
    u = 2 * math.pi * np.fft.fftfreq(fft_points, d=dx)
    F = np.fft.fft(fx) * dx / math.sqrt(2 * math.pi) * np.exp(-1j * u * a)
    return u, F, 2 * math.pi / (fft_points * dx)


def sobolev_norm(f: FunctionSpec, s: float, box=(-32.0, 32.0), fft_points: int = 2**16) -> float:
    """Fractional Sobolev norm ``((2 pi)^{-1/2} int (1+|u|)^{2s} |Ff(u)|^2 du)^{1/2}``.

    Computed from the DFT of ``f`` sampled on ``box``.  Emits
    :class:`SupportWarning` when more than ``1e-6`` of ``||f||^2`` lies in the
    outer tenth of the box on either side.
    """
    if not 0 <= s <= 1:
        raise DomainError("s must lie in [0, 1]")
    if fft_points < 1024 or fft_points & (fft_points - 1):
        raise DomainError("fft_points must be a power of two >= 1024")
    a, b = box
    dx = (b - a) / fft_points
    x = a + dx * np.arange(fft_points)
    fx2 = f(x) ** 2
    total = float(np.sum(fx2))
    edge = (x < a + 0.1 * (b - a)) | (x > b - 0.1 * (b - a))
    if total > 0 and float(np.sum(fx2[edge])) > 1e-6 * total:
        warnings.warn(f"{f.name} has significant mass near the edge of box {box}",
                      SupportWarning, stacklevel=2)
    u, F, du = fourier_transform_grid(f, box, fft_points)
    val = np.sum((1 + np.abs(u)) ** (2 * s) * np.abs(F) ** 2) * du / math.sqrt(2 * math.pi)
    return float(math.sqrt(val))


def weighted_h1_norm(f: FunctionSpec, mu_density=standard_normal_pdf, box=(-10.0, 10.0)) -> float:
    """``||f||_mu + ||f'||_mu`` with a central-difference derivative.

    The difference step equals the quadrature spacing, ``width / 2**14``.
    """
    a, b = box
    h = (b - a) / 2**14
    x = np.linspace(a, b, 2**14 + 1)
    dens = mu_density(x)
    fx = f(x)
    dfx = (f(x + h) - f(x - h)) / (2 * h)
    l2 = integrate.simpson(fx**2 * dens, x=x)
    g2 = integrate.simpson(dfx**2 * dens, x=x)
    return float(math.sqrt(max(l2, 0.0)) + math.sqrt(max(g2, 0.0)))
