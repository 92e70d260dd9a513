"""Functional calculus for normal generators with discrete spectrum.

A :class:`SpectralModel` stores the eigenvalues ``lambda_k`` of the generator
and the coefficients ``c_k = <f, phi_k>_mu`` of a target function in an
orthonormal eigenbasis.  Every quadratic error functional of a stationary
start is then ``sum_k Psi(lambda_k) c_k^2`` for a scalar function ``Psi``.

The scalar functions are written in terms of the remainders
``phi_k(z) = (e^z - sum_{j<k} z^j/j!) / z^k`` so that no formula subtracts
nearly equal quantities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg, special

from ._expfun import phi
from .core import DomainError, TimeGrid
from .funcspace import FunctionSpec, composite_nodes, standard_normal_pdf
from .processes import JumpProcess, NonIntegrableError


class TruncationWarning(UserWarning):
    """Parseval defect of a truncated expansion is larger than requested."""


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Discrete spectral data ``{(lambda_k, c_k)}`` of a generator acting on ``f``.

    ``norm_sq`` is an independent value of ``||f||_mu^2`` used to report the
    Parseval defect of the (possibly truncated) expansion.
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    label: str
    norm_sq: float

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues)
        c = np.asarray(self.coefficients, dtype=float)
        if lam.shape != c.shape:
            raise DomainError("eigenvalues and coefficients differ in length")
        if np.any(np.real(lam) > 0):
            raise DomainError("generator spectrum must lie in the closed left half-plane")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "coefficients", c)

    @property
    def weights(self) -> np.ndarray:
        return self.coefficients**2

    @property
    def parseval_defect(self) -> float:
        return float(self.norm_sq - np.sum(self.weights))

    @property
    def truncation_K(self) -> int:
        return int(self.coefficients.size - 1)

    def scaled(self, a: float) -> "SpectralModel":
        return SpectralModel(self.eigenvalues, a * self.coefficients, self.label,
                             a * a * self.norm_sq)

    def centered(self) -> "SpectralModel":
        c = np.where(self.eigenvalues == 0, 0.0, self.coefficients)
        return SpectralModel(self.eigenvalues, c, self.label,
                             self.norm_sq - float(np.sum(self.weights[self.eigenvalues == 0])))


@dataclass(frozen=True)
class DsNorm:
    s: float
    value: float
    truncation_K: int


# ---------------------------------------------------------------------------
# decompositions

def _hermite_project(x, sqrt_w, fx, K):
    """``c_k = sum_i w_i f(x_i) h_k(x_i)`` with ``h_k`` scaled by ``sqrt(w)``."""
    g = sqrt_w * fx
    c = np.empty(K + 1)
    prev = np.zeros_like(x)
    cur = sqrt_w.copy()
    for k in range(K + 1):
        c[k] = float(np.dot(g, cur))
        prev, cur = cur, (x * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
    return c


def hermite_decompose(f: FunctionSpec, K: int = 128, quad_nodes: int | None = None,
                      method: str = "auto") -> SpectralModel:
    """Expansion of ``f`` in orthonormal Hermite polynomials (OU eigenbasis).

    The OU generator acts as ``L h_k = -k h_k``.  ``method="gauss-hermite"``
    uses ``quad_nodes`` Gauss-Hermite points (weight rescaled to N(0,1)).
    ``method="composite"`` uses Gauss-Legendre panels on ``[-14, 14]`` split and
    graded at ``f.breakpoints``; ``"auto"`` picks it whenever ``f`` has
    breakpoints, because Gauss-Hermite converges slowly across jumps.
    """
    K = int(K)
    if K < 0:
        raise DomainError("K must be non-negative")
    if method == "auto":
        method = "composite" if f.breakpoints else "gauss-hermite"
    if method == "gauss-hermite":
        nodes = max(2 * K + 2, 64) if quad_nodes is None else int(quad_nodes)
        if nodes < 2 * K:
            raise DomainError("quad_nodes must be at least 2K")
        x, w = special.roots_hermitenorm(nodes)
        w = w / math.sqrt(2 * math.pi)
    elif method == "composite":
        # panel width resolves the oscillation of h_K near the origin
        width = min(0.1, 1.0 / math.sqrt(2 * K + 1))
        x, w = composite_nodes(-14.0, 14.0, f.breakpoints, width, 16)
        w = w * standard_normal_pdf(x)
    else:
        raise DomainError(f"unknown quadrature method {method!r}")
    with np.errstate(over="ignore", invalid="ignore"):
        fx = f(x)
        norm_sq = float(np.sum(w * fx * fx))
    if not np.isfinite(norm_sq):
        raise NonIntegrableError(f"{f.name} is not square-integrable against N(0,1) numerically")
    c = _hermite_project(x, np.sqrt(w), fx, K)
    return SpectralModel(-np.arange(K + 1, dtype=float), c, "ou-hermite", norm_sq)


def jump_decompose(jp: JumpProcess, f) -> SpectralModel:
    """Eigen-expansion of ``f`` for ``L = lambda (P - I)`` with reversible ``P``.

    Symmetric ``P`` (uniform ``mu``) is the special case most examples use.
    """
    if not jp.is_reversible:
        raise DomainError("jump_decompose needs a reversible transition matrix")
    fv = _state_values(jp, f)
    mu = jp.stationary_mu
    sq = np.sqrt(mu)
    # D^{1/2} L D^{-1/2} is symmetric when mu_x P_xy = mu_y P_yx
    A = sq[:, None] * jp.generator / np.where(sq > 0, sq, 1.0)[None, :]
    A = 0.5 * (A + A.T)
    lam, V = np.linalg.eigh(A)
    scale = max(jp.rate_lambda, 1.0)
    lam = np.where(np.abs(lam) < 1e-12 * scale, 0.0, lam)
    lam = np.minimum(lam, 0.0)
    c = V.T @ (sq * fv)
    return SpectralModel(lam, c, "jump-eigen", float(np.dot(mu, fv * fv)))


def _state_values(jp, f):
    if isinstance(f, FunctionSpec):
        return np.asarray(f(np.arange(jp.n_states)), dtype=float)
    fv = np.asarray(f, dtype=float)
    if fv.shape != (jp.n_states,):
        raise DomainError("state function has the wrong length")
    return fv


# ---------------------------------------------------------------------------
# norms

def ds_norm(model: SpectralModel, s: float) -> DsNorm:
    """``|| |L|^{s/2} f ||_mu`` for ``s`` in ``[-1, 1]``."""
    if not -1 <= s <= 1:
        raise DomainError("s must lie in [-1, 1]")
    lam_abs = np.abs(model.eigenvalues)
    w = model.weights
    zero = lam_abs == 0
    if s < 0:
        tol = 1e-10 * max(1.0, math.sqrt(max(model.norm_sq, 0.0)))
        if np.any(np.abs(model.coefficients[zero]) > tol):
            raise DomainError("negative powers need f centered (no mass at eigenvalue 0)")
    if s == 0:
        total = float(np.sum(w))
    else:
        pw = np.zeros_like(lam_abs)
        pw[~zero] = np.exp(s * np.log(lam_abs[~zero]))
        total = float(np.sum(pw * w))
    return DsNorm(float(s), math.sqrt(total), model.truncation_K)


# ---------------------------------------------------------------------------
# scalar functions of the generator

def _left_half_plane(lam):
    lam = np.asarray(lam)
    if np.any(np.real(lam) > 0):
        raise DomainError("lambda must have non-positive real part")
    return lam.astype(np.result_type(lam.dtype, np.float64))


def _ret(x):
    x = np.asarray(x)
    if np.iscomplexobj(x) and np.all(np.imag(x) == 0):
        x = np.real(x)
    return x[()] if x.ndim == 0 else x


def psi_diag(lam, n: int, delta: float):
    """Diagonal-cell functional, ``||.||^2`` contribution of one eigenvalue.

    ``2n ( int_0^D int_0^h (e^{lam(h-r)} - 1) dr dh + D int_0^D (1 - e^{lam h}) dh )``
    equals ``2 n D^2 z (phi_3(z) - phi_2(z))`` with ``z = lam * D``.
    """
    lam = _left_half_plane(lam)
    z = lam * delta
    return _ret(2.0 * n * delta**2 * z * (phi(3, z) - phi(2, z)))


def _pair_count_sum(z, n):
    """``sum_{k>l} e^{z (k-l-1)}`` over ``1 <= l < k <= n``.

    Closed form ``n/(1-q) - (1-q^n)/(1-q)^2`` (``q = e^z``), rewritten as
    ``n (n phi_2(nz) - phi_2(z)) / phi_1(z)^2``.
    """
    return n * (n * phi(2, n * z) - phi(2, z)) / phi(1, z) ** 2


def psi_offdiag(lam, n: int, delta: float):
    """Off-diagonal functional ``2 int int (sum_{k>l} ...) (e^{lam h}-1)(1-e^{lam r}) dr dh``."""
    lam = _left_half_plane(lam)
    z = lam * delta
    G = _pair_count_sum(z, n)
    zp2 = z * phi(2, z)
    first = delta * (zp2 - np.expm1(z))   # int_0^D e^{lam(D-r)} (1 - e^{lam r}) dr
    second = delta * zp2                  # int_0^D (e^{lam h} - 1) dh
    return _ret(2.0 * G * first * second)


def psi_ergodic(lam, T: float):
    """``2 (e^{lam T} - 1 - lam T) / (lam T)^2``, equal to 1 at ``lam = 0``."""
    lam = _left_half_plane(lam)
    return _ret(2.0 * phi(2, lam * T))


def psi_total(lam, n: int, delta: float):
    return psi_diag(lam, n, delta) + psi_offdiag(lam, n, delta)


# ---------------------------------------------------------------------------
# exact errors

def _check_truncation(model):
    if model.norm_sq > 0 and abs(model.parseval_defect) > 1e-6 * model.norm_sq:
        warnings.warn(f"Parseval defect {model.parseval_defect:.3g} exceeds 1e-6 of ||f||^2",
                      TruncationWarning, stacklevel=3)


def exact_sq_error(model: SpectralModel, grid: TimeGrid) -> float:
    """``E|Gamma_T(f) - Gamma_hat_{T,n}(f)|^2`` for a stationary start."""
    _check_truncation(model)
    psi = psi_total(model.eigenvalues, grid.steps_n, grid.delta)
    return float(np.sum(np.real(psi) * model.weights))


def exact_ergodic_sq_error(model: SpectralModel, grid: TimeGrid) -> float:
    """``E|T^{-1} Gamma_hat_{T,n}(f) - int f dmu|^2`` for a stationary start.

    Equals ``sum_k c_k^2 (n + 2 q G) / n^2`` over non-zero eigenvalues, where
    ``q = e^{lam D}`` and ``G`` is the pair-count sum.
    """
    _check_truncation(model)
    active = model.eigenvalues != 0
    lam = _left_half_plane(model.eigenvalues[active])
    n = grid.steps_n
    z = lam * grid.delta
    val = (n + 2.0 * np.exp(z) * _pair_count_sum(z, n)) / n**2
    return float(np.sum(np.real(val) * model.weights[active]))


def exact_ergodic_sq_error_continuous(model: SpectralModel, T: float) -> float:
    """``E|T^{-1} Gamma_T(f) - int f dmu|^2`` from the ergodic functional."""
    active = model.eigenvalues != 0
    return float(np.sum(np.real(psi_ergodic(model.eigenvalues[active], T))
                        * model.weights[active]))


def exact_sq_error_jump_bruteforce(jp: JumpProcess, f, grid: TimeGrid, order: int = 8) -> float:
    """Independent value of the squared error from the covariance double sum.

    Sums ``int int E[(f(X_r) - f(X_a))(f(X_h) - f(X_b))] dr dh`` over every
    cell pair ``(k, l)`` with ``<P_t f, f>_mu = f^T diag(mu) e^{tL} f`` taken
    from matrix exponentials, and ``order``-point Gauss-Legendre rules on each
    cell (diagonal cells are split along ``r = h``).  Limited to ``S <= 50``
    states and ``n <= 1024``.
    """
    S, n, D = jp.n_states, grid.steps_n, grid.delta
    if S > 50 or n > 1024:
        raise DomainError("brute-force oracle limited to S <= 50 and n <= 1024")
    fv = _state_values(jp, f)
    mu = jp.stationary_mu
    f0 = fv - float(mu @ fv)
    L = jp.generator
    t, w = leggauss(order)
    nodes = 0.5 * D * (t + 1)
    wts = 0.5 * D * w

    # C(j*D + u) = (mu*f0)^T E^j e^{uL} f0 via a row table and a column table
    E = linalg.expm(D * L)
    rows = np.empty((n + 1, S))
    rows[0] = mu * f0
    for j in range(n):
        rows[j + 1] = rows[j] @ E
    offsets = {}

    def column(u):
        key = float(u)
        if key not in offsets:
            offsets[key] = linalg.expm(key * L) @ f0
        return offsets[key]

    def C(j, u):
        return float(rows[j] @ column(u))

    # diagonal cell: 2 * int_0^D dh int_0^h dr [C(h-r) - C(h) - C(r) + C(0)]
    diag = 0.0
    c0 = C(0, 0.0)
    for h, wh in zip(nodes, wts):
        for tj, wj in zip(t, w):
            r = 0.5 * h * (tj + 1)
            wr = 0.5 * h * wj
            diag += wh * wr * (C(0, h - r) - C(0, h) - C(0, r) + c0)
    diag *= 2.0

    # off-diagonal cell at lag d = k - l >= 1, h offset in cell k, r offset in cell l
    hh, rr = np.meshgrid(nodes, nodes, indexing="ij")
    ww = np.outer(wts, wts)
    diffs = (hh - rr).ravel()
    cols = np.column_stack([column(u) for u in diffs]
                           + [column(h) for h in nodes]
                           + [column(D - r) for r in nodes]
                           + [column(0.0)])
    table = rows @ cols
    q2 = diffs.size
    c_hr = table[:, :q2].reshape(n + 1, order, order)
    c_h = table[:, q2:q2 + order]
    c_r = table[:, q2 + order:q2 + 2 * order]
    c_0 = table[:, -1]
    lag = np.arange(1, n)
    integrand = (c_hr[lag] - c_h[lag][:, :, None] - c_r[lag - 1][:, None, :]
                 + c_0[lag][:, None, None])
    cell = np.zeros(n)
    cell[0] = diag
    cell[1:] = np.einsum("dij,ij->d", integrand, ww)

    k = np.arange(n)
    return float(np.sum(cell[np.abs(k[:, None] - k[None, :])]))
