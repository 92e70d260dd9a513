import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from occtime.core import DomainError
from occtime.funcspace import (SupportWarning, bump_kernel, composite_nodes, constant, hermite,
                               hermite_value, holder_abs, holder_norm, identity, indicator,
                               mollify, mu_norm, sobolev_norm, standard_normal_pdf,
                               state_vector, tabulated, tabulated_from_csv, weighted_h1_norm)


# --- FunctionSpec basics ----------------------------------------------------------

@pytest.mark.parametrize("x, expected", [(-0.5, 0.0), (0.0, 1.0), (0.999, 1.0), (1.0, 0.0)])
def test_indicator_right_open(x, expected):
    assert indicator(0.0, 1.0)(x) == expected


def test_indicator_values_are_binary():
    vals = indicator(-0.3)(np.linspace(-3, 3, 1001))
    assert set(np.unique(vals)) <= {0.0, 1.0}
    with pytest.raises(DomainError):
        indicator(1.0, 1.0)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_holder_alpha_range(alpha):
    with pytest.raises(DomainError):
        holder_abs(alpha)


def test_hermite_orthonormal():
    x, w = np.polynomial.hermite_e.hermegauss(60)
    w = w / math.sqrt(2 * math.pi)
    H = np.array([hermite_value(k, x) for k in range(8)])
    np.testing.assert_allclose((H * w) @ H.T, np.eye(8), atol=1e-12)


def test_algebra():
    f = 2.0 * identity() + 3.0
    assert f.affine == (2.0, 3.0)
    np.testing.assert_allclose(f(np.array([0.0, 1.0])), [3.0, 5.0])
    assert constant(4.0).is_constant and not identity().is_constant
    g = indicator(0.0) + indicator(-1.0, 0.0)
    np.testing.assert_array_equal(g(np.array([-2.0, -0.5, 0.5])), [0.0, 1.0, 1.0])


def test_tabulated(tmp_path):
    f = tabulated([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
    np.testing.assert_allclose(f(np.array([-1.0, 0.5, 1.5, 3.0])), [0.0, 1.0, 1.0, 0.0])
    path = tmp_path / "f.csv"
    path.write_text("x,f\n0,0\n1,2\n2,0\n")
    g = tabulated_from_csv(path)
    assert g(1.0) == 2.0
    with pytest.raises(DomainError):
        tabulated([1.0, 1.0], [0.0, 1.0])


def test_state_vector():
    f = state_vector([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(f(np.array([2, 0, 1])), [0.5, 1.0, -2.0])


# --- quadrature helpers ------------------------------------------------------------

def test_composite_nodes_exact_on_pieces():
    x, w = composite_nodes(-3.0, 2.0, (0.0, 1.0))
    f = indicator(0.0, 1.0)
    assert np.sum(w * f(x)) == pytest.approx(1.0, abs=1e-14)
    assert np.sum(w * x**5) == pytest.approx((2**6 - 3**6) / 6, rel=1e-12)


def test_mu_norm_gaussian_moments():
    assert mu_norm(identity()) == pytest.approx(1.0, abs=1e-12)
    assert mu_norm(indicator(0.0)) == pytest.approx(math.sqrt(0.5), abs=1e-12)


# --- Hölder norm ---------------------------------------------------------------------

def test_holder_norm_identity():
    assert holder_norm(identity(), (-3.0, 5.0), 101, alpha=1.0) == pytest.approx(1.0, rel=1e-12)


def test_holder_norm_sqrt_abs():
    assert holder_norm(holder_abs(0.5), (-1.0, 1.0), 2001) == pytest.approx(1.0, rel=0.01)


def test_holder_norm_constant():
    assert holder_norm(constant(3.0)) == 0.0


def test_holder_norm_grid_points_checked():
    with pytest.raises(DomainError):
        holder_norm(identity(), grid_points=1)


# --- mollification ------------------------------------------------------------------

def test_bump_kernel_probability_density():
    val, _ = integrate.quad(bump_kernel, -1, 1)
    assert val == pytest.approx(1.0, abs=1e-12)
    assert bump_kernel(1.0) == 0.0 and bump_kernel(-1.5) == 0.0


def test_mollify_constant():
    f = mollify(constant(2.5), 0.3)
    np.testing.assert_allclose(f(np.linspace(-2, 2, 9)), 2.5, rtol=1e-12)


def test_mollify_indicator():
    eps = 0.1
    f, fe = indicator(0.0), mollify(indicator(0.0), eps)
    x = np.array([-1.0, -0.2, -0.1001, 0.1001, 0.3, 2.0])
    np.testing.assert_allclose(fe(x), f(x), rtol=0, atol=1e-15)
    assert fe(0.0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DomainError):
        mollify(f, 0.0)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_mollify_holder_error_bound(alpha, eps):
    f = holder_abs(alpha)
    fe = mollify(f, eps)
    x, w = composite_nodes(-14.0, 14.0, (0.0,), 0.05, 16)
    err = math.sqrt(np.sum(w * (f(x) - fe(x)) ** 2 * standard_normal_pdf(x)))
    assert err <= 1.0 * eps**alpha


def test_mollify_contracts_sup_and_holder():
    f = holder_abs(0.5, 1.0)
    fe = mollify(f, 0.2)
    x = np.linspace(-3, 3, 601)
    assert np.max(np.abs(fe(x))) <= np.max(np.abs(f(np.linspace(-5, 5, 100_001)))) + 1e-12
    assert holder_norm(fe, (-1, 1), 801, 0.5) <= holder_norm(f, (-1, 1), 801, 0.5) * (1 + 1e-6)


# --- Sobolev norms --------------------------------------------------------------------

def _indicator_transform_sq(u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (2 - 2 * np.cos(u)) / (2 * math.pi * u * u)
    return np.where(u == 0, 1 / (2 * math.pi), val)


def _direct_indicator_norm(s, u_max=2e5):
    g = lambda u: (1 + u) ** (2 * s) * float(_indicator_transform_sq(u))
    edges = np.arange(0.0, u_max, 2 * math.pi * 50)
    body = sum(integrate.quad(g, a, b, limit=500)[0] for a, b in zip(edges[:-1], edges[1:]))
    # oscillation averages out in the far tail
    # substitute u = 1/t
    tail = integrate.quad(lambda t: (1 + 1 / t) ** (2 * s) / math.pi, 0.0, 1 / edges[-1])[0]
    return math.sqrt(2 * (body + tail) / math.sqrt(2 * math.pi))


def test_sobolev_s0_plancherel():
    with warnings.catch_warnings():
        warnings.simplefilter("error", SupportWarning)
        val = sobolev_norm(indicator(0.0, 1.0), 0.0)
    # (2 pi)^{-1/2} * int |Ff|^2 du with int |Ff|^2 = ||f||^2_{L^2} = 1
    assert val ** 2 == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-4)
    assert val == pytest.approx(_direct_indicator_norm(0.0), rel=1e-4)


def test_sobolev_indicator_quarter():
    assert sobolev_norm(indicator(0.0, 1.0), 0.25) == pytest.approx(
        _direct_indicator_norm(0.25), rel=0.01)


def test_sobolev_indicator_blows_up_towards_half():
    vals = [sobolev_norm(indicator(0.0, 1.0), s, fft_points=2**16) for s in (0.40, 0.45, 0.49)]
    assert vals[1] > 1.1 * vals[0] and vals[2] > 1.1 * vals[1]


def test_sobolev_monotone_in_s():
    f = mollify(indicator(-0.5, 0.5), 0.2)
    vals = [sobolev_norm(f, s, box=(-8, 8), fft_points=2**12) for s in np.linspace(0, 1, 6)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_sobolev_support_warning():
    with pytest.warns(SupportWarning):
        sobolev_norm(indicator(0.0), 0.2, box=(-4, 4), fft_points=1024)


def test_sobolev_argument_checks():
    with pytest.raises(DomainError):
        sobolev_norm(identity(), 1.5)
    with pytest.raises(DomainError):
        sobolev_norm(identity(), 0.5, fft_points=1000)


# --- weighted H1 -----------------------------------------------------------------------

def test_weighted_h1_identity():
    assert weighted_h1_norm(identity()) == pytest.approx(2.0, abs=1e-4)


def test_weighted_h1_constant():
    assert weighted_h1_norm(constant(-1.5)) == pytest.approx(1.5, rel=1e-10)


def test_weighted_h1_mollified_indicator_gradient_growth():
    def grad_term(eps):
        fe = mollify(indicator(0.0), eps)
        return weighted_h1_norm(fe) - mu_norm(fe)

    g = [grad_term(e) for e in (0.1, 0.05, 0.025)]
    for a, b in zip(g, g[1:]):
        assert b / a == pytest.approx(math.sqrt(2), rel=0.15)


# --- homogeneity --------------------------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3))
def test_norms_absolutely_homogeneous(a):
    f = mollify(indicator(-1.0, 1.0), 0.3)
    g = f.scaled(a)
    assert mu_norm(g) == pytest.approx(abs(a) * mu_norm(f), rel=1e-10)
    assert holder_norm(g, (-2, 2), 201, 0.5) == pytest.approx(
        abs(a) * holder_norm(f, (-2, 2), 201, 0.5), rel=1e-10)
    assert sobolev_norm(g, 0.3, (-8, 8), 2**12) == pytest.approx(
        abs(a) * sobolev_norm(f, 0.3, (-8, 8), 2**12), rel=1e-10)
    assert weighted_h1_norm(g) == pytest.approx(abs(a) * weighted_h1_norm(f), rel=1e-10)
