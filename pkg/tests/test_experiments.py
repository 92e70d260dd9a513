import math

import numpy as np
import pytest

import occtime.experiments as ex
from occtime.core import DomainError, SeedSpec, make_grid
from occtime.experiments import (BoundReport, ErrorEstimate, bound_check, bound_values,
                                 config_digest, ergodic_sweep, fit_loglog, folding_stability,
                                 mc_l2_error, nonstationary_check, psi_check, rate_sweep,
                                 resolve_truth, sweep_errors)
from occtime.funcspace import constant, hermite, identity, indicator, state_vector
from occtime.functionals import UnsupportedCombination
from occtime.processes import BrownianMotion, InitialLaw, JumpProcess, OuProcess
from occtime.spectral import (exact_ergodic_sq_error, exact_sq_error, hermite_decompose,
                              jump_decompose)

OU = OuProcess()
BM = BrownianMotion()


def _reversible(rng, S):
    W = rng.random((S, S))
    W = W + W.T
    return W / W.sum(axis=1, keepdims=True)


def _z(est, target):
    return (est.mean_sq - target) / est.stderr


# --- single-grid estimates ---------------------------------------------------------

def test_constant_function_has_zero_error():
    est = mc_l2_error(OU, constant(2.0), make_grid(1.0, 8), 200, 0)
    assert est.mean_sq == 0.0 and est.stderr == 0.0 and est.rms_stderr == 0.0


def test_min_reps_enforced():
    with pytest.raises(DomainError):
        mc_l2_error(OU, identity(), make_grid(1.0, 8), 50, 0)


def test_bm_identity_closed_form():
    T, n = 1.0, 16
    est = mc_l2_error(BM, identity(), make_grid(T, n), 20_000, 3, InitialLaw.at(0.0))
    assert est.truth_kind == "exact-gaussian"
    assert abs(_z(est, T * (T / n) ** 2 / 3)) <= 3


def test_ou_identity_matches_spectral():
    g = make_grid(2.0, 10)
    target = exact_sq_error(hermite_decompose(identity(), 4), g)
    est = mc_l2_error(OU, identity(), g, 20_000, 5)
    assert abs(_z(est, target)) <= 3


def test_ou_nonaffine_uses_fine_grid():
    est = mc_l2_error(OU, hermite(2), make_grid(1.0, 8), 200, 0)
    assert est.truth_kind == "fine-grid"


def test_reproducible_bitwise():
    a = mc_l2_error(OU, indicator(0.0), make_grid(1.0, 8), 300, 17)
    b = mc_l2_error(OU, indicator(0.0), make_grid(1.0, 8), 300, SeedSpec(17))
    assert a == b
    c = mc_l2_error(OU, indicator(0.0), make_grid(1.0, 8), 300, 18)
    assert c.mean_sq != a.mean_sq


def test_stderr_scales_with_reps():
    g = make_grid(1.0, 8)
    a = mc_l2_error(OU, identity(), g, 4000, 2)
    b = mc_l2_error(OU, identity(), g, 8000, 2)
    assert b.stderr / a.stderr == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_worker_and_batch_determinism(monkeypatch):
    monkeypatch.setattr(ex, "_BATCH_BUDGET", 2000)
    ref = sweep_errors(OU, indicator(0.3), 1.0, [4, 8], 300, 4, refinement=8)[1]
    for workers in (1, 4):
        got = sweep_errors(OU, indicator(0.3), 1.0, [4, 8], 300, 4, refinement=8,
                           workers=workers)[1]
        for n in (4, 8):
            np.testing.assert_array_equal(got[n], ref[n])
    monkeypatch.setattr(ex, "_BATCH_BUDGET", 2**23)
    alone = sweep_errors(OU, indicator(0.3), 1.0, [4, 8], 300, 4, refinement=8)[1]
    np.testing.assert_array_equal(alone[8], ref[8])


def test_truth_resolution():
    jp = JumpProcess(1.0, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert resolve_truth(jp, state_vector([0.0, 1.0])) == "exact-jump"
    assert resolve_truth(BM, identity() + 1.0) == "exact-gaussian"
    assert resolve_truth(OU, indicator(0.0)) == "fine-grid"
    with pytest.raises(UnsupportedCombination):
        resolve_truth(OU, indicator(0.0), "exact-gaussian")
    with pytest.raises(UnsupportedCombination):
        resolve_truth(OU, identity(), "exact-jump")
    with pytest.raises(DomainError):
        resolve_truth(OU, identity(), "oracle")


def test_config_digest_stable():
    a = config_digest(process=OU, f=identity(), T=1.0, n=8)
    assert a == config_digest(process=OuProcess(), f=identity(), T=1.0, n=8)
    assert a != config_digest(process=OU, f=identity(), T=1.0, n=16)
    assert len(a) == 16


def test_oracle_corpus():
    rng = np.random.default_rng(2024)
    hits, total = 0, 20
    for i in range(total):
        if i % 2 == 0:
            T = float(rng.choice([0.5, 1.0, 3.0]))
            n = int(rng.choice([2, 4, 8, 16]))
            g = make_grid(T, n)
            target = exact_sq_error(hermite_decompose(identity(), 4), g)
            est = mc_l2_error(OU, identity(), g, 3000, 100 + i)
        else:
            S = int(rng.integers(2, 5))
            jp = JumpProcess(float(rng.uniform(0.5, 3)), _reversible(rng, S))
            vals = rng.normal(size=S)
            g = make_grid(1.0, int(rng.choice([2, 4, 8])))
            target = exact_sq_error(jump_decompose(jp, vals), g)
            est = mc_l2_error(jp, state_vector(vals), g, 3000, 100 + i)
        hits += abs(_z(est, target)) <= 3
    assert hits >= 19


# --- sweeps and fits -----------------------------------------------------------------------

def test_rate_sweep_needs_increasing_ns():
    with pytest.raises(DomainError):
        rate_sweep(OU, identity(), 1.0, [4, 8, 16], 200, 0)
    with pytest.raises(DomainError):
        rate_sweep(OU, identity(), 1.0, [4, 16, 8, 32], 200, 0)


def test_slope_invariant_under_scaling():
    ns = [4, 8, 16, 32]
    a = rate_sweep(OU, identity(), 1.0, ns, 500, 1)
    b = rate_sweep(OU, identity() * 7.5, 1.0, ns, 500, 1)
    assert b.slope == pytest.approx(a.slope, abs=1e-10)
    assert b.constant == pytest.approx(7.5 * a.constant, rel=1e-10)


def test_rate_sweep_ou_identity_order_one():
    fit = rate_sweep(OU, identity(), 1.0, [8, 16, 32, 64, 128], 2000, 9)
    assert 0.9 <= fit.slope <= 1.1
    assert fit.abscissa == "delta"
    deltas = [p[0] for p in fit.points]
    assert deltas == sorted(deltas, reverse=True)


def test_constant_sweep_is_degenerate():
    fit = rate_sweep(OU, constant(1.0), 1.0, [4, 8, 16, 32], 200, 0)
    assert fit.degenerate and len(fit.excluded) == 4
    assert bound_check(fit, 1.0, 1.0, 1.0).passed


def _fit(deltas, rms):
    ests = [ErrorEstimate(r * r, 0.0, 100, "x") for r in rms]
    return fit_loglog(np.asarray(deltas), ests)


def test_fit_loglog_exact_power():
    d = np.array([0.5, 0.25, 0.125, 0.0625])
    fit = _fit(d, 3.0 * d**0.75)
    assert fit.slope == pytest.approx(0.75, abs=1e-12)
    assert fit.constant == pytest.approx(3.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_bound_values_formula():
    vals = bound_values([0.25], 0.5, 2.0, 4.0, C=8.0, prefactor=1.5, lower_order_norm=3.0)
    assert vals[0] == pytest.approx(8 * 1.5 * 2 * (2 * 0.25**0.75 + 3 * 0.25))


def test_bound_check_pass_and_fail():
    d = np.array([0.5, 0.25, 0.125, 0.0625])
    T, s, norm = 2.0, 1.0, 1.0
    on_bound = math.sqrt(T) * norm * d
    ok = bound_check(_fit(d, on_bound), s, norm, T)
    assert ok.passed and ok.max_ratio == pytest.approx(1.0)
    assert isinstance(ok, BoundReport) and ok.C == 8.0
    bad = bound_check(_fit(d, 9 * on_bound), s, norm, T)
    assert not bad.passed and bad.max_ratio == pytest.approx(9.0)
    edge = bound_check(_fit(d, 8 * on_bound), s, norm, T)
    assert edge.passed


def test_ergodic_sweep_against_exact():
    Ts = [10.0, 20.0, 40.0, 80.0]
    delta = 0.5
    fit = ergodic_sweep(OU, identity(), Ts, delta, 2000, 3)
    model = hermite_decompose(identity(), 4)
    for (T, rms, se), est in zip(fit.points, fit.estimates):
        target = exact_ergodic_sq_error(model, make_grid(T, round(T / delta)))
        assert abs(_z(est, target)) <= 3.5
        assert est.truth_kind == "exact-mean"
    assert -0.6 <= fit.slope <= -0.4


def test_ergodic_sweep_constant_degenerate():
    fit = ergodic_sweep(OU, constant(3.0), [1.0, 2.0, 4.0, 8.0], 0.5, 100, 0)
    assert fit.degenerate
    with pytest.raises(DomainError):
        ergodic_sweep(OU, identity(), [1.0, 2.0, 4.0, 8.3], 0.5, 100, 0)


def test_nonstationary_gaussian_init():
    init = InitialLaw.gaussian(0.0, 0.5)
    fit, report, sup = nonstationary_check(OU, identity(), init, 1.0, [4, 8, 16, 32], 1000, 2,
                                           s=1.0, norm_value=1.0)
    assert sup == pytest.approx(2.0, rel=1e-6)
    assert report.passed
    assert 0.85 <= fit.slope <= 1.15


def test_folding_small_barrier_change():
    rep = folding_stability([4.0, 8.0], identity(), 1.0, [4, 8, 16, 32], 300, 1, refinement=8)
    assert rep.max_rel_change < 0.05
    assert len(rep.rms) == 2 and len(rep.rms[0]) == 4


def test_psi_check_clean():
    rep = psi_check(samples=2000, seed=3, quad_points=6)
    assert rep.exp_violations == 0 and rep.psi_violations == 0
    assert rep.quadrature_max_rel < 1e-8
