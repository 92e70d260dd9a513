import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occtime.core import (DomainError, ObservedPath, SamplePath, SeedSpec, TimeGrid, make_grid,
                          replication_rng, subsample, subsample_values)


@pytest.mark.parametrize("T, n, delta", [(1.0, 4, 0.25), (2.0, 1, 2.0)])
def test_make_grid_delta(T, n, delta):
    g = make_grid(T, n)
    assert g.delta == delta
    assert g.steps_n == n


def test_make_grid_third():
    g = make_grid(1.0, 3)
    assert abs(g.delta - 1 / 3) <= np.spacing(1 / 3)


@pytest.mark.parametrize("T, n", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, -2), (np.inf, 3)])
def test_make_grid_rejects(T, n):
    with pytest.raises(DomainError):
        make_grid(T, n)


@given(st.floats(1e-3, 1e3), st.integers(1, 10_000))
def test_delta_times_n_recovers_T(T, n):
    g = make_grid(T, n)
    assert abs(g.delta * g.steps_n - T) <= 2 * np.spacing(T)
    assert g.times().shape == (n + 1,)


def test_times_and_refine():
    g = make_grid(2.0, 4)
    np.testing.assert_allclose(g.times(), [0, 0.5, 1.0, 1.5, 2.0])
    assert g.refine(8) == make_grid(2.0, 32)


def _fine(steps):
    return SamplePath(make_grid(1.0, steps), np.arange(steps + 1, dtype=float))


@pytest.mark.parametrize("steps, n, idx", [(8, 4, [0, 2, 4, 6]), (4, 4, [0, 1, 2, 3])])
def test_subsample_indices(steps, n, idx):
    obs = subsample(_fine(steps), n)
    np.testing.assert_array_equal(obs.values, idx)
    assert obs.grid == make_grid(1.0, n)


def test_subsample_non_divisible():
    with pytest.raises(DomainError):
        subsample(_fine(6), 4)


@given(st.integers(1, 64))
def test_subsample_matching_n_drops_terminal(n):
    p = _fine(n)
    np.testing.assert_array_equal(subsample(p, n).values, p.values[:-1])


def test_subsample_values_batch():
    vals = np.arange(2 * 9, dtype=float).reshape(2, 9)
    np.testing.assert_array_equal(subsample_values(vals, 4), vals[:, [0, 2, 4, 6]])


def test_path_validation():
    g = make_grid(1.0, 3)
    with pytest.raises(DomainError):
        SamplePath(g, [0.0, 1.0, 2.0])
    with pytest.raises(DomainError):
        SamplePath(g, [0.0, np.nan, 1.0, 2.0])
    with pytest.raises(DomainError):
        ObservedPath(g, [0.0, 1.0])
    p = SamplePath(g, [0.0, 1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        p.values[0] = 5.0


def test_seed_spec_bounds():
    with pytest.raises(DomainError):
        SeedSpec(-1)
    with pytest.raises(DomainError):
        SeedSpec(2**64)
    with pytest.raises(DomainError):
        SeedSpec(1, -3)
    SeedSpec(2**64 - 1, 7)


@settings(max_examples=25)
@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_streams_are_pure_functions_of_seed(master, rep):
    a = SeedSpec(master, rep).generator().standard_normal(5)
    b = replication_rng(master, rep).standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_distinct_replications_differ():
    a = replication_rng(3, 0).standard_normal(4)
    b = replication_rng(3, 1).standard_normal(4)
    assert not np.array_equal(a, b)
