"""Summary statistics and the two-sample KS statistic."""

import numpy as np
import pytest
from const import ks_critical
from errors import InvalidArgumentError
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from stats import column_stats, ks_two_sample, pairwise_sum, summary_stats
from utils import make_generator


def _brute_force_ks(a, b):
    grid = np.concatenate((a, b))
    fa = np.array([np.mean(np.asarray(a) <= x) for x in grid])
    fb = np.array([np.mean(np.asarray(b) <= x) for x in grid])
    return float(np.max(np.abs(fa - fb)))


def test_summary_examples():
    ones = summary_stats([1.0, 1.0, 1.0, 1.0])
    assert ones.mean == 1.0 and ones.standard_error == 0.0
    pair = summary_stats([0.0, 2.0])
    assert pair.mean == 1.0
    assert pair.standard_error == pytest.approx(1.0)


def test_summary_normal_draws():
    draws = make_generator(7).standard_normal(10000)
    assert abs(summary_stats(draws).mean) <= 3 * 0.01


@pytest.mark.parametrize("samples", [[], [1.0]])
def test_summary_needs_two_samples(samples):
    with pytest.raises(InvalidArgumentError):
        summary_stats(samples)


def test_column_stats_matches_summary():
    m = make_generator(11).standard_normal((50, 4))
    means, se = column_stats(m)
    for j in range(4):
        s = summary_stats(m[:, j])
        assert means[j] == pytest.approx(s.mean, abs=1e-15)
        assert se[j] == pytest.approx(s.standard_error, rel=1e-12)


def test_column_stats_single_row():
    means, se = column_stats([[1.0, 2.0]])
    assert_allclose(means, [1.0, 2.0])
    assert np.all(np.isnan(se))
    with pytest.raises(InvalidArgumentError):
        column_stats(np.empty((0, 3)))


def test_pairwise_sum_ignores_layout():
    x = make_generator(3).standard_normal((40, 25))
    assert pairwise_sum(x) == pairwise_sum(np.asfortranarray(x).ravel(order="C"))


def test_ks_examples():
    assert ks_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert ks_two_sample([0.0], [1.0]) == 1.0
    assert ks_two_sample([1.0, 2.0, 3.0], [2.0, 3.0, 4.0]) == pytest.approx(1.0 / 3.0)
    assert ks_two_sample(np.zeros(20), np.ones(30)) == 1.0


def test_ks_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        ks_two_sample([], [1.0])


@given(
    st.lists(st.integers(-5, 5), min_size=1, max_size=30),
    st.lists(st.integers(-5, 5), min_size=1, max_size=30),
)
def test_ks_matches_cdf_sweep(a, b):
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    assert ks_two_sample(a, b) == pytest.approx(_brute_force_ks(a, b), abs=1e-12)


def test_ks_critical_constants():
    assert ks_critical(0.01) == 1.628
    assert ks_critical(0.05) == 1.358
    assert ks_critical(0.02) == pytest.approx(np.sqrt(-np.log(0.01) / 2.0))
