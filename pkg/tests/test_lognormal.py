import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from grftails.lognormal import LogNormalPortfolio, b_for_marginal_tail, one_big_jump_approx, sum_tail_mc
from grftails.streams import Stream
from oracles import lognormal_pair_tail


def three_se(est, exact):
    return abs(est.estimate - exact) <= 3 * est.std_error


def test_single_component_is_exact():
    p = LogNormalPortfolio([0.3], [[0.8]])
    b = 7.0
    exact = stats.norm.sf((math.log(b) - 0.3) / math.sqrt(0.8))
    assert one_big_jump_approx(p, b) == pytest.approx(exact, rel=1e-14)
    assert three_se(sum_tail_mc(p, b, 50_000, Stream(1)), exact)


def test_iid_three():
    p = LogNormalPortfolio(np.zeros(3), np.eye(3))
    assert one_big_jump_approx(p, 20.0) == pytest.approx(3 * stats.norm.sf(math.log(20.0)))


def test_b_zero():
    p = LogNormalPortfolio.equicorrelated(2, 0.5)
    assert sum_tail_mc(p, 0.0, 100, Stream(2)).estimate == 1.0
    with pytest.raises(ValueError):
        one_big_jump_approx(p, 0.0)


@pytest.mark.parametrize("b", [3.0, 12.0])
def test_independent_pair_matches_quadrature(b):
    p = LogNormalPortfolio([0.0, 0.5], np.diag([1.0, 0.6]))
    exact = lognormal_pair_tail([0.0, 0.5], [1.0, 0.6], b)
    assert three_se(sum_tail_mc(p, b, 100_000, Stream(3)), exact)


@pytest.mark.parametrize("tail", [1e-3, 1e-6])
def test_correlated_pair_matches_quadrature(tail):
    p = LogNormalPortfolio.equicorrelated(2, 0.5)
    b = b_for_marginal_tail(p, tail)
    exact = lognormal_pair_tail([0, 0], [1, 1], b, rho=0.5)
    assert three_se(sum_tail_mc(p, b, 100_000, Stream(4)), exact)


def test_ratio_decreases_toward_one():
    p = LogNormalPortfolio.equicorrelated(2, 0.5)
    ratios = []
    for i, tail in enumerate((1e-3, 1e-6, 1e-9, 1e-12)):
        b = b_for_marginal_tail(p, tail)
        est = sum_tail_mc(p, b, 100_000, Stream(5).child(i))
        ratios.append(est.estimate / one_big_jump_approx(p, b))
    assert all(r > 1 for r in ratios)
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


@pytest.mark.xfail(strict=True, reason="at rho=0.5 the exact ratio is still 2.28 at marginal tail 1e-6")
def test_correlated_pair_within_ten_percent_at_1e6():
    p = LogNormalPortfolio.equicorrelated(2, 0.5)
    b = b_for_marginal_tail(p, 1e-6)
    exact = lognormal_pair_tail([0, 0], [1, 1], b, rho=0.5)
    assert exact / one_big_jump_approx(p, b) == pytest.approx(1.0, abs=0.1)


@settings(max_examples=50)
@given(b1=st.floats(1.5, 1e4), factor=st.floats(1.01, 100.0), rho=st.floats(-0.45, 0.9))
def test_approx_decreasing_in_b(b1, factor, rho):
    p = LogNormalPortfolio.equicorrelated(3, rho)
    assert one_big_jump_approx(p, b1 * factor) <= one_big_jump_approx(p, b1)


@settings(max_examples=50)
@given(c=st.floats(0.01, 100.0), b=st.floats(0.5, 1e3), mu=st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_scaling_equivariance(c, b, mu):
    cov = [[1.0, 0.3], [0.3, 2.0]]
    base = one_big_jump_approx(LogNormalPortfolio(mu, cov), b)
    shifted = one_big_jump_approx(LogNormalPortfolio(np.add(mu, math.log(c)), cov), c * b)
    assert shifted == pytest.approx(base, rel=1e-9, abs=1e-300)


def test_worker_count_does_not_change_estimate():
    p = LogNormalPortfolio.equicorrelated(3, 0.4)
    b = b_for_marginal_tail(p, 1e-5)
    one = sum_tail_mc(p, b, 35_000, Stream(6), workers=1)
    many = sum_tail_mc(p, b, 35_000, Stream(6), workers=4)
    assert one == many


def test_covariance_validation():
    with pytest.raises(ValueError, match="symmetric"):
        LogNormalPortfolio([0, 0], [[1, 0.5], [0.2, 1]])
    with pytest.raises(ValueError, match="positive definite"):
        LogNormalPortfolio([0, 0], [[1, 1], [1, 1]])
    with pytest.raises(ValueError):
        LogNormalPortfolio([0, 0, 0], np.eye(2))
