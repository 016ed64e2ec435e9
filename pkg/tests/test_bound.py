import math

import numpy as np
import pytest
from scipy import stats

from lognsum.bound import (
    gm_bound_cdf,
    left_tail_cdf,
    left_tail_logcdf,
    left_tail_params,
    tm_bound_cdf,
    tm_bound_pdf,
    tm_threshold,
)
from lognsum.core import GaussianParams, SumProblem
from lognsum.errors import DomainError, InvalidParameterError
from lognsum.mellin import convolution_log_cdf
from lognsum.montecarlo import MCConfig, empirical_cdf, empirical_histogram


def test_single_term_bound_is_exact():
    # with N = 1 the tangential mean equals the variable itself
    p = SumProblem.iid(1, 0.3, 1.2, 10.0)
    g = np.geomspace(1e-3, 1e3, 13)
    res = tm_bound_cdf(g, p)
    ref = stats.lognorm.cdf(g, s=1.2, scale=math.exp(0.3))
    assert np.all(np.abs(res.value - ref) <= 1e-8 * ref + 1e-12)
    assert np.all(np.abs(res.ccdf - (1 - ref)) <= 1e-8 * (1 - ref) + 1e-12)
    assert np.all(res.diagnostics < 1e-6)


def test_endpoints():
    p = SumProblem.iid(2, 0.0, 1.0, 10.0)
    res = tm_bound_cdf([0.0, np.inf], p)
    assert res.value.tolist() == [0.0, 1.0]
    assert res.ccdf.tolist() == [1.0, 0.0]
    with pytest.raises(InvalidParameterError):
        tm_bound_cdf(1.0, SumProblem.iid(2, 0.0, 1.0, 0.0))
    with pytest.raises(DomainError):
        tm_bound_cdf(-1.0, p)


def test_threshold_without_overflow():
    c = tm_threshold(1e300, 6, 100.0)
    assert np.isfinite(c) and abs(c - 6 * math.log1p(1e300 / 600)) < 1e-9


def test_n2_matches_direct_convolution():
    p = SumProblem.iid(2, 0.0, 1.0, 10.0)
    g = np.array([0.05, 0.5, 2.0, 8.0, 40.0])
    ref = convolution_log_cdf(tm_threshold(g, 2, 10.0), p)
    got = tm_bound_cdf(g, p).value
    assert np.all(np.abs(got - ref) <= 1e-7 * ref)


def test_gm_bound_closed_form():
    p = GaussianParams(0.4, 0.7)
    assert gm_bound_cdf(math.exp(0.4), [p]) == pytest.approx(0.5, abs=1e-15)
    comps = [GaussianParams(0.0, 1.0), GaussianParams(0.5, 0.5)]
    g = np.array([0.1, 1.0, 7.0])
    ref = stats.norm.cdf((2 * np.log(g / 2) - 0.5) / math.sqrt(1.25))
    assert np.allclose(gm_bound_cdf(g, comps), ref, rtol=1e-13, atol=0)


def test_left_tail_is_geometric_mean_bound():
    comps = [GaussianParams(0.1, 1.0), GaussianParams(-0.3, 0.6), GaussianParams(0.0, 1.4)]
    g = np.geomspace(1e-6, 1e2, 30)
    assert np.allclose(left_tail_cdf(g, comps), gm_bound_cdf(g, comps), rtol=1e-12, atol=0)
    assert np.allclose(left_tail_logcdf(g, comps), np.log(left_tail_cdf(g, comps)), rtol=1e-12)
    hat = left_tail_params(SumProblem.iid(2, 0.0, 1.0))
    assert hat.mu == pytest.approx(math.log(2)) and hat.sigma == pytest.approx(math.sqrt(2) / 2)
    # deep tail keeps a finite log
    assert np.isfinite(left_tail_logcdf(1e-30, comps)) and left_tail_logcdf(1e-30, comps) < -100


def test_tm_between_gm_and_truth_and_tightens_with_delta():
    g = np.geomspace(0.3, 30, 10)
    gm = gm_bound_cdf(g, SumProblem.iid(2, 0.0, 1.0))
    prev = gm
    for delta in (1.0, 10.0, 100.0):
        tm = tm_bound_cdf(g, SumProblem.iid(2, 0.0, 1.0, delta)).value
        assert np.all(tm <= prev + 1e-10)
        prev = tm
    emp = empirical_cdf(SumProblem.iid(2, 0.0, 1.0), g, MCConfig(samples=1_000_000, seed=5))
    assert np.all(prev >= emp.cdf - 3 * emp.stderr)


def test_pdf_is_derivative_of_cdf():
    p = SumProblem.iid(2, 0.0, 1.0, 10.0)
    x = np.array([0.5, 2.0, 6.0])
    h = 1e-4
    fd = (tm_bound_cdf(x + h, p).value - tm_bound_cdf(x - h, p).value) / (2 * h)
    assert np.allclose(tm_bound_pdf(x, p), fd, rtol=1e-6)
    assert tm_bound_pdf(0.0, p) == 0.0


def test_pdf_close_to_sum_density_for_large_delta():
    edges = np.linspace(0.5, 8.0, 16)
    dens, se = empirical_histogram(SumProblem.iid(2, 0.0, 1.0), edges, MCConfig(samples=2_000_000, seed=8))
    mid = 0.5 * (edges[1:] + edges[:-1])
    f = tm_bound_pdf(mid, SumProblem.iid(2, 0.0, 1.0, 1000.0))
    # the bound density tends to the sum density; bins are wide, so compare loosely
    assert np.max(np.abs(f - dens)) < 0.02
