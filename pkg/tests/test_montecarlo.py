import math

import numpy as np
import pytest
from scipy import stats

from lognsum.core import GaussianParams, SumProblem
from lognsum.curves import DistributionCurve
from lognsum.errors import DomainError, InvalidParameterError, UnsupportedError
from lognsum.montecarlo import (
    MCConfig,
    RNG_ALGORITHM,
    empirical_cdf,
    empirical_histogram,
    outage_conditional_mc,
    outage_estimate,
    outage_probability,
    sample_sum,
)

P = GaussianParams(0.0, 1.0)


def test_same_seed_same_numbers(monkeypatch):
    g = np.geomspace(0.5, 10, 7)
    mc = MCConfig(samples=300_000, seed=42, batch=50_000)
    a = empirical_cdf([P, P], g, mc)
    monkeypatch.setenv("LOGNSUM_THREADS", "1")
    b = empirical_cdf([P, P], g, mc)
    assert np.array_equal(a.cdf, b.cdf) and np.array_equal(a.stderr, b.stderr)
    c = empirical_cdf([P, P], g, MCConfig(samples=300_000, seed=43, batch=50_000))
    assert not np.array_equal(a.cdf, c.cdf)
    assert a.rng == RNG_ALGORITHM and "Philox" in a.rng


def test_counts_match_sorted_samples():
    mc = MCConfig(samples=100_001, seed=7, batch=30_000)
    s = np.sort(sample_sum([P, P, P], mc))
    assert s.size == 100_001 and np.all(np.isfinite(s))
    g = np.array([1.0, 3.0, 3.0, 9.0])
    curve = empirical_cdf([P, P, P], g, mc)
    assert np.array_equal(curve.cdf * mc.samples, np.searchsorted(s, g, side="right"))


def test_single_lognormal_cdf():
    g = np.geomspace(0.1, 10, 9)
    c = empirical_cdf(P, g, MCConfig(samples=1_000_000, seed=1))
    ref = stats.lognorm.cdf(g, s=1.0)
    assert np.all(np.abs(c.cdf - ref) < 4 * c.stderr + 1e-12)
    assert np.allclose(c.ccdf, 1 - c.cdf)


def test_stderr_is_honest():
    # standardised errors over many seeds should look N(0, 1)
    ref = stats.lognorm.cdf(1.5, s=1.0)
    z = []
    for seed in range(100):
        c = empirical_cdf(P, [1.5], MCConfig(samples=20_000, seed=seed, batch=5_000))
        z.append((c.cdf[0] - ref) / c.stderr[0])
    chi2 = float(np.sum(np.square(z)))
    assert stats.chi2.sf(chi2, 100) > 1e-3 and stats.chi2.cdf(chi2, 100) > 1e-3


def test_histogram_density():
    edges = np.linspace(0.2, 4.0, 20)
    dens, se = empirical_histogram(P, edges, MCConfig(samples=1_000_000, seed=3))
    exact = np.diff(stats.lognorm.cdf(edges, s=1.0)) / np.diff(edges)
    assert np.all(np.abs(dens - exact) < 4 * se)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        MCConfig(samples=0)
    with pytest.raises(InvalidParameterError):
        MCConfig(seed=-1)
    with pytest.raises(InvalidParameterError):
        empirical_cdf(P, [2.0, 1.0], MCConfig(samples=10))


def test_outage_estimators_agree():
    sig = GaussianParams(1.0, 1.0)
    intf = [GaussianParams(0.0, 1.0)] * 3
    mc = MCConfig(samples=1_000_000, seed=11)
    for marg in (True, False):
        direct = outage_estimate(sig, intf, 1.0, "mc", mc, marginalize=marg)
        cond, err = outage_conditional_mc(sig, intf, 1.0, mc, marginalize=marg)
        assert abs(direct.value - cond) < 4 * math.hypot(direct.stderr, err)
        assert direct.marginalized is marg


def test_outage_without_signal_fading_is_a_ccdf():
    sig = GaussianParams(math.log(2.0), 1.0)
    v = outage_probability(sig, [P], 1.0, "mc", MCConfig(samples=500_000, seed=4), marginalize=False)
    # P[2 / e^X <= 1] = P[X >= ln 2]
    assert abs(v - stats.norm.sf(math.log(2.0))) < 4 * math.sqrt(0.25 / 500_000)


def test_analytic_outage_methods():
    sig = GaussianParams(1.0, 1.0)
    intf = [P, P]
    mc_val = outage_estimate(sig, intf, 1.0, "mc", MCConfig(samples=1_000_000, seed=9))
    bnd = outage_probability(sig, intf, 1.0, "bound", delta=100.0)
    far = outage_probability(sig, intf, 1.0, "farley")
    clt = outage_probability(sig, intf, 1.0, "clt")
    assert bnd <= mc_val.value + 3 * mc_val.stderr
    assert far <= mc_val.value + 3 * mc_val.stderr
    assert abs(bnd - mc_val.value) < 0.01
    assert 0.0 <= clt <= 1.0
    assert outage_probability(sig, intf, np.inf, "farley") == 1.0


def test_outage_errors():
    with pytest.raises(UnsupportedError):
        outage_probability(P, [P], 1.0, "nope")
    with pytest.raises(UnsupportedError):
        outage_probability(P, [P, GaussianParams(0.0, 2.0)], 1.0, "clt")
    with pytest.raises(DomainError):
        outage_probability(P, [P], 0.0, "farley")


def test_distribution_curve():
    g = np.array([1.0, 2.0])
    curve = DistributionCurve(g).with_method("mc", [0.2, 0.6], [0.01, 0.02]).with_method("bound", [0.3, 0.7])
    assert np.allclose(curve.ccdf("bound"), [0.7, 0.3])
    lo, hi = curve.confidence_interval("mc", z=2.0)
    assert np.allclose(lo, [0.18, 0.56]) and np.allclose(hi, [0.22, 0.64])
    with pytest.raises(InvalidParameterError):
        DistributionCurve(g, {"x": np.zeros(3)})
