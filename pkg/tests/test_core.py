import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from lognsum.core import (
    DB_LAMBDA,
    GaussianParams,
    ShiftedLognormal,
    SumProblem,
    db_to_natural,
    log_q_function,
    q_function,
    shifted_lognormal_cdf,
    shifted_lognormal_logcdf,
    shifted_lognormal_pdf,
)
from lognsum.errors import InvalidParameterError


def test_q_symmetry_and_reference():
    assert q_function(0.0) == 0.5
    x = np.linspace(-8, 8, 161)
    assert np.max(np.abs(q_function(x) + q_function(-x) - 1.0)) < 1e-12
    assert abs(q_function(1.96) - 0.0249979) < 1e-7
    mp.mp.dps = 30
    for v in (-5.0, -1.0, 0.3, 1.96, 4.0, 7.5):
        ref = float(0.5 * mp.erfc(mp.mpf(v) / mp.sqrt(2)))
        assert abs(q_function(v) - ref) <= 1e-14 * ref


def test_q_monotone_and_log_tail():
    x = np.linspace(-10, 40, 2001)
    assert np.all(np.diff(q_function(x)) <= 0)
    # far below the double underflow point of Q itself
    mp.mp.dps = 30
    ref = float(mp.log(0.5 * mp.erfc(mp.mpf(40) / mp.sqrt(2))))
    assert abs(log_q_function(40.0) - ref) < 1e-12 * abs(ref)
    assert q_function(40.0) < 1e-300


def test_db_conversion():
    p = db_to_natural(0, 10)
    assert p.mu == 0 and abs(p.sigma - 2.302585) < 1e-6
    assert abs(DB_LAMBDA - 0.23026) < 1e-5
    p = db_to_natural(10, 4.34)
    assert abs(p.mu - 2.302585) < 1e-6 and abs(p.sigma - 0.99932) < 1e-5
    assert abs(GaussianParams.from_db(3, 8).sigma_db - 8) < 1e-12
    with pytest.raises(InvalidParameterError):
        db_to_natural(0, 0)


def test_params_validation():
    with pytest.raises(InvalidParameterError):
        GaussianParams(0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        GaussianParams(float("nan"), 1.0)
    with pytest.raises(InvalidParameterError):
        ShiftedLognormal(GaussianParams(0, 1), -1.0)
    with pytest.raises(InvalidParameterError):
        SumProblem([], 1.0)
    p = SumProblem.iid(3, 0.0, 1.0, 2.0)
    assert p.n == 3 and p.is_uniform and p.with_delta(5.0).delta == 5.0


def test_pdf_values_and_support():
    d = ShiftedLognormal(GaussianParams(0, 1), 0.0)
    assert abs(shifted_lognormal_pdf(1.0, d) - 1 / math.sqrt(2 * math.pi)) < 1e-15
    d2 = ShiftedLognormal(GaussianParams(0.3, 0.7), 2.0)
    assert shifted_lognormal_pdf(2.0, d2) == 0.0
    assert shifted_lognormal_pdf(1.0, d2) == 0.0
    val, _ = integrate.quad(lambda u: shifted_lognormal_pdf(2.0 + math.exp(u), d2) * math.exp(u), -20, 20,
                            epsabs=1e-13, limit=200)
    assert abs(val - 1.0) < 1e-10


def test_cdf_properties():
    d = ShiftedLognormal(GaussianParams(0.5, 1.2), 3.0)
    assert shifted_lognormal_cdf(3.0, d) == 0.0
    assert abs(shifted_lognormal_cdf(3.0 + math.exp(0.5), d) - 0.5) < 1e-15
    assert shifted_lognormal_cdf(1e300, d) == 1.0
    g = np.linspace(0, 50, 500)
    assert np.all(np.diff(shifted_lognormal_cdf(g, d)) >= 0)
    assert shifted_lognormal_logcdf(3.0, d) == -np.inf


def test_cdf_is_integral_of_pdf():
    rng = np.random.default_rng(5)
    for _ in range(25):
        mu, sigma, delta = rng.uniform(-1, 1), rng.uniform(0.2, 2.0), rng.uniform(0, 10)
        d = ShiftedLognormal(GaussianParams(mu, sigma), delta)
        gamma = delta + math.exp(mu + sigma * rng.uniform(-2, 2))
        top = math.log(gamma - delta)
        val, _ = integrate.quad(lambda v: shifted_lognormal_pdf(delta + math.exp(v), d) * math.exp(v),
                                mu - 15 * sigma, top, epsabs=1e-13, limit=200)
        assert abs(val - shifted_lognormal_cdf(gamma, d)) < 1e-8


def test_delta_zero_is_plain_lognormal():
    d = ShiftedLognormal(GaussianParams(0.2, 0.9), 0.0)
    y = np.geomspace(0.01, 100, 50)
    z = (np.log(y) - 0.2) / 0.9
    ref_pdf = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * 0.9 * y)
    assert np.allclose(shifted_lognormal_pdf(y, d), ref_pdf, rtol=1e-13, atol=0)
    assert np.allclose(shifted_lognormal_cdf(y, d), 1 - q_function(z), rtol=1e-12, atol=1e-15)
