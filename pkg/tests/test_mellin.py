import math

import numpy as np
import pytest

from lognsum.core import GaussianParams, ShiftedLognormal, SumProblem, shifted_lognormal_pdf
from lognsum.errors import IllConditionedInversionError, InvalidParameterError, UnsupportedError
from lognsum.mellin import (
    ComplexAbscissa,
    QuadratureConfig,
    convolution_log_cdf,
    inversion_integrand,
    log_product_cdf,
    mellin_convolution_pdf,
    mellin_transform,
    mellin_transform_adaptive,
    product_cdf,
    product_cdf_by_quadrature,
    product_pdf,
)
from lognsum.montecarlo import MCConfig, _normals


def _shifted(delta, sigma, mu=0.0):
    return ShiftedLognormal(GaussianParams(mu, sigma), delta)


def test_transform_real_axis():
    d = _shifted(2.0, 1.0)
    assert abs(mellin_transform(d, ComplexAbscissa(1.0, 0.0)) - 1.0) < 1e-10
    assert abs(mellin_transform(d, 2.0) - (2.0 + math.exp(0.5))) < 1e-10
    # third moment E[(2 + e^X)^2] = 4 + 4 e^{1/2} + e^2
    assert abs(mellin_transform(d, 3.0) - (4 + 4 * math.exp(0.5) + math.exp(2.0))) < 1e-9


@pytest.mark.parametrize("delta,sigma", [(2, 1), (2, 2), (10, 1), (10, 2)])
def test_transform_matches_real_line_quadrature(delta, sigma):
    d = _shifted(delta, sigma)
    for s in (1 + 5j, 0.5 + 30j, 2 - 12j, -3 + 2j):
        a = mellin_transform(d, s)
        b = mellin_transform_adaptive(d, s)
        assert abs(a - b) < 1e-8 * max(1.0, abs(b))


def test_transform_conjugate_symmetry_and_decay():
    d = _shifted(2.0, 1.0)
    s = 1.0 + 7.3j
    assert abs(mellin_transform(d, s.conjugate()) - np.conj(mellin_transform(d, s))) < 1e-15
    beta = np.array([20.0, 40.0])
    for sigma in (1.0, 2.0):
        small = np.abs(mellin_transform(_shifted(2.0, sigma), 1 + 1j * beta))
        large = np.abs(mellin_transform(_shifted(10.0, sigma), 1 + 1j * beta))
        assert np.all(large > small)


def test_delta_zero_product_is_lognormal():
    p = SumProblem([GaussianParams(0.2, 0.5), GaussianParams(-0.1, 0.8)], 0.0)
    x = np.geomspace(0.05, 20, 15)
    ref = shifted_lognormal_pdf(x, _shifted(0.0, math.hypot(0.5, 0.8), 0.1))
    assert np.max(np.abs(product_pdf(x, p) - ref)) < 1e-8


def test_round_trip_sigma1():
    for delta in (2.0, 10.0):
        p = SumProblem.iid(1, 0.0, 1.0, delta)
        x = delta + np.exp(np.linspace(-3, 3, 25))
        f, diag = product_pdf(x, p, return_diagnostics=True)
        assert np.max(np.abs(f - shifted_lognormal_pdf(x, _shifted(delta, 1.0)))) < 1e-9
        assert diag.truncation < 1e-6 and diag.transform < 1e-10


def test_below_support_is_zero():
    p = SumProblem.iid(2, 0.0, 1.0, 2.0)
    assert np.all(product_pdf(np.array([1.0, 3.9, 4.0]), p) == 0.0)
    assert product_cdf(4.0, p) == 0.0
    assert mellin_convolution_pdf(3.99, p) == 0.0


def test_alpha_independence_fast():
    p = SumProblem.iid(2, 0.0, 1.0, 2.0)
    x = np.geomspace(4.5, 100, 10)
    vals = [product_pdf(x, p, QuadratureConfig(alpha=a)) for a in (0.5, 1.0, 2.0)]
    assert np.max(np.abs(vals[0] - vals[1])) < 1e-8 and np.max(np.abs(vals[2] - vals[1])) < 1e-8


def test_hermitian_integrand():
    p = SumProblem.iid(2, 0.0, 1.0, 2.0)
    beta = np.array([0.5, 3.0, 17.0])
    plus = inversion_integrand(9.0, p, beta)
    minus = inversion_integrand(9.0, p, -beta)
    assert np.max(np.abs(minus - np.conj(plus))) < 1e-14


def test_n2_inversion_vs_convolution():
    p = SumProblem.iid(2, 0.0, 1.0, 2.0)
    x = np.geomspace(4.2, 150, 20)
    assert np.max(np.abs(product_pdf(x, p) - mellin_convolution_pdf(x, p))) < 1e-6


def test_nonuniform_inversion_vs_convolution():
    p = SumProblem([GaussianParams(0.0, 0.7), GaussianParams(0.5, 1.3)], 3.0)
    x = np.geomspace(9.5, 300, 12)
    assert np.max(np.abs(product_pdf(x, p) - mellin_convolution_pdf(x, p))) < 1e-6


def test_n3_inversion_vs_convolution():
    p = SumProblem.iid(3, 0.0, 1.0, 2.0)
    x = np.geomspace(8.5, 600, 6)
    assert np.max(np.abs(product_pdf(x, p) - mellin_convolution_pdf(x, p))) < 1e-6


def test_convolution_size_limits():
    p1 = SumProblem.iid(1, 0.0, 1.0, 2.0)
    assert mellin_convolution_pdf(3.0, p1) == pytest.approx(float(shifted_lognormal_pdf(3.0, _shifted(2.0, 1.0))))
    with pytest.raises(UnsupportedError):
        mellin_convolution_pdf(100.0, SumProblem.iid(4, 0.0, 1.0, 2.0))


def _product_samples(n, delta, samples, seed):
    gen = np.random.Generator(np.random.Philox(seed))
    z = _normals(gen, (n, samples))
    return np.prod(delta + np.exp(z), axis=0)


def test_n2_density_vs_monte_carlo():
    z = _product_samples(2, 2.0, 10_000_000, 3)
    h = 0.05
    frac = np.count_nonzero(np.abs(z - 9.0) < h) / z.size
    est, se = frac / (2 * h), math.sqrt(frac * (1 - frac) / z.size) / (2 * h)
    assert abs(mellin_convolution_pdf(9.0, SumProblem.iid(2, 0.0, 1.0, 2.0)) - est) < 3 * se


def test_product_cdf_vs_monte_carlo_and_quadrature():
    p = SumProblem.iid(2, 0.0, 1.0, 2.0)
    g = np.geomspace(4.2, 150, 20)
    c = product_cdf(g, p)
    z = np.sort(_product_samples(2, 2.0, 2_000_000, 9))
    emp = np.searchsorted(z, g, side="right") / z.size
    se = np.sqrt(emp * (1 - emp) / z.size)
    assert np.all(np.abs(c - emp) < 3 * se + 1e-12)
    for gz in g[::5]:
        assert abs(product_cdf(gz, p) - product_cdf_by_quadrature(gz, p)) < 1e-8
    assert abs(product_cdf(1e12, p) - 1.0) < 1e-4
    assert product_cdf(np.inf, p) == 1.0


def test_cdf_tails_keep_relative_accuracy():
    p = SumProblem.iid(3, 0.0, 2.0, 100.0)
    t = np.array([1e-4, 1e-3, 0.5, 3.0])
    cdf, ccdf, _ = log_product_cdf(t, p)
    ref = convolution_log_cdf(t, p)
    assert np.all(np.abs(cdf - ref) < 1e-7 * ref)
    assert np.all(np.abs(ccdf - (1 - ref)) < 1e-7 * np.maximum(1 - ref, 1e-300) + 1e-15)


def test_user_truncation_too_short_is_reported():
    p = SumProblem.iid(1, 0.0, 2.0, 10.0)
    with pytest.raises(IllConditionedInversionError):
        product_pdf(12.0, p, QuadratureConfig(beta_max=50.0))


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        QuadratureConfig(beta_steps=1)
    with pytest.raises(InvalidParameterError):
        QuadratureConfig(tail_tol=0)
    with pytest.raises(InvalidParameterError):
        QuadratureConfig(cdf_alpha=1.0)
