"""Tangential-mean upper bound on the CDF of a lognormal sum, and its left tail.

For any delta > 0 the tangential mean lies below the arithmetic mean, so

    P(S_N <= gamma) <= P(prod_i (delta + e^{X_i}) <= (gamma/N + delta)^N).

The right-hand side is evaluated as P(T <= c) with
T = sum_i log1p(e^{X_i}/delta) and c = N log1p(gamma/(N delta)); the number
(gamma/N + delta)^N itself is never formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mellin
from .core import GaussianParams, SumProblem, log_q_function, q_function
from .errors import DomainError, InvalidParameterError


@dataclass(frozen=True)
class BoundResult:
    """Bound values on a gamma grid with the achieved inversion error per point.

    ``value`` is the CDF bound and ``ccdf`` its complement, computed so that
    both keep relative accuracy in their small tails.
    """

    gamma: np.ndarray
    value: np.ndarray
    ccdf: np.ndarray
    delta: float
    diagnostics: np.ndarray


def _params(params) -> list[GaussianParams]:
    if isinstance(params, SumProblem):
        return list(params.components)
    if isinstance(params, GaussianParams):
        return [params]
    out = list(params)
    if not out:
        raise InvalidParameterError("at least one component is required")
    return out


def tm_threshold(gamma, n: int, delta: float):
    """c = N log1p(gamma / (N delta)), the bound's threshold on T."""
    return n * np.log1p(np.asarray(gamma, dtype=float) / (n * delta))


def tm_bound_cdf(gamma, p: SumProblem, cfg: mellin.QuadratureConfig | None = None) -> BoundResult:
    """Upper bound F_Z((gamma/N + delta)^N) on P(S_N <= gamma)."""
    if not p.delta > 0:
        raise InvalidParameterError("the tangential-mean bound needs delta > 0")
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise DomainError("gamma must be >= 0")
    value = np.zeros(g.shape)
    ccdf = np.ones(g.shape)
    diag = np.zeros(g.shape)
    inf = np.isposinf(g)
    value[inf], ccdf[inf] = 1.0, 0.0
    live = (g > 0) & ~inf
    if np.any(live):
        c = tm_threshold(g[live], p.n, p.delta)
        cdf, cc, diags = mellin.log_product_cdf(c, p, cfg)
        value[live], ccdf[live] = cdf, cc
        diag[live] = [d.relative_error for d in diags]
    return BoundResult(gamma=g, value=value, ccdf=ccdf, delta=p.delta, diagnostics=diag)


def tm_bound_pdf(x, p: SumProblem, cfg: mellin.QuadratureConfig | None = None):
    """(x/N + delta)^(N-1) f_Z((x/N + delta)^N), the derivative of the bound in gamma.

    Tends to the density of S_N as delta grows.
    """
    if not p.delta > 0:
        raise InvalidParameterError("the tangential-mean bound needs delta > 0")
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.zeros(flat.shape)
    live = flat > 0
    if np.any(live):
        t = tm_threshold(flat[live], p.n, p.delta)
        # f_Z(z) dz = f_T(t) dt and dt/dx = 1 / (x/N + delta)
        out[live] = mellin.log_product_pdf(t, p, cfg) / (flat[live] / p.n + p.delta)
    out = out.reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def _lognormal_cdf(log_gamma, mu, sigma):
    # 1 - Q(z) written as Q(-z) keeps the left tail
    return q_function(-(log_gamma - mu) / sigma)


def gm_bound_cdf(gamma, params: Sequence[GaussianParams] | SumProblem):
    """Geometric-mean bound 1 - Q((N ln(gamma/N) - sum mu_i) / sqrt(sum sigma_i^2))."""
    comps = _params(params)
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("gamma must be > 0")
    n = len(comps)
    mu_bar = sum(c.mu for c in comps)
    sigma_bar = np.sqrt(sum(c.sigma ** 2 for c in comps))
    out = _lognormal_cdf(n * np.log(g / n), mu_bar, sigma_bar)
    return out[()] if np.ndim(out) == 0 else out


def left_tail_params(params: Sequence[GaussianParams] | SumProblem) -> GaussianParams:
    """(mu_hat, sigma_hat) = (ln N + mean mu_i, sqrt(sum sigma_i^2) / N)."""
    comps = _params(params)
    n = len(comps)
    mu_hat = np.log(n) + sum(c.mu for c in comps) / n
    sigma_hat = np.sqrt(sum(c.sigma ** 2 for c in comps)) / n
    return GaussianParams(float(mu_hat), float(sigma_hat))


def left_tail_cdf(gamma, params: Sequence[GaussianParams] | SumProblem):
    """Lognormal left-tail form of the bound, 1 - Q((ln gamma - mu_hat)/sigma_hat).

    Algebraically the same function as ``gm_bound_cdf``, written as a single
    lognormal CDF.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("gamma must be > 0")
    hat = left_tail_params(params)
    out = _lognormal_cdf(np.log(g), hat.mu, hat.sigma)
    return out[()] if np.ndim(out) == 0 else out


def left_tail_logcdf(gamma, params: Sequence[GaussianParams] | SumProblem):
    """Natural log of ``left_tail_cdf``, finite deep in the tail."""
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("gamma must be > 0")
    hat = left_tail_params(params)
    out = log_q_function(-(np.log(g) - hat.mu) / hat.sigma)
    return out[()] if np.ndim(out) == 0 else out
