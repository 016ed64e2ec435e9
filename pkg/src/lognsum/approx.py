"""Closed-form approximations to the CDF of a sum of i.i.d. lognormals.

The N = 2 form replaces E[g(X)] over X truncated at ln(gamma) by g(E[X]),
with g(x) = 1 - Q((ln(gamma - e^x) - mu)/sigma); larger N repeat the step on
the remaining threshold.  Also here: Farley's order-statistics bound, the
concavity point x0 of g, Gauss-Hermite rules and the large-N CLT form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg, optimize, special

from .core import GaussianParams, q_function
from .errors import DomainError, InvalidParameterError, NoRootError, TailUnderflowError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RecursionState:
    """One step k of the recursive approximation."""

    k: int
    gamma_k: float  # threshold entering step k (gamma_{k-1} in the recursion)
    mu_k: float
    c_k: float
    cdf_partial: float  # product C_2 ... C_k


@dataclass(frozen=True)
class GaussHermiteRule:
    """Physicists' Gauss-Hermite rule, weight exp(-x^2)."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray


def _scalar(a):
    a = np.asarray(a)
    return a[()] if a.ndim == 0 else a


def _positive_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("gamma must be > 0")
    return g


def _cdf_z(z):
    """1 - Q(z), accurate in the left tail."""
    return special.ndtr(z)


def farley_ccdf(gamma, params: GaussianParams, n: int):
    """1 - (1 - Q((ln gamma - mu)/sigma))^N, a lower bound on the CCDF of the sum."""
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    g = _positive_gamma(gamma)
    z = (np.log(g) - params.mu) / params.sigma
    return _scalar(-np.expm1(n * special.log_ndtr(z)))


def conditional_mean_and_norm(ln_cap: float, params: GaussianParams) -> tuple[float, float]:
    """Mean of X ~ N(mu, sigma^2) truncated to X <= ln_cap, and P(X <= ln_cap)."""
    if math.isnan(ln_cap) or ln_cap == -math.inf:
        raise DomainError(f"ln_cap must be finite, got {ln_cap}")
    z = (ln_cap - params.mu) / params.sigma
    c = float(special.ndtr(z))
    if c == 0.0:
        raise TailUnderflowError(f"normalisation underflows at z = {z:.1f}")
    if z == math.inf:
        return params.mu, 1.0
    # phi(z)/Phi(z) through logs: both factors underflow together for z << 0
    ratio = math.exp(-0.5 * z * z - _LOG_SQRT_2PI - float(special.log_ndtr(z)))
    return params.mu - params.sigma * ratio, c


def recursion_trace(gamma: float, params: GaussianParams, n: int) -> tuple[list[RecursionState], float]:
    """Steps of the recursive approximation and its value at one gamma."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if not gamma > 0:
        raise DomainError("gamma must be > 0")
    states: list[RecursionState] = []
    cap = float(gamma)
    prod = 1.0
    for k in range(2, n + 1):
        if not cap > 0:
            return states, 0.0
        try:
            mu_k, c_k = conditional_mean_and_norm(math.log(cap), params)
        except TailUnderflowError:
            return states, 0.0
        prod *= c_k
        states.append(RecursionState(k=k, gamma_k=cap, mu_k=mu_k, c_k=c_k, cdf_partial=prod))
        cap = cap - math.exp(mu_k)
    # cap is now gamma_{n-1} - e^{mu_n}
    if not cap > 0:
        return states, 0.0
    last = float(_cdf_z((math.log(cap) - params.mu) / params.sigma))
    return states, prod * last


def approx_recursive(gamma, params: GaussianParams, n: int):
    """CDF approximation C_2 ... C_n (1 - Q((ln(gamma_{n-1} - e^{mu_n}) - mu)/sigma)).

    gamma_1 = gamma and gamma_k = gamma_{k-1} - e^{mu_k}; the value is
    clamped to 0 once a remaining threshold is not positive.
    """
    g = _positive_gamma(gamma)
    out = np.array([recursion_trace(float(v), params, n)[1] for v in g.ravel()]).reshape(g.shape)
    return _scalar(out)


def approx_n2(gamma, params: GaussianParams):
    """C_2(gamma) (1 - Q((ln(gamma - e^{mu_2(gamma)}) - mu)/sigma)) for two i.i.d. terms."""
    return approx_recursive(gamma, params, 2)


# ---------------------------------------------------------------------------
# concavity diagnostic


def _x0_residual(x: float, gamma: float, params: GaussianParams) -> float:
    ex = math.exp(x)
    return gamma * params.sigma ** 2 + ex * math.log(gamma - ex) - params.mu * ex


@dataclass(frozen=True)
class X0Solution:
    x0: float
    epsilon: float  # ln(gamma) - x0
    residual: float  # left-hand side of the defining equation at x0


def x0_solution(gamma: float, params: GaussianParams) -> X0Solution:
    """Solve gamma sigma^2 + e^x ln(gamma - e^x) - mu e^x = 0 for x < ln gamma.

    Dividing by gamma and writing w = e^{-eps}, eps = ln(gamma) - x, gives
    sigma^2 + w (A + ln(1 - w)) with A = ln(gamma) - mu.  The second term is
    concave in w on (0, 1), zero at w = 0 and tends to -inf as w -> 1, so
    the root is unique; it is bracketed explicitly and found by brentq.
    """
    if not gamma > 0:
        raise DomainError("gamma must be > 0")
    s2 = params.sigma ** 2
    a = math.log(gamma) - params.mu

    def G(eps):
        return s2 + math.exp(-eps) * (a + math.log(-math.expm1(-eps)))

    lo_exp = -(s2 + max(a, 0.0)) - 5.0
    if lo_exp < -700.0:
        raise NoRootError(f"root lies below double range for gamma={gamma}", None)
    lo = math.exp(lo_exp)
    hi = max(1.0, math.log((abs(a) + 1.0) / s2) + 2.0)
    if not (G(lo) < 0 < G(hi)):
        raise NoRootError(f"no sign change on [{lo:.3g}, {hi:.3g}] for gamma={gamma}", None)
    eps = optimize.brentq(G, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    x0 = math.log(gamma) - eps
    return X0Solution(x0=x0, epsilon=eps, residual=_x0_residual(x0, gamma, params))


def x0_solve(gamma, params: GaussianParams):
    """Root x0 of the concavity equation (see ``x0_solution``); array-valued in gamma."""
    g = np.asarray(gamma, dtype=float)
    out = np.array([x0_solution(float(v), params).x0 for v in g.ravel()]).reshape(g.shape)
    return _scalar(out)


def x0_epsilon(gamma, params: GaussianParams):
    """epsilon = ln(gamma) - x0, computed without cancellation."""
    g = np.asarray(gamma, dtype=float)
    out = np.array([x0_solution(float(v), params).epsilon for v in g.ravel()]).reshape(g.shape)
    return _scalar(out)


def g_function(x, gamma: float, params: GaussianParams):
    return g_derivatives(x, gamma, params)[0]


def g_derivatives(x, gamma: float, params: GaussianParams):
    """g(x) = 1 - Q((ln(gamma - e^x) - mu)/sigma) and its first two derivatives."""
    if not gamma > 0:
        raise DomainError("gamma must be > 0")
    x = np.asarray(x, dtype=float)
    lg = math.log(gamma)
    if np.any(~(x < lg)):
        raise DomainError("x must be below ln(gamma)")
    mu, sigma = params.mu, params.sigma
    # gamma - e^x without cancellation near x = ln(gamma)
    rest = -gamma * np.expm1(x - lg)
    lr = np.log(rest)
    z = (lr - mu) / sigma
    g = _cdf_z(z)
    core = np.exp(x - 0.5 * z * z) / (_SQRT_2PI * sigma * rest)
    dg = -core
    d2g = -core * (gamma * sigma ** 2 + np.exp(x) * (lr - mu)) / (sigma ** 2 * rest)
    return _scalar(g), _scalar(dg), _scalar(d2g)


# ---------------------------------------------------------------------------
# Gauss-Hermite and the large-N form


@lru_cache(maxsize=64)
def _hermite(m: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if m == 1:
        return (0.0,), (math.sqrt(math.pi),)
    off = np.sqrt(np.arange(1, m) / 2.0)
    nodes, vecs = linalg.eigh_tridiagonal(np.zeros(m), off)
    weights = math.sqrt(math.pi) * vecs[0, :] ** 2
    # exact symmetry about zero
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return tuple(nodes), tuple(weights)


def gauss_hermite_rule(m: int) -> GaussHermiteRule:
    """Order-m rule from the eigen-decomposition of the Hermite Jacobi matrix."""
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= 64:
        raise InvalidParameterError(f"order must be an integer in [1, 64], got {m!r}")
    nodes, weights = _hermite(int(m))
    return GaussHermiteRule(order=int(m), nodes=np.array(nodes), weights=np.array(weights))


def _log_shifted(delta: float, y):
    """ln(delta + e^y) without overflow."""
    if delta == 0:
        return np.asarray(y, dtype=float)
    return np.logaddexp(math.log(delta), y)


def clt_moments(params: GaussianParams, delta: float, n: int, m_order: int = 20) -> tuple[float, float]:
    """(mu_tilde, sigma_tilde) of ln(Z_N^(1/N)) by Gauss-Hermite quadrature.

    The variance is accumulated about mu_tilde, which equals the raw second
    moment minus mu_tilde^2 but does not cancel when delta is large.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if not delta >= 0 or not math.isfinite(delta):
        raise InvalidParameterError(f"delta must be finite and >= 0, got {delta}")
    rule = gauss_hermite_rule(m_order)
    w = rule.weights / math.sqrt(math.pi)
    vals = _log_shifted(delta, math.sqrt(2.0) * params.sigma * rule.nodes + params.mu)
    mu_t = float(np.dot(w, vals))
    var = float(np.dot(w, (vals - mu_t) ** 2)) / n
    return mu_t, math.sqrt(max(var, 0.0))


def clt_cdf(gamma, params: GaussianParams, delta: float, n: int, m_order: int = 20):
    """1 - Q((ln(gamma/N + delta) - mu_tilde)/sigma_tilde)."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise DomainError("gamma must be >= 0")
    mu_t, sig_t = clt_moments(params, delta, n, m_order)
    with np.errstate(divide="ignore"):
        z = (np.log(g / n + delta) - mu_t) / sig_t
    return _scalar(_cdf_z(z))


def clt_ccdf(gamma, params: GaussianParams, delta: float, n: int, m_order: int = 20):
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise DomainError("gamma must be >= 0")
    mu_t, sig_t = clt_moments(params, delta, n, m_order)
    with np.errstate(divide="ignore"):
        z = (np.log(g / n + delta) - mu_t) / sig_t
    return _scalar(q_function(z))
