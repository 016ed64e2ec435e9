"""Gaussian tail function, shifted lognormal distributions and dB conversion."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import InvalidParameterError

#: dB-to-natural-log scale factor, ln(10)/10.
DB_LAMBDA = math.log(10.0) / 10.0

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    """Mean and standard deviation of the normal exponent X, in natural-log units."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise InvalidParameterError(f"non-finite parameters mu={self.mu}, sigma={self.sigma}")
        if self.sigma <= 0:
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def from_db(cls, mu_db: float, sigma_db: float) -> "GaussianParams":
        return db_to_natural(mu_db, sigma_db)

    @property
    def mu_db(self) -> float:
        return self.mu / DB_LAMBDA

    @property
    def sigma_db(self) -> float:
        return self.sigma / DB_LAMBDA


@dataclass(frozen=True)
class ShiftedLognormal:
    """The random variable delta + exp(X) with X ~ N(mu, sigma^2)."""

    params: GaussianParams
    delta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.delta) or self.delta < 0:
            raise InvalidParameterError(f"delta must be finite and >= 0, got {self.delta}")

    def pdf(self, y):
        return shifted_lognormal_pdf(y, self)

    def cdf(self, gamma):
        return shifted_lognormal_cdf(gamma, self)


@dataclass(frozen=True)
class SumProblem:
    """N independent lognormal components plus the shift used by the bound."""

    components: tuple[GaussianParams, ...]
    delta: float = 0.0

    def __init__(self, components: Sequence[GaussianParams], delta: float = 0.0):
        comps = tuple(components)
        if len(comps) < 1:
            raise InvalidParameterError("a sum needs at least one component")
        for c in comps:
            if not isinstance(c, GaussianParams):
                raise InvalidParameterError(f"component {c!r} is not GaussianParams")
        if not math.isfinite(delta) or delta < 0:
            raise InvalidParameterError(f"delta must be finite and >= 0, got {delta}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "delta", float(delta))

    @classmethod
    def iid(cls, n: int, mu: float, sigma: float, delta: float = 0.0) -> "SumProblem":
        if n < 1:
            raise InvalidParameterError(f"n must be >= 1, got {n}")
        return cls([GaussianParams(mu, sigma)] * n, delta)

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.components)) == 1

    def factors(self) -> list[ShiftedLognormal]:
        return [ShiftedLognormal(c, self.delta) for c in self.components]

    def with_delta(self, delta: float) -> "SumProblem":
        return SumProblem(self.components, delta)


def q_function(x):
    """Standard normal tail probability Q(x) = P(N(0,1) > x)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(x / _SQRT2)
    return out[()] if out.ndim == 0 else out


def log_q_function(x):
    """Natural log of Q(x); finite far beyond the double underflow point of Q."""
    x = np.asarray(x, dtype=float)
    out = special.log_ndtr(-x)
    return out[()] if out.ndim == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return out[()] if out.ndim == 0 else out


def db_to_natural(mu_db: float, sigma_db: float) -> GaussianParams:
    if not sigma_db > 0:
        raise InvalidParameterError(f"sigma_db must be positive, got {sigma_db}")
    return GaussianParams(DB_LAMBDA * mu_db, DB_LAMBDA * sigma_db)


def shifted_lognormal_pdf(y, d: ShiftedLognormal):
    """Density of delta + exp(X); zero on y <= delta."""
    y = np.asarray(y, dtype=float)
    mu, sigma = d.params.mu, d.params.sigma
    r = y - d.delta
    inside = r > 0
    rr = np.where(inside, r, 1.0)
    z = (np.log(rr) - mu) / sigma
    out = np.where(inside, np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / (sigma * rr), 0.0)
    return out[()] if out.ndim == 0 else out


def shifted_lognormal_cdf(gamma, d: ShiftedLognormal):
    gamma = np.asarray(gamma, dtype=float)
    mu, sigma = d.params.mu, d.params.sigma
    r = gamma - d.delta
    inside = r > 0
    with np.errstate(divide="ignore"):
        z = (np.log(np.where(inside, r, 1.0)) - mu) / sigma
    # 1 - Q(z) written as Q(-z) keeps the left tail accurate
    out = np.where(inside, 0.5 * special.erfc(-z / _SQRT2), 0.0)
    return out[()] if out.ndim == 0 else out


def shifted_lognormal_logcdf(gamma, d: ShiftedLognormal):
    gamma = np.asarray(gamma, dtype=float)
    r = gamma - d.delta
    inside = r > 0
    z = (np.log(np.where(inside, r, 1.0)) - d.params.mu) / d.params.sigma
    out = np.where(inside, special.log_ndtr(z), -np.inf)
    return out[()] if out.ndim == 0 else out
