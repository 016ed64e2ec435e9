"""Arithmetic, geometric and tangential means.

All functions reduce over the last axis, so a 2-D array is treated as a
batch of vectors.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError


def _check_values(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] == 0:
        raise InvalidParameterError("mean of an empty vector")
    if not np.all(y > 0) or not np.all(np.isfinite(y)):
        raise InvalidParameterError("all values must be positive and finite")
    return y


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=float)
    if w.shape[-1] != n:
        raise InvalidParameterError(f"{w.shape[-1]} weights for {n} values")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidParameterError("weights must be non-negative")
    if np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-12):
        raise InvalidParameterError("weights must sum to 1")
    return w


def _scalar(a):
    return a[()] if a.ndim == 0 else a


def arithmetic_mean(y):
    y = _check_values(y)
    return _scalar(np.mean(y, axis=-1))


def geometric_mean(y):
    y = _check_values(y)
    return _scalar(np.exp(np.mean(np.log(y), axis=-1)))


def tangential_mean(y, delta, weights=None):
    """(prod (delta + y_i)^w_i) - delta, uniform weights by default.

    For delta above max(y) the difference is formed as
    delta * expm1(sum w_i log1p(y_i / delta)), which stays accurate when
    the result approaches the arithmetic mean for large delta.
    """
    y = _check_values(y)
    delta = np.asarray(delta, dtype=float)
    if np.any(~(delta > 0)) or not np.all(np.isfinite(delta)):
        raise InvalidParameterError("delta must be positive and finite")
    n = y.shape[-1]
    w = np.full(n, 1.0 / n) if weights is None else _check_weights(weights, n)
    d = delta[..., None]
    big = np.sum(w * np.log1p(y / d), axis=-1)
    direct = np.exp(np.sum(w * np.log(d + y), axis=-1)) - delta
    out = np.where(delta > np.max(y, axis=-1), delta * np.expm1(big), direct)
    return _scalar(out)


def am_tm_gap(y, delta):
    """AM(y) - TM(y, delta); decays like 1/delta for large delta."""
    return arithmetic_mean(y) - tangential_mean(y, delta)
