"""Monte-Carlo reference for the sum distribution and the SIR outage probability.

Random numbers come from numpy's Philox4x64 counter-based generator, one
independent stream per batch spawned from the seed with SeedSequence, and
normals are produced by the inverse-CDF transform.  Results therefore depend
only on (seed, samples, batch) and not on how batches are scheduled.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import approx, bound
from .core import GaussianParams, SumProblem
from .errors import DomainError, InvalidParameterError, UnsupportedError
from .mellin import QuadratureConfig

RNG_ALGORITHM = (
    f"numpy {np.__version__} Philox4x64-10, SeedSequence.spawn per batch, "
    "inverse-CDF normals (53-bit open-interval uniforms, ndtri)"
)


@dataclass(frozen=True)
class MCConfig:
    samples: int = 1_000_000
    seed: int = 20240101
    batch: int = 1 << 20

    def __post_init__(self):
        if int(self.samples) < 1:
            raise InvalidParameterError("samples must be >= 1")
        if int(self.batch) < 1:
            raise InvalidParameterError("batch must be >= 1")
        if not 0 <= int(self.seed) < 1 << 64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class EmpiricalCurve:
    gammas: np.ndarray
    cdf: np.ndarray
    stderr: np.ndarray
    samples: int
    rng: str = field(default=RNG_ALGORITHM)

    @property
    def ccdf(self) -> np.ndarray:
        return 1.0 - self.cdf


@dataclass(frozen=True)
class OutageEstimate:
    value: float
    stderr: float | None
    method: str
    marginalized: bool


def _threads() -> int:
    try:
        n = int(os.environ.get("LOGNSUM_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _normals(gen: np.random.Generator, shape) -> np.ndarray:
    # uniforms on (0, 1) exactly, so ndtri never returns +-inf
    u = (gen.integers(0, 1 << 53, size=shape, dtype=np.int64) + 0.5) * 2.0 ** -53
    return special.ndtri(u)


def _batches(mc: MCConfig):
    sizes = [mc.batch] * (mc.samples // mc.batch)
    if mc.samples % mc.batch:
        sizes.append(mc.samples % mc.batch)
    seqs = np.random.SeedSequence(int(mc.seed)).spawn(len(sizes))
    return list(zip(sizes, seqs))


def _map_batches(fn, mc: MCConfig):
    """fn(size, generator) over all batches, results in batch order."""
    work = _batches(mc)

    def run(item):
        size, seq = item
        return fn(size, np.random.Generator(np.random.Philox(seq)))

    workers = min(_threads(), len(work))
    if workers <= 1:
        return [run(w) for w in work]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, work))


def _components(p) -> list[GaussianParams]:
    if isinstance(p, SumProblem):
        return list(p.components)
    if isinstance(p, GaussianParams):
        return [p]
    comps = list(p)
    if not comps:
        raise InvalidParameterError("at least one component is required")
    return comps


def _draw_sum(comps: Sequence[GaussianParams], size: int, gen: np.random.Generator) -> np.ndarray:
    mu = np.array([c.mu for c in comps])[:, None]
    sigma = np.array([c.sigma for c in comps])[:, None]
    return np.exp(mu + sigma * _normals(gen, (len(comps), size))).sum(axis=0)


def sample_sum(p, mc: MCConfig) -> np.ndarray:
    """All `samples` realisations of S_N (memory permitting), in batch order."""
    comps = _components(p)
    return np.concatenate(_map_batches(lambda n, g: _draw_sum(comps, n, g), mc))


def empirical_cdf(p, gammas, mc: MCConfig) -> EmpiricalCurve:
    """Fraction of simulated S_N = sum_i e^{X_i} at or below each gamma.

    The shift of a SumProblem is ignored.  Standard errors are binomial,
    sqrt(p (1 - p) / samples).
    """
    comps = _components(p)
    g = np.asarray(gammas, dtype=float)
    if g.ndim != 1 or np.any(np.diff(g) < 0):
        raise InvalidParameterError("gammas must be a sorted 1-D grid")

    def count(size, gen):
        s = _draw_sum(comps, size, gen)
        # first grid index with gamma >= s; s counts for that point and above
        idx = np.searchsorted(g, s, side="left")
        return np.bincount(idx, minlength=len(g) + 1)[: len(g)]

    counts = np.sum(_map_batches(count, mc), axis=0)
    cdf = np.cumsum(counts) / mc.samples
    stderr = np.sqrt(cdf * (1.0 - cdf) / mc.samples)
    return EmpiricalCurve(gammas=g, cdf=cdf, stderr=stderr, samples=mc.samples)


def empirical_histogram(p, edges, mc: MCConfig) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram of S_N on the given bin edges with per-bin standard errors."""
    comps = _components(p)
    edges = np.asarray(edges, dtype=float)

    def count(size, gen):
        return np.histogram(_draw_sum(comps, size, gen), bins=edges)[0]

    counts = np.sum(_map_batches(count, mc), axis=0)
    frac = counts / mc.samples
    width = np.diff(edges)
    return frac / width, np.sqrt(frac * (1.0 - frac) / mc.samples) / width


# ---------------------------------------------------------------------------
# outage probability

METHODS = ("mc", "bound", "clt", "farley")


def _signal_nodes(signal: GaussianParams, marginalize: bool, m_order: int):
    if not marginalize:
        return np.array([signal.mu]), np.array([1.0])
    rule = approx.gauss_hermite_rule(m_order)
    return signal.mu + math.sqrt(2.0) * signal.sigma * rule.nodes, rule.weights / math.sqrt(math.pi)


def _uniform(interferers: Sequence[GaussianParams], method: str) -> GaussianParams:
    if len(set(interferers)) != 1:
        raise UnsupportedError(f"method {method!r} needs identically distributed interferers")
    return interferers[0]


def _sum_ccdf(method: str, gam: np.ndarray, interferers, delta, m_order, cfg) -> np.ndarray:
    n = len(interferers)
    if method == "bound":
        res = bound.tm_bound_cdf(gam, SumProblem(interferers, delta), cfg)
        return res.ccdf
    if method == "clt":
        return approx.clt_ccdf(gam, _uniform(interferers, method), delta, n, m_order)
    if method == "farley":
        return approx.farley_ccdf(gam, _uniform(interferers, method), n)
    raise UnsupportedError(f"unknown outage method {method!r}")


def outage_estimate(
    signal: GaussianParams,
    interferers: Sequence[GaussianParams],
    gamma_th: float,
    method: str = "mc",
    mc: MCConfig | None = None,
    *,
    marginalize: bool = True,
    delta: float = 100.0,
    m_order: int = 40,
    cfg: QuadratureConfig | None = None,
) -> OutageEstimate:
    """P[e^{X0} / sum_i e^{X_i} <= gamma_th].

    ``marginalize=False`` holds the signal exponent at its mean instead of
    averaging over it.  "mc" simulates the ratio directly; the other methods
    average 1 - F_S(e^{x0}/gamma_th) over x0 by Gauss-Hermite quadrature, with
    F_S replaced by the tangential-mean bound (shift ``delta``), the large-N
    form, or Farley's bound.  The bound and Farley's method give lower bounds
    on the outage probability.
    """
    if method not in METHODS:
        raise UnsupportedError(f"unknown outage method {method!r}")
    if not gamma_th > 0:
        raise DomainError("gamma_th must be > 0")
    interferers = list(interferers)
    if not interferers:
        raise InvalidParameterError("at least one interferer is required")
    if math.isinf(gamma_th):
        return OutageEstimate(1.0, 0.0 if method == "mc" else None, method, marginalize)
    if method == "mc":
        value, err = _outage_direct(signal, interferers, gamma_th, mc or MCConfig(), marginalize)
        return OutageEstimate(value, err, method, marginalize)
    x0, w = _signal_nodes(signal, marginalize, m_order)
    thresh = np.exp(x0 - math.log(gamma_th))
    ccdf = np.asarray(_sum_ccdf(method, thresh, interferers, delta, m_order, cfg), dtype=float)
    return OutageEstimate(float(np.clip(np.dot(w, ccdf), 0.0, 1.0)), None, method, marginalize)


def outage_probability(signal, interferers, gamma_th, method="mc", mc=None, **kwargs) -> float:
    return outage_estimate(signal, interferers, gamma_th, method, mc, **kwargs).value


def _outage_direct(signal, interferers, gamma_th, mc: MCConfig, marginalize: bool):
    comps = [signal] + list(interferers)
    log_th = math.log(gamma_th)

    def count(size, gen):
        z = _normals(gen, (len(comps), size))
        x0 = signal.mu + (signal.sigma * z[0] if marginalize else 0.0)
        s = _draw_from_normals(interferers, z[1:])
        return int(np.count_nonzero(x0 - np.log(s) <= log_th))

    hits = sum(_map_batches(count, mc))
    p = hits / mc.samples
    return p, math.sqrt(p * (1.0 - p) / mc.samples)


def _draw_from_normals(comps, z):
    mu = np.array([c.mu for c in comps])[:, None]
    sigma = np.array([c.sigma for c in comps])[:, None]
    return np.exp(mu + sigma * z).sum(axis=0)


def outage_conditional_mc(
    signal: GaussianParams,
    interferers: Sequence[GaussianParams],
    gamma_th: float,
    mc: MCConfig,
    *,
    marginalize: bool = True,
    m_order: int = 40,
) -> tuple[float, float]:
    """Estimate of E[1 - F_S(e^{X0}/gamma_th)] from simulated S only.

    Each sample contributes h(S) = sum_m w_m 1[S >= e^{x_m}/gamma_th] over the
    Gauss-Hermite nodes x_m of the signal exponent, so the standard error is
    the sample standard deviation of h over sqrt(samples).
    """
    x0, w = _signal_nodes(signal, marginalize, m_order)
    thresh = np.exp(x0 - math.log(gamma_th))
    order = np.argsort(thresh)
    thresh, w = thresh[order], w[order]
    # h(S) = total weight of thresholds <= S
    cum = np.concatenate([[0.0], np.cumsum(w)])
    comps = list(interferers)

    def moments(size, gen):
        s = _draw_sum(comps, size, gen)
        h = cum[np.searchsorted(thresh, s, side="right")]
        return math.fsum(h), math.fsum(h * h)

    parts = _map_batches(moments, mc)
    n = mc.samples
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)
