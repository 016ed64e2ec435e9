"""Mellin transform of the shifted lognormal and numerical inversion of products.

For Y = delta + exp(X), X ~ N(mu, sigma^2), the transform
phi(s) = E[Y^(s-1)] has no closed form and is entire in s.  Everything here
works with the normalised transform

    psi(s) = phi(s) / delta^(s-1) = E[(1 + exp(X)/delta)^(s-1)]

so that a product Z = Y_1 ... Y_N is handled through
T = ln Z - N ln(delta) = sum_i log1p(exp(X_i)/delta) >= 0, which keeps all
magnitudes on the scale of the original sum.  (For delta = 0 the offset is
zero and T = ln Z.)

Single transform values substitute X = mu + sigma*u and integrate over u on
a contour Im u = eta chosen to minimise the L1 norm of the integrand: for
large beta the real-line integrand oscillates wildly, while on the shifted
contour it is smooth.  The integrand is analytic in the strip
0 <= sigma*Im u < pi and the trapezoidal rule converges geometrically there.

Inversion along Re s = alpha uses the trapezoidal rule in beta.  The step
follows from the Poisson summation (aliasing) bound of the tilted density,
and the line ends where the integrand envelope has dropped below
``tail_tol``.  On that grid psi is tabulated from one real-line trapezoid
rule in u per component, whose exponentials e^{j beta_k L(u)} are summed for
all beta_k at once by a type-1 non-uniform FFT; the contour rule spot-checks
the table.  An exponential taper damps the truncation ripple, with its reach
stretched until the damping of the bulk stays below ``tail_tol``.  CDFs use
the kernel x^(1-s)/(1-s) (alpha < 1) or its complement x^(1-s)/(s-1)
(alpha > 1) with a saddle-point choice of alpha, which gives relative
accuracy in both tails.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import finufft
import numpy as np
from scipy import integrate, optimize, special

from .core import (
    GaussianParams,
    ShiftedLognormal,
    SumProblem,
    shifted_lognormal_pdf,
)
from .errors import (
    IllConditionedInversionError,
    InvalidParameterError,
    NumericFailureError,
    UnsupportedError,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# e^-46 ~ 1e-20: integrand mass below this is dropped from windows
_WINDOW_DROP = 46.0
# target aliasing error, as a log relative to the value being computed
_ALIAS_LOG = 34.0
_BLOCK = 512
_CHUNK = 1 << 24


def _threads() -> int:
    """Thread cap from LOGNSUM_THREADS; 0 lets the NUFFT library decide."""
    try:
        return max(0, int(os.environ.get("LOGNSUM_THREADS", "0")))
    except ValueError:
        return 0


# exponential taper exp(-36 (beta/beta_max)^p) applied to the line integrand
_TAPER_STRENGTH = 36.0


@dataclass(frozen=True)
class ComplexAbscissa:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise InvalidParameterError("abscissa must be finite")

    @property
    def s(self) -> complex:
        return complex(self.alpha, self.beta)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tuning knobs for transform evaluation and line-integral inversion.

    alpha
        Inversion line Re s for densities (CDFs pick their own line unless
        ``cdf_alpha`` is set).
    beta_max, beta_steps, beta_density
        Override the automatic truncation point, the number of trapezoid
        nodes on [0, beta_max], or the nodes per unit beta.  ``None`` means
        automatic.
    adaptive_tol
        Absolute tolerance of transform quadrature (relative to the L1 norm
        of the integrand).
    support_cut
        Half-width, in standard deviations of X, of the real-line window used
        by the adaptive transform route.
    tail_tol
        The line integral is truncated where the integrand envelope falls
        below ``tail_tol`` times its value at beta = 0.
    taper_order
        Order p of the exponential taper exp(-36 (beta/beta_max)^p) applied
        before summation; 0 gives the plain truncated trapezoid.  The taper
        removes the ringing of the truncation away from sharp features of
        the density.
    max_points
        Safety cap on trapezoid nodes per line integral.
    """

    alpha: float = 1.0
    beta_max: float | None = None
    beta_steps: int | None = None
    adaptive_tol: float = 1e-10
    support_cut: float = 12.0
    tail_tol: float = 1e-8
    taper_order: int = 8
    beta_density: float | None = None
    cdf_alpha: float | None = None
    max_points: int = 1 << 26

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise InvalidParameterError("alpha must be finite")
        if self.beta_max is not None and not self.beta_max > 0:
            raise InvalidParameterError("beta_max must be positive")
        if self.beta_steps is not None and self.beta_steps < 2:
            raise InvalidParameterError("beta_steps must be >= 2")
        if self.beta_density is not None and not self.beta_density > 0:
            raise InvalidParameterError("beta_density must be positive")
        if self.taper_order < 0:
            raise InvalidParameterError("taper_order must be >= 0")
        for name in ("adaptive_tol", "support_cut", "tail_tol"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.cdf_alpha is not None and (self.cdf_alpha == 1.0 or not math.isfinite(self.cdf_alpha)):
            raise InvalidParameterError("cdf_alpha must be finite and != 1")


DEFAULT_CONFIG = QuadratureConfig()


@dataclass
class InversionDiagnostics:
    """Error bookkeeping of one line integral."""

    alpha: float
    beta_max: float
    beta_step: float
    points: int
    truncation: float  # integrand envelope at beta_max relative to beta = 0
    aliasing: float  # bound on the aliasing error relative to the value
    transform: float  # transform quadrature error relative to its L1 norm
    bands: int = 0  # NUFFT chunks of the beta grid

    @property
    def relative_error(self) -> float:
        return self.truncation + self.aliasing + self.transform


# ---------------------------------------------------------------------------
# single-component transform rules


def _offset(delta: float) -> float:
    return math.log(delta) if delta > 0 else 0.0


class _Component:
    """Quadrature machinery for one factor delta + exp(mu + sigma*u)."""

    _U_SPAN = 45.0
    _U_STEP = 0.02

    def __init__(self, mu: float, sigma: float, delta: float):
        self.mu, self.sigma, self.delta = float(mu), float(sigma), float(delta)
        self.ell = _offset(self.delta)
        u = np.arange(-self._U_SPAN, self._U_SPAN + 1e-9, self._U_STEP)
        self.u = u
        self.logw = -0.5 * u * u - _LOG_SQRT_2PI + math.log(self._U_STEP)
        self.lw = self.log_shift(u)
        self._tilt_cache: dict[float, tuple] = {}

    def log_shift(self, u):
        """log(1 + exp(x)/delta) (or x when delta = 0); u may be complex."""
        x = self.mu + self.sigma * np.asarray(u)
        if self.delta == 0:
            return x
        z = x - self.ell
        big = np.real(z) > 30.0
        zs = np.where(big, 0.0, z)
        zb = np.where(big, z, 0.0)
        return np.where(big, zb + np.log1p(np.exp(-zb)), np.log1p(np.exp(zs)))

    def tilted(self, a: float):
        """(log psi(a), mean, var, lo, hi) of log_shift under the tilt e^{(a-1) lw}."""
        key = float(a)
        hit = self._tilt_cache.get(key)
        if hit is not None:
            return hit
        lg = self.logw + (a - 1.0) * self.lw
        m = lg.max()
        p = np.exp(lg - m)
        z = p.sum()
        mean = float(np.dot(p, self.lw) / z)
        var = float(np.dot(p, (self.lw - mean) ** 2) / z)
        keep = lg > m - _WINDOW_DROP
        out = (float(m + math.log(z)), mean, var, float(self.lw[keep].min()), float(self.lw[keep].max()))
        if len(self._tilt_cache) < 4096:
            self._tilt_cache[key] = out
        return out

    def log_psi_real(self, a):
        """Vectorised log psi at real arguments."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        lg = self.logw[None, :] + (a[:, None] - 1.0) * self.lw[None, :]
        return special.logsumexp(lg, axis=1)

    def real_line_rule(self, alpha: float, beta_top: float, log_scale: float):
        """Nodes log_shift(u_n) and weights for psi(alpha + j beta), beta <= beta_top.

        The integrand is analytic for |sigma Im u| < pi; on the lines
        Im u = +-d it is bounded by e^{d^2/2 + d sigma beta} times its real
        line size, so a step h with 2 pi d / h beyond that exponent plus 37
        keeps the trapezoid error near 1e-16 of the L1 norm.
        """
        lg = self.logw + (alpha - 1.0) * self.lw
        keep = np.nonzero(lg > lg.max() - 40.0)[0]
        lo, hi = self.u[keep[0]] - 0.5, self.u[keep[-1]] + 0.5
        d = min(0.9 * math.pi / self.sigma, 3.0) if self.delta > 0 else 3.0
        h = min(0.25, 2.0 * math.pi * d / (37.0 + d * self.sigma * beta_top + 0.5 * d * d))
        u = np.arange(lo, hi + h, h)
        nodes = self.log_shift(u)
        weights = np.exp(-0.5 * u * u - _LOG_SQRT_2PI + math.log(h) + (alpha - 1.0) * nodes - log_scale)
        return nodes, weights

    def _log_terms(self, u_complex, s):
        return -0.5 * u_complex * u_complex - _LOG_SQRT_2PI + (s - 1.0) * self.log_shift(u_complex)

    def contour_rule(self, s: complex, log_scale: float, tol: float = 1e-14) -> "_Rule":
        """Trapezoid rule on the contour Im u = eta best suited to s.

        Terms are scaled by exp(-log_scale) so that psi(alpha) ~ 1.
        """
        sigma = self.sigma
        eta_max = 0.97 * math.pi / sigma if self.delta > 0 else 8.0 + abs(s.imag) * sigma
        # a coarse grid is enough to rank contours
        u = np.arange(-self._U_SPAN - 20, self._U_SPAN + 20 + 1e-9, 0.1)
        best = None
        for eta in np.linspace(0.0, eta_max, 17):
            lt = np.real(self._log_terms(u + 1j * eta, s))
            m = lt.max()
            l1 = m + math.log(np.exp(lt - m).sum() * 0.1)
            if best is None or l1 < best[0] - 1e-9:
                best = (l1, eta, lt)
        l1, eta, lt = best
        keep = np.nonzero(lt > lt.max() - _WINDOW_DROP)[0]
        lo = u[keep[0]] - 1.0
        hi = u[keep[-1]] + 1.0
        dist = (math.pi - sigma * eta) / sigma if self.delta > 0 else 4.0
        h = min(0.25, dist / 12.0, 0.5 / max(sigma, 1e-12))
        rule = None
        for _ in range(8):
            rule = _Rule.build(self, lo, hi, h, eta, log_scale)
            est = rule.halving_error(s)
            if est <= tol:
                break
            h /= 2.0
        rule.estimate = est
        return rule


@dataclass
class _Rule:
    """Nodes log_shift(u_n) and complex weights for psi(s) = sum w_n e^{(s-1) lw_n}."""

    lw: np.ndarray
    logc: np.ndarray  # log weight at s = 1 (complex), scaled
    eta: float
    h: float
    estimate: float = 0.0

    @classmethod
    def build(cls, comp: _Component, lo: float, hi: float, h: float, eta: float, log_scale: float):
        n = int(math.ceil((hi - lo) / h))
        u = lo + h * np.arange(n + 1) + 1j * eta
        lw = comp.log_shift(u)
        logc = -0.5 * u * u - _LOG_SQRT_2PI + math.log(h) - log_scale
        return cls(lw=lw, logc=logc, eta=eta, h=h)

    def terms(self, s):
        return np.exp(self.logc + (s - 1.0) * self.lw)

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.exp(self.logc[None, :] + (s.reshape(-1, 1) - 1.0) * self.lw[None, :]).sum(axis=1).reshape(s.shape)

    def halving_error(self, s) -> float:
        t = self.terms(s)
        full = t.sum()
        coarse = 2.0 * t[::2].sum() if len(t) % 2 else 2.0 * t[:-1:2].sum() + t[-1]
        l1 = np.abs(t).sum()
        return float(abs(full - coarse) / l1) if l1 > 0 else 0.0


@lru_cache(maxsize=64)
def _component(mu: float, sigma: float, delta: float) -> _Component:
    return _Component(mu, sigma, delta)


def _components(p: SumProblem):
    """Distinct components with multiplicities."""
    counts: dict[GaussianParams, int] = {}
    for c in p.components:
        counts[c] = counts.get(c, 0) + 1
    return [(_component(c.mu, c.sigma, p.delta), k) for c, k in counts.items()]


# ---------------------------------------------------------------------------
# transform


def _as_s(s) -> np.ndarray:
    if isinstance(s, ComplexAbscissa):
        return np.asarray(s.s, dtype=complex)
    return np.asarray(s, dtype=complex)


def mellin_transform(d: ShiftedLognormal, s, cfg: QuadratureConfig | None = None, method: str = "contour"):
    """phi_Y(s) = integral over (delta, inf) of y^(s-1) f_Y(y) dy.

    ``method="contour"`` (default) uses the shifted-contour trapezoid rule;
    ``method="adaptive"`` integrates along the real line with adaptive
    Gauss-Kronrod quadrature (slow and unreliable once |Im s| is large).
    Raises NumericFailureError when the error estimate exceeds
    ``cfg.adaptive_tol`` relative to the integrand's L1 norm.
    """
    cfg = cfg or DEFAULT_CONFIG
    if method == "adaptive":
        return mellin_transform_adaptive(d, s, cfg)
    if method != "contour":
        raise InvalidParameterError(f"unknown method {method!r}")
    arr = _as_s(s)
    comp = _component(d.params.mu, d.params.sigma, d.delta)
    out = np.empty(arr.shape, dtype=complex)
    for idx, sv in np.ndenumerate(arr):
        conj = sv.imag < 0
        sv = sv.conjugate() if conj else sv
        scale = comp.tilted(sv.real)[0]
        rule = comp.contour_rule(complex(sv), scale)
        if rule.estimate > cfg.adaptive_tol:
            raise NumericFailureError(f"transform quadrature did not converge at s={sv}", rule.estimate)
        val = rule(sv) * math.exp(scale) * np.exp((sv - 1.0) * comp.ell)
        out[idx] = val.conjugate() if conj else val
    return out[()] if out.ndim == 0 else out


def mellin_transform_adaptive(d: ShiftedLognormal, s, cfg: QuadratureConfig | None = None):
    """Real-line adaptive quadrature of E[(delta + e^X)^(s-1)]; reference route."""
    cfg = cfg or DEFAULT_CONFIG
    arr = _as_s(s)
    mu, sigma, delta = d.params.mu, d.params.sigma, d.delta
    cut = cfg.support_cut
    out = np.empty(arr.shape, dtype=complex)
    for idx, sv in np.ndenumerate(arr):
        centre = (sv.real - 1.0) * sigma if sv.real > 1 else 0.0

        def f(u, part):
            v = np.exp(-0.5 * u * u - _LOG_SQRT_2PI + (sv - 1.0) * np.log(delta + np.exp(mu + sigma * u)))
            return v.real if part == 0 else v.imag

        re, e1 = integrate.quad(f, centre - cut, centre + cut, args=(0,), epsabs=cfg.adaptive_tol, epsrel=0, limit=2000)
        im, e2 = integrate.quad(f, centre - cut, centre + cut, args=(1,), epsabs=cfg.adaptive_tol, epsrel=0, limit=2000)
        if e1 + e2 > 10 * cfg.adaptive_tol:
            raise NumericFailureError(f"adaptive transform quadrature failed at s={sv}", e1 + e2)
        out[idx] = complex(re, im)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# line-integral inversion

_PDF, _CDF, _CCDF = "pdf", "cdf", "ccdf"


def _kernel(kind: str, s):
    if kind == _PDF:
        return np.ones_like(s)
    if kind == _CDF:
        return 1.0 / (1.0 - s)
    return 1.0 / (s - 1.0)


def _tilted_sum(parts, a: float):
    """log prod psi_i(a), mean, var, soft lower and upper edges of T."""
    logpsi = mean = var = 0.0
    dev_lo = dev_hi = 0.0
    for comp, k in parts:
        lp, m, v, lo, hi = comp.tilted(a)
        logpsi += k * lp
        mean += k * m
        var += k * v
        dev_lo += k * (m - lo) ** 2
        dev_hi += k * (hi - m) ** 2
    return logpsi, mean, var, mean - math.sqrt(dev_lo), mean + math.sqrt(dev_hi)


def _hard_lower(p: SumProblem) -> float | None:
    return 0.0 if p.delta > 0 else None


class _LineIntegral:
    """Trapezoid evaluation of (1/pi) Re sum' e^{-j beta t} K(s) prod psi(s)."""

    def __init__(self, p: SumProblem, alpha: float, kind: str, cfg: QuadratureConfig):
        self.p, self.alpha, self.kind, self.cfg = p, float(alpha), kind, cfg
        self.parts = _components(p)
        self.scales = [(comp, k, comp.tilted(self.alpha)[0]) for comp, k in self.parts]
        self.log_scale = sum(k * sc for _, k, sc in self.scales)

    def psi_rel(self, s):
        """prod psi_i(s) / prod psi_i(alpha) at scalar s (contour rules)."""
        out = 1.0 + 0j
        err = 0.0
        for comp, k, sc in self.scales:
            rule = comp.contour_rule(complex(s), sc)
            out *= rule(s) ** k
            err = max(err, rule.estimate)
        return out, err

    def envelope(self, betas) -> float:
        """max |K(s) prod psi(s)| / |K(alpha)| over the given beta values (contour rules)."""
        ref = abs(_kernel(self.kind, complex(self.alpha, 0.0)))
        worst = 0.0
        for b in betas:
            s = complex(self.alpha, float(b))
            val = abs(_kernel(self.kind, s))
            for comp, k, sc in self.scales:
                val *= abs(comp.contour_rule(s, sc)(s)) ** k
            worst = max(worst, float(val))
        return worst / ref

    def _find_beta_max(self, dbeta: float) -> float:
        cfg = self.cfg
        edge = max(4.0, abs(self.alpha - 1.0) / 2.0, 8.0 * dbeta)
        cap = (cfg.max_points - 1) * dbeta
        def small(b):
            return self.envelope(b * np.linspace(0.5, 1.0, 6)) < cfg.tail_tol

        while edge < cap:
            if small(edge) and small(2.0 * edge):
                lo, hi = 0.5 * edge, edge
                for _ in range(3):
                    mid = math.sqrt(lo * hi)
                    if small(mid):
                        hi = mid
                    else:
                        lo = mid
                return hi
            edge *= 2.0
        return cap

    def _taper_reach(self, edge: float) -> float:
        """Stretch the taper until its damping of the bulk stays below tail_tol.

        Near beta the taper removes about 36 (beta/B)^p of the integrand, which
        matters when the transform decays fast enough that edge is tight.
        """
        p = self.cfg.taper_order
        if not p:
            return edge
        reach = edge
        for frac in (0.1, 0.2, 0.3, 0.4, 0.5):
            b = frac * edge
            env = self.envelope([b])
            if env > 0:
                reach = max(reach, b * (_TAPER_STRENGTH * env / (0.1 * self.cfg.tail_tol)) ** (1.0 / p))
        return reach

    def run(self, t: np.ndarray, dbeta: float, beta_max: float | None):
        """Accumulate the line integral for thresholds t; returns (sums, diag).

        psi is tabulated on beta = k*dbeta, k < K, by one real-line trapezoid
        rule per component whose exponentials are summed with a type-1
        non-uniform FFT; the contour rules serve as spot checks.
        """
        cfg = self.cfg
        t = np.asarray(t, dtype=float)
        if beta_max is None:
            beta_max = self._taper_reach(self._find_beta_max(dbeta))
        count = min(int(math.floor(beta_max / dbeta)) + 1, cfg.max_points)
        top = (count - 1) * dbeta
        probes = sorted({count - 1, count // 2, max(1, count // 7)})
        probe_vals: dict[int, complex] = {}
        plans = []
        width = min(_CHUNK, count + (count % 2))
        for comp, k, sc in self.scales:
            nodes, weights = comp.real_line_rule(self.alpha, top, sc)
            theta = np.mod(dbeta * nodes + math.pi, 2.0 * math.pi) - math.pi
            plan = finufft.Plan(1, (width,), eps=1e-14, isign=1, nthreads=_threads())
            plan.setpts(theta)
            plans.append((plan, theta, weights, k))
        acc = np.zeros(t.shape, dtype=complex)
        phase_tab = np.exp(-1j * dbeta * np.outer(np.arange(_BLOCK), t))
        for c0 in range(0, count, width):
            c1 = min(c0 + width, count)
            shift = c0 + width // 2
            vals = np.ones(c1 - c0, dtype=complex)
            for plan, theta, weights, k in plans:
                modes = plan.execute((weights * np.exp(1j * shift * theta)).astype(complex))
                vals *= modes[: c1 - c0] ** k
            for pk in probes:
                if c0 <= pk < c1:
                    probe_vals[pk] = vals[pk - c0]
            kk = np.arange(c0, c1)
            vals *= _kernel(self.kind, self.alpha + 1j * dbeta * kk)
            if cfg.taper_order:
                vals *= np.exp(-_TAPER_STRENGTH * (kk / max(count - 1, 1)) ** cfg.taper_order)
            if c0 == 0:
                vals[0] *= 0.5
            acc += self._accumulate(vals, c0, t, phase_tab, dbeta)
        terr = 0.0
        for pk, v in probe_vals.items():
            ref, _ = self.psi_rel(complex(self.alpha, pk * dbeta))
            terr = max(terr, abs(v - ref))
        trunc = self.envelope(top * np.linspace(0.75, 1.0, 4)) if count > 1 else 1.0
        diag = InversionDiagnostics(
            alpha=self.alpha,
            beta_max=top,
            beta_step=dbeta,
            points=count,
            truncation=trunc,
            aliasing=0.0,
            transform=terr,
            bands=-(-count // width),
        )
        return acc * (dbeta / math.pi), diag

    @staticmethod
    def _accumulate(vals, k0, t, phase_tab, dbeta):
        m = phase_tab.shape[0]
        n = len(vals)
        nb = -(-n // m)
        padded = np.zeros(nb * m, dtype=complex)
        padded[:n] = vals
        blocks = padded.reshape(nb, m)
        out = np.zeros(t.shape, dtype=complex)
        chunk = max(1, 2_000_000 // max(m, len(t)))
        for i in range(0, nb, chunk):
            sub = blocks[i:i + chunk]
            starts = k0 + m * np.arange(i, i + len(sub))
            partial = sub @ phase_tab  # nb x nt
            out += np.einsum("bt,bt->t", partial, np.exp(-1j * dbeta * np.outer(starts, t)))
        return out


def _step_from_period(period: float, cfg: QuadratureConfig, beta_max: float | None) -> float:
    if cfg.beta_density is not None:
        return 1.0 / cfg.beta_density
    if cfg.beta_steps is not None and beta_max is not None:
        return beta_max / (cfg.beta_steps - 1)
    return 2.0 * math.pi / period


def _check(diag: InversionDiagnostics, user_grid: bool):
    if diag.truncation > 1e-6 or diag.aliasing > 1e-6:
        raise IllConditionedInversionError(
            f"line integral ill-conditioned (truncation {diag.truncation:.2e}, aliasing {diag.aliasing:.2e}); "
            "increase beta_max or beta_steps" if user_grid else
            f"line integral did not converge within max_points (truncation {diag.truncation:.2e})",
            diag.relative_error,
        )


def _log_density(p: SumProblem, t: np.ndarray, alpha: float, cfg: QuadratureConfig):
    """Density of T at t, as (value, diagnostics); t sorted not required."""
    li = _LineIntegral(p, alpha, _PDF, cfg)
    a_hard = _hard_lower(p)
    _, _, _, lo, hi = _tilted_sum(li.parts, alpha)
    a = a_hard if a_hard is not None else lo
    need = max(hi - float(np.min(t)), float(np.max(t)) - a, hi - a) * 1.05
    beta_max = cfg.beta_max
    if cfg.beta_steps is not None and beta_max is None:
        beta_max = 2.0 * math.pi / need * (cfg.beta_steps - 1)
    dbeta = _step_from_period(need, cfg, beta_max)
    sums, diag = li.run(t, dbeta, beta_max)
    period = 2.0 * math.pi / dbeta
    diag.aliasing = 0.0 if period >= need / 1.05 else 1.0
    _check(diag, cfg.beta_max is not None or cfg.beta_steps is not None or cfg.beta_density is not None)
    dens = np.exp(li.log_scale - (alpha - 1.0) * t) * sums.real
    return dens, diag


def log_product_pdf(t, p: SumProblem, cfg: QuadratureConfig | None = None, return_diagnostics: bool = False):
    """Density of T = ln Z - N ln(delta) (or ln Z when delta = 0) at t."""
    cfg = cfg or DEFAULT_CONFIG
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    out = np.zeros(flat.shape)
    inside = flat > 0 if p.delta > 0 else np.isfinite(flat)
    diag = None
    if np.any(inside):
        out[inside], diag = _log_density(p, flat[inside], cfg.alpha, cfg)
    out = out.reshape(t.shape)
    res = out[()] if out.ndim == 0 else out
    return (res, diag) if return_diagnostics else res


def product_pdf(x, p: SumProblem, cfg: QuadratureConfig | None = None, return_diagnostics: bool = False):
    """Density of Z = prod (delta + e^{X_i}) by Mellin inversion on Re s = cfg.alpha."""
    cfg = cfg or DEFAULT_CONFIG
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.zeros(flat.shape)
    n = p.n
    ell = _offset(p.delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(flat)
    t = logx - n * ell
    inside = (flat > 0) & (t > 0 if p.delta > 0 else np.isfinite(logx))
    diag = None
    if np.any(inside):
        dens, diag = _log_density(p, t[inside], cfg.alpha, cfg)
        out[inside] = dens / flat[inside]
    out = out.reshape(x.shape)
    res = out[()] if out.ndim == 0 else out
    return (res, diag) if return_diagnostics else res


def inversion_integrand(x: float, p: SumProblem, beta, cfg: QuadratureConfig | None = None):
    """x^{-s} prod phi_i(s) along s = cfg.alpha + j beta (beta of either sign)."""
    cfg = cfg or DEFAULT_CONFIG
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    out = np.empty(beta.shape, dtype=complex)
    for i, b in enumerate(beta):
        s = complex(cfg.alpha, b)
        val = 1.0 + 0j
        for c in p.components:
            val *= mellin_transform(ShiftedLognormal(c, p.delta), s, cfg)
        out[i] = val * x ** (-s)
    return out


# ---------------------------------------------------------------------------
# distribution function of T = ln Z - N ln delta


@dataclass
class TailChoice:
    side: str  # "cdf" or "ccdf"
    theta: float
    log_bound: float  # log of the beta = 0 integrand (Chernoff-type bound / theta)


def _choose_line(parts, t: float) -> TailChoice:
    """Saddle-point choice of the inversion line for P(T <= t)."""

    def obj(lt, sign):
        th = math.exp(lt)
        lp = sum(k * comp.log_psi_real(1.0 + sign * th)[0] for comp, k in parts)
        return -sign * th * t + lp - lt

    best = None
    for side, sign in ((_CDF, -1.0), (_CCDF, 1.0)):
        r = optimize.minimize_scalar(obj, bounds=(-9.0, 13.0), args=(sign,), method="bounded",
                                     options={"xatol": 1e-3})
        cand = TailChoice(side, math.exp(r.x), float(r.fun))
        if best is None or cand.log_bound < best.log_bound:
            best = cand
    return best


def _bucket(theta: float) -> float:
    return math.exp(round(4.0 * math.log(theta)) / 4.0)


def log_product_cdf(t, p: SumProblem, cfg: QuadratureConfig | None = None):
    """P(T <= t) for T = ln Z - N*ln(delta), plus per-point diagnostics.

    Points sharing a (rounded) saddle-point line are inverted together.
    Returns (cdf, ccdf, diagnostics) arrays; cdf and ccdf are computed as
    complements of whichever tail is smaller, so both keep relative accuracy.
    """
    cfg = cfg or DEFAULT_CONFIG
    t = np.atleast_1d(np.asarray(t, dtype=float))
    cdf = np.zeros(t.shape)
    ccdf = np.ones(t.shape)
    diags: list = [None] * len(t)
    parts = _components(p)
    a_hard = _hard_lower(p)
    groups: dict[tuple, list[int]] = {}
    for i, ti in enumerate(t):
        if a_hard is not None and ti <= a_hard:
            continue
        if cfg.cdf_alpha is not None:
            side = _CDF if cfg.cdf_alpha < 1 else _CCDF
            th = abs(cfg.cdf_alpha - 1.0)
        else:
            choice = _choose_line(parts, float(ti))
            side, th = choice.side, _bucket(choice.theta)
        groups.setdefault((side, th), []).append(i)
    for (side, th), idx in groups.items():
        alpha = 1.0 - th if side == _CDF else 1.0 + th
        tt = t[idx]
        li = _LineIntegral(p, alpha, side, cfg)
        logpsi, _, _, lo, hi = _tilted_sum(parts, alpha)
        a = a_hard if a_hard is not None else _tilted_sum(parts, 1.0)[3]
        log_i0 = logpsi + (th * tt if side == _CDF else -th * tt) - math.log(th)
        slack = _ALIAS_LOG + np.maximum(0.0, -log_i0 + 5.0)
        if side == _CDF:
            need = max(float(np.max(tt)) - a, float(np.max(slack)) / th)
        else:
            need = max(hi - float(np.min(tt)), float(np.max(slack)) / th)
        need *= 1.02
        beta_max = cfg.beta_max
        if cfg.beta_steps is not None and beta_max is None:
            beta_max = 2.0 * math.pi / need * (cfg.beta_steps - 1)
        dbeta = _step_from_period(need, cfg, beta_max)
        sums, diag = li.run(tt, dbeta, beta_max)
        period = 2.0 * math.pi / dbeta
        diag.aliasing = float(np.max(np.exp(-th * period + np.maximum(0.0, -log_i0))))
        if side == _CDF and period < float(np.max(tt)) - a:
            diag.aliasing = 1.0
        _check(diag, cfg.beta_max is not None or cfg.beta_steps is not None or cfg.beta_density is not None)
        scale = np.exp(li.log_scale - (alpha - 1.0) * tt)
        val = np.clip(scale * sums.real, 0.0, 1.0)
        for j, i in enumerate(idx):
            if side == _CDF:
                cdf[i], ccdf[i] = val[j], 1.0 - val[j]
            else:
                ccdf[i], cdf[i] = val[j], 1.0 - val[j]
            diags[i] = diag
    return cdf, ccdf, diags


def product_cdf(gamma_z, p: SumProblem, cfg: QuadratureConfig | None = None):
    """F_Z(gamma_z) = P(prod_i Y_i <= gamma_z); zero for gamma_z <= delta^N."""
    g = np.asarray(gamma_z, dtype=float)
    flat = g.ravel()
    out = np.zeros(flat.shape)
    with np.errstate(divide="ignore"):
        t = np.log(np.where(flat > 0, flat, 1.0)) - p.n * _offset(p.delta)
    ok = flat > 0
    if p.delta > 0:
        ok &= t > 0
    ok &= np.isfinite(flat)
    out[np.isposinf(flat)] = 1.0
    if np.any(ok):
        cdf, _, _ = log_product_cdf(t[ok], p, cfg)
        out[ok] = cdf
    out = out.reshape(g.shape)
    return out[()] if out.ndim == 0 else out


def product_cdf_by_quadrature(gamma_z: float, p: SumProblem, cfg: QuadratureConfig | None = None) -> float:
    """F_Z by adaptive integration of product_pdf over (delta^N, gamma_z).

    Cross-check route for product_cdf; integrates the density of T on a
    log scale so the lower support edge is resolved.
    """
    cfg = cfg or DEFAULT_CONFIG
    if gamma_z <= p.delta ** p.n:
        return 0.0
    t_top = math.log(gamma_z) - p.n * _offset(p.delta)
    parts = _components(p)
    lo = _hard_lower(p)
    if lo is None:
        lo = _tilted_sum(parts, 1.0)[3]

    def dens(tv):
        return _log_density(p, np.atleast_1d(tv), cfg.alpha, cfg)[0]

    # integrate over v = log(t) when the support is hard at 0
    if p.delta > 0:
        grid = np.linspace(math.log(t_top) - 40.0, math.log(t_top), 4001)
        tv = np.exp(grid)
        f = dens(tv) * tv
        return float(np.clip(integrate.simpson(f, x=grid), 0.0, 1.0))
    grid = np.linspace(lo, t_top, 4001)
    return float(np.clip(integrate.simpson(dens(grid), x=grid), 0.0, 1.0))


# ---------------------------------------------------------------------------
# direct Mellin convolution


def _conv2_pdf(x: float, c1: GaussianParams, c2: GaussianParams, delta: float, tol: float) -> float:
    """Density of Y1*Y2 at x by the convolution integral, split at sqrt(x)."""
    if x <= delta * delta:
        return 0.0
    root = math.sqrt(x)

    def half(ca: GaussianParams, cb: GaussianParams) -> float:
        # y = delta + e^{mu_a + sigma_a u}, y in (delta, root]
        if root <= delta:
            return 0.0
        top = (math.log(root - delta) - ca.mu) / ca.sigma
        fb = ShiftedLognormal(cb, delta)

        def f(u):
            y = delta + math.exp(ca.mu + ca.sigma * u)
            return math.exp(-0.5 * u * u - _LOG_SQRT_2PI) * float(shifted_lognormal_pdf(x / y, fb)) / y

        lo = min(top, 0.0) - 40.0
        val, _ = integrate.quad(f, lo, top, epsabs=tol, epsrel=1e-12, limit=500)
        return val

    return half(c1, c2) + half(c2, c1)


def mellin_convolution_pdf(x, p: SumProblem, cfg: QuadratureConfig | None = None):
    """Density of Z by repeated Mellin convolution (nested quadrature, N <= 3).

    f_{Z_n}(x) = integral over (delta^{n-1}, x/delta) of
                 f_Y(x/y) f_{Z_{n-1}}(y) / y dy
    """
    cfg = cfg or DEFAULT_CONFIG
    if p.n > 3:
        raise UnsupportedError(f"direct convolution supports N <= 3, got {p.n}")
    xs = np.asarray(x, dtype=float)
    out = np.empty(xs.shape)
    d = p.delta
    comps = p.components
    tol = min(cfg.adaptive_tol, 1e-10)
    for idx, xv in np.ndenumerate(xs):
        if p.n == 1:
            out[idx] = shifted_lognormal_pdf(xv, ShiftedLognormal(comps[0], d))
        elif p.n == 2:
            out[idx] = _conv2_pdf(float(xv), comps[0], comps[1], d, tol)
        else:
            out[idx] = _conv3_pdf(float(xv), comps, d, tol)
    return out[()] if out.ndim == 0 else out


def _conv3_pdf(x: float, comps: Sequence[GaussianParams], delta: float, tol: float) -> float:
    if x <= delta ** 3:
        return 0.0
    c1, c2, c3 = comps
    f3 = ShiftedLognormal(c3, delta)
    lower2 = delta * delta
    upper2 = x / delta
    # outer variable y = value of Y1*Y2 in (delta^2, x/delta); integrate
    # in v = log(y - delta^2), which resolves the sharp lower edge
    if upper2 <= lower2:
        return 0.0
    vmax = math.log(upper2 - lower2)
    # split where Y3 = x / y approaches delta (sharp upper edge)
    def g(v):
        y = lower2 + math.exp(v)
        return float(shifted_lognormal_pdf(x / y, f3)) * _conv2_pdf(y, c1, c2, delta, tol * 1e-2) / y * math.exp(v)

    # near the upper edge integrate in w = log(x/y - delta)
    ysplit = x / (delta + math.exp(c3.mu)) if delta > 0 else x / math.exp(c3.mu)
    ysplit = min(max(ysplit, lower2 * (1 + 1e-12)), upper2)
    vsplit = math.log(ysplit - lower2) if ysplit > lower2 else vmax
    left, _ = integrate.quad(g, vsplit - 60.0, vsplit, epsabs=tol, epsrel=1e-10, limit=500)

    def g2(u):
        y3 = delta + math.exp(c3.mu + c3.sigma * u)
        y = x / y3
        if y <= lower2:
            return 0.0
        return math.exp(-0.5 * u * u - _LOG_SQRT_2PI) * _conv2_pdf(y, c1, c2, delta, tol * 1e-2) / y3

    if ysplit < upper2:
        utop = (math.log(x / ysplit - delta) - c3.mu) / c3.sigma
        right, _ = integrate.quad(g2, utop - 40.0, utop, epsabs=tol, epsrel=1e-10, limit=500)
    else:
        right = 0.0
    return left + right


def _log_shift_cdf(c: float, comp: GaussianParams, delta: float) -> float:
    """P(log1p(e^X/delta) <= c), or P(X <= c) when delta = 0."""
    if delta == 0:
        return float(special.ndtr((c - comp.mu) / comp.sigma))
    if c <= 0:
        return 0.0
    return float(special.ndtr((math.log(delta) + math.log(math.expm1(c)) - comp.mu) / comp.sigma))


def _conv_log_cdf(c: float, comps: Sequence[GaussianParams], delta: float, tol: float) -> float:
    """P(sum of log1p(e^{X_i}/delta) <= c) by nested quadrature over the X_i."""
    if len(comps) == 1:
        return _log_shift_cdf(c, comps[0], delta)
    if delta > 0 and c <= 0:
        return 0.0
    head, rest = comps[0], comps[1:]
    comp = _component(head.mu, head.sigma, delta)
    if delta > 0:
        top = (math.log(delta) + math.log(math.expm1(c)) - head.mu) / head.sigma
    else:
        top = 40.0
    top = min(top, 40.0)
    if top < -40.0:
        return 0.0

    def f(u):
        return math.exp(-0.5 * u * u - _LOG_SQRT_2PI) * _conv_log_cdf(
            c - float(comp.log_shift(u)), rest, delta, tol)

    val, _ = integrate.quad(f, -40.0, top, epsabs=0.0, epsrel=tol, limit=200, points=[min(0.0, top)] if top > -40 else None)
    return min(max(val, 0.0), 1.0)


def convolution_log_cdf(t, p: SumProblem, cfg: QuadratureConfig | None = None):
    """P(T <= t) for T = ln Z - N ln(delta) by nested quadrature (N <= 3).

    Independent of the transform route; used as its cross-check.
    """
    cfg = cfg or DEFAULT_CONFIG
    if p.n > 3:
        raise UnsupportedError(f"direct convolution supports N <= 3, got {p.n}")
    tt = np.asarray(t, dtype=float)
    tol = min(cfg.adaptive_tol, 1e-10)
    out = np.array([_conv_log_cdf(float(v), p.components, p.delta, tol) for v in tt.ravel()]).reshape(tt.shape)
    return out[()] if out.ndim == 0 else out
