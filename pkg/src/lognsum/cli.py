"""Command-line front end: ``lognsum run`` and ``lognsum figure``.

Every output is a CSV file with ``#`` metadata lines (configuration, library
version, RNG algorithm and seed) followed by a header row and one row per
grid point, numbers formatted with %.12g.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, approx, bound, mellin, montecarlo
from .core import GaussianParams, ShiftedLognormal, SumProblem, db_to_natural
from .errors import LognsumError, NumericFailureError, UnsupportedError

METHODS = ("tm_bound", "gm_bound", "left_tail", "farley", "approx2", "approx_rec", "clt", "mc", "mellin_conv")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    """Invalid run configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    method: str = "tm_bound"
    n: int = 2
    mu: float | None = None
    sigma: float | None = None
    mu_db: float | None = None
    sigma_db: float | None = None
    delta: float = 100.0
    gamma_min: float = 0.05
    gamma_max: float = 50.0
    points: int = 200
    log_grid: bool = True
    quantity: str = "ccdf"
    alpha: float = 1.0
    beta_max: float | None = None
    beta_density: float | None = None
    tol: float = 1e-10
    m_order: int = 20
    samples: int = 1_000_000
    seed: int = 20240101
    batch: int = 1 << 20
    out: str | None = None

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r} (choose from {', '.join(METHODS)})")
        if self.quantity not in ("cdf", "ccdf"):
            raise ConfigError(f"quantity: must be 'cdf' or 'ccdf', got {self.quantity!r}")
        if (self.mu is None) == (self.mu_db is None):
            raise ConfigError("mu/mu_db: give exactly one of mu and mu_db")
        if (self.sigma is None) == (self.sigma_db is None):
            raise ConfigError("sigma/sigma_db: give exactly one of sigma and sigma_db")
        for name in ("sigma", "sigma_db"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name}: must be positive, got {v}")
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if not self.delta >= 0 or not math.isfinite(self.delta):
            raise ConfigError(f"delta: must be finite and >= 0, got {self.delta}")
        if not self.gamma_min < self.gamma_max:
            raise ConfigError(f"gamma_min/gamma_max: need gamma_min < gamma_max, got {self.gamma_min} >= {self.gamma_max}")
        if self.log_grid and not self.gamma_min > 0:
            raise ConfigError(f"gamma_min: a log grid needs gamma_min > 0, got {self.gamma_min}")
        if self.points < 1:
            raise ConfigError(f"points: must be >= 1, got {self.points}")
        if self.samples < 1 or self.batch < 1:
            raise ConfigError("samples/batch: must be >= 1")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {self.seed}")
        if not 1 <= self.m_order <= 64:
            raise ConfigError(f"m_order: must be in [1, 64], got {self.m_order}")
        if self.method in ("tm_bound", "mellin_conv") and not self.delta > 0:
            raise ConfigError(f"delta: method {self.method} needs delta > 0")
        if self.method == "approx2" and self.n != 2:
            raise ConfigError(f"n: approx2 is the N = 2 approximation, got n = {self.n}")
        if self.method == "approx_rec" and self.n < 2:
            raise ConfigError(f"n: approx_rec needs n >= 2, got {self.n}")
        if self.method == "mellin_conv" and self.n > 3:
            raise ConfigError(f"n: mellin_conv supports n <= 3, got {self.n}")
        try:
            self.quadrature()
        except LognsumError as exc:
            raise ConfigError(f"quadrature: {exc}") from None
        return self

    @property
    def params(self) -> GaussianParams:
        if self.mu_db is not None or self.sigma_db is not None:
            mu = self.mu if self.mu is not None else db_to_natural(self.mu_db, 1.0).mu
            sigma = self.sigma if self.sigma is not None else db_to_natural(0.0, self.sigma_db).sigma
            return GaussianParams(mu, sigma)
        return GaussianParams(self.mu, self.sigma)

    def grid(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.gamma_min])
        if self.log_grid:
            return np.geomspace(self.gamma_min, self.gamma_max, self.points)
        return np.linspace(self.gamma_min, self.gamma_max, self.points)

    def quadrature(self) -> mellin.QuadratureConfig:
        return mellin.QuadratureConfig(alpha=self.alpha, beta_max=self.beta_max,
                                       beta_density=self.beta_density, adaptive_tol=self.tol)

    def mc(self) -> montecarlo.MCConfig:
        return montecarlo.MCConfig(samples=self.samples, seed=self.seed, batch=self.batch)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must hold a JSON object")
    out = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in _FIELD_TYPES:
            raise ConfigError(f"config: {path}: unknown field {key!r}")
        out[name] = value
    return out


def _coerce(values: dict) -> RunConfig:
    cfg = RunConfig()
    for name, value in values.items():
        default = getattr(cfg, name)
        try:
            if value is None:
                pass
            elif name in ("method", "quantity", "out"):
                value = str(value)
            elif name == "log_grid":
                if not isinstance(value, bool):
                    raise TypeError
            elif name in ("n", "points", "samples", "batch", "m_order", "seed"):
                if isinstance(value, bool) or float(value) != int(value):
                    raise TypeError
                value = int(value)
            else:
                value = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: invalid value {value!r}") from None
        if value is None and default is not None and name not in ("mu", "sigma", "mu_db", "sigma_db"):
            continue
        setattr(cfg, name, value)
    return cfg


# ---------------------------------------------------------------------------
# evaluation


def _threads() -> int:
    try:
        n = int(os.environ.get("LOGNSUM_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _evaluate(cfg: RunConfig, g: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """(cdf, ccdf, stderr) for the configured method on the grid g."""
    p = cfg.params
    n = cfg.n
    q = cfg.quadrature()
    m = cfg.method
    if m == "tm_bound":
        r = bound.tm_bound_cdf(g, SumProblem.iid(n, p.mu, p.sigma, cfg.delta), q)
        return r.value, r.ccdf, None
    if m == "mellin_conv":
        prob = SumProblem.iid(n, p.mu, p.sigma, cfg.delta)
        c = mellin.convolution_log_cdf(bound.tm_threshold(g, n, cfg.delta), prob, q)
        return c, 1.0 - c, None
    if m in ("gm_bound", "left_tail"):
        fn = bound.gm_bound_cdf if m == "gm_bound" else bound.left_tail_cdf
        c = np.asarray(fn(g, [p] * n))
        return c, 1.0 - c, None
    if m == "farley":
        cc = np.asarray(approx.farley_ccdf(g, p, n))
        return 1.0 - cc, cc, None
    if m == "approx2":
        c = np.asarray(approx.approx_n2(g, p))
        return c, 1.0 - c, None
    if m == "approx_rec":
        c = np.asarray(approx.approx_recursive(g, p, n))
        return c, 1.0 - c, None
    if m == "clt":
        return (np.asarray(approx.clt_cdf(g, p, cfg.delta, n, cfg.m_order)),
                np.asarray(approx.clt_ccdf(g, p, cfg.delta, n, cfg.m_order)), None)
    if m == "mc":
        curve = montecarlo.empirical_cdf([p] * n, g, cfg.mc())
        return curve.cdf, curve.ccdf, curve.stderr
    raise ConfigError(f"method: unknown method {m!r}")


def _evaluate_rows(cfg: RunConfig, g: np.ndarray):
    """Column values for the requested quantity; failed rows become nan."""

    def chunk(part):
        try:
            return _evaluate(cfg, part), 0
        except NumericFailureError:
            pass
        rows_c, rows_cc, rows_e, failed = [], [], [], 0
        for v in part:
            try:
                c, cc, e = _evaluate(cfg, np.array([v]))
                rows_c.append(c[0]), rows_cc.append(cc[0]), rows_e.append(None if e is None else e[0])
            except NumericFailureError:
                rows_c.append(math.nan), rows_cc.append(math.nan), rows_e.append(math.nan)
                failed += 1
        err = None if all(e is None for e in rows_e) else np.array(rows_e, dtype=float)
        return (np.array(rows_c), np.array(rows_cc), err), failed

    # Monte-Carlo curves use one sample set for the whole grid
    workers = 1 if cfg.method == "mc" else min(_threads(), len(g))
    parts = np.array_split(g, workers) if workers > 1 else [g]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(chunk, parts))
    else:
        results = [chunk(g)]
    cdf = np.concatenate([r[0][0] for r in results])
    ccdf = np.concatenate([r[0][1] for r in results])
    errs = [r[0][2] for r in results]
    stderr = None if all(e is None for e in errs) else np.concatenate(errs)
    failed = sum(r[1] for r in results)
    return (cdf if cfg.quantity == "cdf" else ccdf), stderr, failed


# ---------------------------------------------------------------------------
# CSV output


def fmt(v: float) -> str:
    """%.12g, keeping a decimal point on integral values (1 -> 1.0)."""
    s = "%.12g" % v
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def _metadata(meta: dict) -> list[str]:
    lines = [f"# lognsum {__version__}"]
    for key, value in meta.items():
        lines.append(f"# {key}: {json.dumps(value, sort_keys=True) if isinstance(value, dict) else value}")
    return lines


def write_csv(path: Path, columns: dict[str, np.ndarray], meta: dict) -> None:
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    lines = _metadata(meta)
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def run(cfg: RunConfig) -> int:
    """Evaluate one method on the configured grid and write the CSV; returns the exit code."""
    cfg.validate()
    g = cfg.grid()
    try:
        values, stderr, failed = _evaluate_rows(cfg, g)
    except UnsupportedError as exc:
        raise ConfigError(f"method: {exc}") from None
    columns = {"gamma": g, cfg.method: values}
    if stderr is not None:
        columns["stderr"] = stderr
    meta = {
        "config": {k: v for k, v in asdict(cfg).items() if k != "out"},
        "rng": montecarlo.RNG_ALGORITHM if cfg.method == "mc" else "none",
        "seed": cfg.seed if cfg.method == "mc" else "none",
    }
    out = Path(cfg.out) if cfg.out else Path(f"{cfg.method}.csv")
    write_csv(out, columns, meta)
    if failed:
        print(f"lognsum: {failed} of {len(g)} rows failed numerically (written as nan)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# figure presets


def _figure_meta(fig: int, mc: montecarlo.MCConfig, extra: dict | None = None) -> dict:
    meta = {"figure": fig, "rng": montecarlo.RNG_ALGORITHM, "seed": mc.seed, "samples": mc.samples}
    if extra:
        meta.update(extra)
    return meta


def _notice(msg: str) -> None:
    print(f"lognsum: skipped: {msg}", file=sys.stderr)


def _mc_ccdf(params: GaussianParams, n: int, g: np.ndarray, mc: montecarlo.MCConfig):
    curve = montecarlo.empirical_cdf([params] * n, g, mc)
    return curve.ccdf, curve.stderr


def _figure1(out: Path, mc, q, points):
    beta = np.linspace(0.0, 20.0, max(points, 2))
    cols = {"beta": beta}
    for delta in (2.0, 10.0):
        for sigma in (1.0, 2.0):
            d = ShiftedLognormal(GaussianParams(0.0, sigma), delta)
            phi = mellin.mellin_transform(d, 1.0 + 1j * beta, q)
            tag = f"delta{delta:g}_sigma{sigma:g}"
            cols[f"re_{tag}"] = phi.real
            cols[f"im_{tag}"] = phi.imag
    write_csv(out / "fig1_mellin_transform.csv", cols, {"figure": 1, "alpha": 1.0, "mu": 0.0})
    return 0


def _figure2(out: Path, mc, q, points):
    p = GaussianParams(0.0, 1.0)
    g = np.geomspace(1e-3, 1.0, points)
    delta = 100.0
    r = bound.tm_bound_cdf(g, SumProblem.iid(2, 0.0, 1.0, delta), q)
    cols = {"gamma": g, f"tm_bound_cdf_delta{delta:g}": r.value, "left_tail_cdf": bound.left_tail_cdf(g, [p, p])}
    _notice("figure 2 Marcum-Q lower bound (formula not given in the paper)")
    write_csv(out / "fig2_left_tail.csv", cols, _figure_meta(2, mc, {"n": 2, "sigma": 1.0, "mu": 0.0}))
    return int(np.any(r.diagnostics > 1e-6))


_BOUND_GRIDS = {
    # (sigma, n): visible gamma range
    (1.0, 2): (0.05, 50.0), (1.0, 6): (0.5, 100.0),
    (2.0, 2): (0.01, 500.0), (2.0, 6): (0.1, 1000.0),
}
_CDF_GRIDS = {2: (0.01, 5.0), 6: (0.1, 10.0)}


def _bound_figure(fig: int, sigma: float, out: Path, mc, q, points, cdf: bool = False):
    p = GaussianParams(0.0, sigma)
    bad = 0
    for n in (2, 6):
        lo, hi = _CDF_GRIDS[n] if cdf else _BOUND_GRIDS[(sigma, n)]
        g = np.geomspace(lo, hi, points)
        cols = {"gamma": g}
        for delta in (10.0, 100.0):
            r = bound.tm_bound_cdf(g, SumProblem.iid(n, 0.0, sigma, delta), q)
            cols[f"tm_bound_delta{delta:g}"] = r.value if cdf else r.ccdf
            bad += int(np.any(r.diagnostics > 1e-6))
        far = np.asarray(approx.farley_ccdf(g, p, n))
        cols["farley"] = 1.0 - far if cdf else far
        curve = montecarlo.empirical_cdf([p] * n, g, mc)
        cols["mc"] = curve.cdf if cdf else curve.ccdf
        cols["mc_stderr"] = curve.stderr
        if n == 6:
            _notice(f"figure {fig}, N=6: improved order-statistics integral bound (formula not given in the paper)")
        kind = "cdf" if cdf else "ccdf"
        write_csv(out / f"fig{fig}_{kind}_n{n}.csv", cols,
                  _figure_meta(fig, mc, {"n": n, "sigma": sigma, "mu": 0.0, "quantity": kind}))
    return bad


def _figure6(out: Path, mc, q, points):
    g = np.geomspace(0.1, 100.0, points)
    cols = {"gamma": g}
    inset = {"gamma": g}
    for sigma in (0.5, 1.0, 2.0):
        p = GaussianParams(0.0, sigma)
        cols[f"approx2_sigma{sigma:g}"] = 1.0 - np.asarray(approx.approx_n2(g, p))
        cols[f"farley_sigma{sigma:g}"] = approx.farley_ccdf(g, p, 2)
        cc, err = _mc_ccdf(p, 2, g, mc)
        cols[f"mc_sigma{sigma:g}"] = cc
        cols[f"mc_stderr_sigma{sigma:g}"] = err
        inset[f"epsilon_sigma{sigma:g}"] = approx.x0_epsilon(g, p)
    write_csv(out / "fig6_ccdf_n2.csv", cols, _figure_meta(6, mc, {"n": 2, "mu": 0.0, "quantity": "ccdf"}))
    write_csv(out / "fig6_inset_epsilon.csv", inset, {"figure": 6, "n": 2, "mu": 0.0})
    return 0


def _figure7(out: Path, mc, q, points):
    g = np.geomspace(0.1, 200.0, points)
    cols = {"gamma": g}
    for sigma in (0.5, 1.0, 2.0):
        p = GaussianParams(0.0, sigma)
        cols[f"approx_rec_sigma{sigma:g}"] = 1.0 - np.asarray(approx.approx_recursive(g, p, 3))
        cols[f"farley_sigma{sigma:g}"] = approx.farley_ccdf(g, p, 3)
        cc, err = _mc_ccdf(p, 3, g, mc)
        cols[f"mc_sigma{sigma:g}"] = cc
        cols[f"mc_stderr_sigma{sigma:g}"] = err
    write_csv(out / "fig7_ccdf_n3.csv", cols, _figure_meta(7, mc, {"n": 3, "mu": 0.0, "quantity": "ccdf"}))
    p = GaussianParams(0.0, 0.5)
    z = np.linspace(1.0, 3.0, points)
    cc, err = _mc_ccdf(p, 3, z, mc)
    zoom = {"gamma": z, "approx_rec_sigma0.5": 1.0 - np.asarray(approx.approx_recursive(z, p, 3)),
            "mc_sigma0.5": cc, "mc_stderr_sigma0.5": err}
    write_csv(out / "fig7_inset_zoom.csv", zoom, _figure_meta(7, mc, {"n": 3, "sigma": 0.5, "quantity": "ccdf"}))
    return 0


def _figure8(out: Path, mc, q, points):
    p = GaussianParams(0.0, 1.0)
    n = 30
    g = np.geomspace(20.0, 200.0, points)
    cols = {"gamma": g}
    for delta in (10.0, 100.0):
        cols[f"clt_delta{delta:g}"] = approx.clt_ccdf(g, p, delta, n, 20)
    cols["farley"] = approx.farley_ccdf(g, p, n)
    cc, err = _mc_ccdf(p, n, g, mc)
    cols["mc"], cols["mc_stderr"] = cc, err
    write_csv(out / "fig8_ccdf_n30.csv", cols, _figure_meta(8, mc, {"n": n, "sigma": 1.0, "mu": 0.0, "quantity": "ccdf"}))
    deltas = np.linspace(10.0, 200.0, max(points // 4, 2))
    ref, ref_err = _mc_ccdf(p, n, np.array([70.0]), mc)
    inset = {"delta": deltas,
             "clt_ccdf_gamma70": [float(approx.clt_ccdf(70.0, p, d, n, 20)) for d in deltas],
             "mc_ccdf_gamma70": np.full(deltas.shape, ref[0]),
             "mc_stderr_gamma70": np.full(deltas.shape, ref_err[0])}
    write_csv(out / "fig8_inset_delta.csv", inset, _figure_meta(8, mc, {"n": n, "gamma": 70.0}))
    return 0


def figure(fig: int, out_dir: str | Path, mc: montecarlo.MCConfig | None = None,
           q: mellin.QuadratureConfig | None = None, points: int = 200) -> int:
    """Write the CSV files behind one of the paper's figures; returns the exit code."""
    out = Path(out_dir)
    mc = mc or montecarlo.MCConfig()
    q = q or mellin.DEFAULT_CONFIG
    table = {
        1: _figure1, 2: _figure2,
        3: lambda *a: _bound_figure(3, 1.0, *a),
        4: lambda *a: _bound_figure(4, 2.0, *a),
        5: lambda *a: _bound_figure(5, 1.0, *a, cdf=True),
        6: _figure6, 7: _figure7, 8: _figure8,
    }
    if fig not in table:
        raise ConfigError(f"figure: id must be in 1..8, got {fig}")
    bad = table[fig](out, mc, q, points)
    return EXIT_NUMERIC if bad else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lognsum", description="Bounds and approximations for lognormal sums.")
    ap.add_argument("--version", action="version", version=f"lognsum {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evaluate one method on a gamma grid")
    r.add_argument("--config", help="JSON file with run settings; flags override it")
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--n", type=int)
    r.add_argument("--mu", type=float)
    r.add_argument("--sigma", type=float)
    r.add_argument("--mu-db", type=float)
    r.add_argument("--sigma-db", type=float)
    r.add_argument("--delta", type=float)
    r.add_argument("--gamma-min", type=float)
    r.add_argument("--gamma-max", type=float)
    r.add_argument("--points", type=int)
    grid = r.add_mutually_exclusive_group()
    grid.add_argument("--log-grid", dest="log_grid", action="store_const", const=True)
    grid.add_argument("--linear-grid", dest="log_grid", action="store_const", const=False)
    r.add_argument("--quantity", choices=("cdf", "ccdf"))
    r.add_argument("--alpha", type=float)
    r.add_argument("--beta-max", type=float)
    r.add_argument("--beta-density", type=float)
    r.add_argument("--tol", type=float)
    r.add_argument("--m-order", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--batch", type=int)
    r.add_argument("--out")

    f = sub.add_parser("figure", help="write the data behind one of figures 1-8")
    f.add_argument("id", type=int)
    f.add_argument("--out-dir", default="figs")
    f.add_argument("--points", type=int, default=200)
    f.add_argument("--samples", type=int, default=1_000_000)
    f.add_argument("--seed", type=int, default=20240101)
    f.add_argument("--batch", type=int, default=1 << 20)
    f.add_argument("--alpha", type=float, default=1.0)
    f.add_argument("--tol", type=float, default=1e-10)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    values = _load_json(ns.config) if ns.config else {}
    for name in _FIELD_TYPES:
        v = getattr(ns, name, None)
        if v is not None:
            values[name] = v
    # a flag in one unit system replaces the file's value in the other
    for a, b in (("mu", "mu_db"), ("sigma", "sigma_db")):
        if getattr(ns, a, None) is not None:
            values.pop(b, None)
        if getattr(ns, b, None) is not None:
            values.pop(a, None)
    return _coerce(values)


def main(argv: list[str] | None = None) -> int:
    ns = _parser().parse_args(argv)
    try:
        if ns.command == "run":
            return run(config_from_args(ns))
        if ns.points < 2:
            raise ConfigError("points: must be >= 2")
        try:
            mc = montecarlo.MCConfig(samples=ns.samples, seed=ns.seed, batch=ns.batch)
            q = mellin.QuadratureConfig(alpha=ns.alpha, adaptive_tol=ns.tol)
        except LognsumError as exc:
            raise ConfigError(str(exc)) from None
        return figure(ns.id, ns.out_dir, mc, q, ns.points)
    except ConfigError as exc:
        print(f"lognsum: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailureError as exc:
        print(f"lognsum: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
