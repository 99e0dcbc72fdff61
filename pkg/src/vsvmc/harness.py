"""Pricing runs, convergence studies, table reproduction and CSV output.

Paths are processed in fixed-size chunks of consecutive indices.  Each chunk
is simulated once and every requested estimator is evaluated on it, so the
estimators share paths.  Chunks may run on a thread pool; results are merged
in chunk order, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import estimators as est
from .config import ExperimentConfig, check
from .errors import GridIncompatible, VSVError
from .market_model import VSVModel, discount_factor, simulate_bundle, simulate_log_price
from .sandwiched_sde import simulate_volatility_path
from .stochastic_driver import DriverIncrements, TimeGrid, mix_increments
from .volterra_noise import EXACT, build_backend, generate_noise_path

THREADS_ENV = "VSV_THREADS"
REPORT_HEADER = ("estimator", "H", "N", "paths", "mean", "sd", "stderr", "runtime_ms", "seed")
TABLE_STEPS = (10, 100, 1000, 10000)
TABLE_HURST = (0.7, 0.3)
TABLE_PATHS = 10000
TABLE_ESTIMATORS = {1: ("rep2", "cond-gauss"), 2: ("mmm",)}


@dataclass
class ReportRow:
    estimator: str
    hurst: float
    steps: int
    paths: int
    mean: float
    sd: float
    stderr: float
    runtime_ms: float
    seed: int

    def as_record(self) -> list:
        g = lambda v: format(float(v), ".6g")  # noqa: E731
        return [self.estimator, g(self.hurst), str(self.steps), str(self.paths), g(self.mean),
                g(self.sd), g(self.stderr), g(self.runtime_ms), str(self.seed)]


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def chunk_ranges(paths: int, chunk_size: int) -> list:
    return [range(i, min(i + chunk_size, paths)) for i in range(0, paths, chunk_size)]


def _annotate(exc: Exception, seed: int, paths: range, replay) -> Exception:
    # locate the first failing path so it can be replayed alone
    for p in paths:
        try:
            replay(range(p, p + 1))
        except VSVError:
            msg = f"{exc} [seed={seed}, path={p}]"
            try:
                return type(exc)(msg)
            except TypeError:
                return exc
    return exc


def chunk_samples(cfg: ExperimentConfig, model: VSVModel, grid: TimeGrid, indices: range) -> dict:
    """Samples of every requested estimator on one chunk, plus timings in ms."""
    t0 = time.perf_counter()
    bundle = simulate_bundle(model, grid, cfg.seed, indices)
    sim_ms = 1e3 * (time.perf_counter() - t0)
    spec = cfg.payoff()
    corr = model.correlation
    out = {}
    for name in cfg.estimators:
        t0 = time.perf_counter()
        if name == est.NAIVE:
            s = est.naive_samples(bundle, spec, cfg.alpha)
        elif name == est.REP1:
            s = est.rep1_samples(bundle, spec, corr.u11, cfg.horizon)
        elif name == est.REP2:
            s = est.rep2_samples(bundle, spec, cfg.alpha, corr.u11, cfg.horizon)
        elif name == est.MMM:
            s = est.measure_change_samples(bundle, spec, cfg.alpha, corr.u11, cfg.horizon)
        else:
            mu = model.market.mu_values(grid)[0]
            s = est.cond_gauss_samples(
                bundle.y[:, 0], bundle.dw[:, 1], spec, mu, corr.u11, corr.u12, grid,
                math.log(cfg.s0[0]),
            )
        out[name] = (s, sim_ms + 1e3 * (time.perf_counter() - t0))
    return out


def run_pricing(cfg: ExperimentConfig, threads: int | None = None, model: VSVModel | None = None):
    """One row per requested estimator; estimators share the simulated paths."""
    check(cfg)
    if cfg.paths == 0:
        warnings.warn("paths = 0: nothing to simulate, report is empty", RuntimeWarning, stacklevel=2)
        return []
    grid = cfg.grid()
    model = model or cfg.build_model()
    model.backends(grid)  # factorize once, before any worker starts
    chunks = chunk_ranges(cfg.paths, cfg.chunk_size)

    def work(indices):
        try:
            return chunk_samples(cfg, model, grid, indices)
        except VSVError as exc:
            raise _annotate(exc, cfg.seed, indices, lambda r: chunk_samples(cfg, model, grid, r)) from exc

    n_threads = resolve_threads(threads)
    if n_threads == 1:
        results = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(work, chunks))

    scale = discount_factor(cfg.nu, grid) if cfg.discount else 1.0
    rows = []
    for name in cfg.estimators:
        samples = np.concatenate([r[name][0] for r in results]) * scale
        runtime = sum(r[name][1] for r in results) if cfg.timing else 0.0
        mean, sd, stderr = est.summarize(samples)
        rows.append(ReportRow(name, cfg.hurst[0], grid.steps, samples.size, mean, sd, stderr, runtime, cfg.seed))
    return rows


def emit_report(rows, path=None) -> str:
    """Write the CSV report to ``path`` (if given) and return its text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow(row.as_record())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def reproduce_table(which: int, overrides: dict | None = None, steps=TABLE_STEPS,
                    hursts=TABLE_HURST, threads: int | None = None):
    if which not in TABLE_ESTIMATORS:
        raise ValueError(f"table must be 1 or 2, got {which}")
    base = ExperimentConfig(paths=TABLE_PATHS, estimators=TABLE_ESTIMATORS[which])
    if overrides:
        base = base.replace(**overrides)
    rows = []
    for h in hursts:
        model = None
        for n in steps:
            cfg = base.replace(hurst=(h,) * base.dim, steps=n)
            model = cfg.build_model() if model is None else model
            rows.extend(run_pricing(cfg, threads, model=model))
    return rows


# --- strong convergence -----------------------------------------------------

@dataclass
class ConvergenceReport:
    steps: list
    dt: np.ndarray
    err_y: np.ndarray
    err_x: np.ndarray
    slope_y: float
    slope_x: float
    band_y: tuple = field(default=(np.nan, np.nan))
    band_x: tuple = field(default=(np.nan, np.nan))


def _slope(dt, err, level=0.95):
    fit = stats.linregress(np.log(dt), np.log(err))
    q = stats.t.ppf(0.5 + level / 2, len(dt) - 2) if len(dt) > 2 else np.nan
    return fit.slope, (fit.slope - q * fit.stderr, fit.slope + q * fit.stderr)


def _coarse_noise(mode: str, factor: int, z_fine, dby_fine, coarse_backends):
    if mode == EXACT:
        # exact fBm on the fine grid restricted to the coarse nodes is exact fBm there
        return z_fine[..., ::factor]
    m, d, n_fine = dby_fine.shape
    db = dby_fine.reshape(m, d, n_fine // factor, factor).sum(axis=-1)
    return np.stack([generate_noise_path(bk, driver_row=db[:, i]) for i, bk in enumerate(coarse_backends)], axis=1)


def run_convergence_study(cfg: ExperimentConfig, steps_list, ref_steps: int, paths: int = 500,
                          threads: int | None = None) -> ConvergenceReport:
    """L2 of the sup-over-nodes error against a fine reference on the same paths.

    Coarse schemes reuse the reference paths' randomness: price increments
    are block sums of the fine ones, and so are the volatility increments
    feeding the quadrature noise; exact fBm is restricted to the coarse nodes.
    """
    steps_list = sorted(int(n) for n in steps_list)
    for n in steps_list:
        if n <= 0 or ref_steps % n:
            raise GridIncompatible(f"N={n} does not divide N_ref={ref_steps}", "N")
    cfg = check(cfg.replace(steps=ref_steps, paths=paths))
    model = cfg.build_model()
    fine = cfg.grid()
    model.backends(fine)
    mode = model.backend_mode
    coarse = {n: fine.coarsen(ref_steps // n) for n in steps_list}
    coarse_backends = {
        n: tuple(build_backend(k, g, mode) for k in model.kernels) if mode != EXACT else ()
        for n, g in coarse.items()
    }
    mu = model.market.mu_values(fine)

    def work(indices):
        b = simulate_bundle(model, fine, cfg.seed, indices)
        dbs, dby, _ = mix_increments(model.correlation, DriverIncrements(b.dw, fine.dt))
        m = len(indices)
        out = []
        for n in steps_list:
            f = ref_steps // n
            g = coarse[n]
            z = _coarse_noise(mode, f, b.z, dby, coarse_backends[n])
            ey = np.zeros(m)
            ex = np.zeros(m)
            for i in range(model.dim):
                y = simulate_volatility_path(z[:, i], model.drifts[i], model.bounds[i], g, model.y0[i], model.tol)
                db = dbs[:, i].reshape(m, n, f).sum(axis=-1)
                x = simulate_log_price(y, db, mu[i, ::f], g, math.log(model.market.s0[i]))
                ey = np.maximum(ey, np.max(np.abs(y - b.y[:, i, ::f]), axis=-1))
                ex = np.maximum(ex, np.max(np.abs(x - b.x[:, i, ::f]), axis=-1))
            out.append((ey, ex))
        return out

    chunks = chunk_ranges(paths, cfg.chunk_size)
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        results = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(work, chunks))

    err_y = np.array([math.sqrt(np.mean(np.concatenate([r[j][0] for r in results]) ** 2))
                      for j in range(len(steps_list))])
    err_x = np.array([math.sqrt(np.mean(np.concatenate([r[j][1] for r in results]) ** 2))
                      for j in range(len(steps_list))])
    dt = np.array([coarse[n].dt for n in steps_list])
    sy, by = _slope(dt, err_y)
    sx, bx = _slope(dt, err_x)
    return ConvergenceReport(steps_list, dt, err_y, err_x, sy, sx, by, bx)


def convergence_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "dt", "err_y", "err_x"])
    for n, dt, ey, ex in zip(report.steps, report.dt, report.err_y, report.err_x):
        w.writerow([n, format(dt, ".6g"), format(ey, ".6g"), format(ex, ".6g")])
    w.writerow([])
    w.writerow(["quantity", "slope", "band_low", "band_high"])
    for name, s, band in (("Y", report.slope_y, report.band_y), ("X", report.slope_x, report.band_x)):
        w.writerow([name, format(s, ".6g"), format(band[0], ".6g"), format(band[1], ".6g")])
    return buf.getvalue()


def dump_paths(cfg: ExperimentConfig, count: int, path=None) -> str:
    """Raw ``Z``, ``Y`` and ``X`` at every node for the first ``count`` paths."""
    check(cfg)
    model = cfg.build_model()
    grid = cfg.grid()
    b = simulate_bundle(model, grid, cfg.seed, range(count))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "asset", "t", "z", "y", "x"])
    for p in range(count):
        for i in range(model.dim):
            for k, t in enumerate(grid.nodes):
                w.writerow([p, i, format(t, ".6g"), format(b.z[p, i, k], ".10g"),
                            format(b.y[p, i, k], ".10g"), format(b.x[p, i, k], ".10g")])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
