"""Monte Carlo estimators of ``E[f(sum_i alpha_i S_i(T))]``.

``naive``       f of the simulated basket; rate degraded by the discontinuity
``rep1``        G(X(T)) times the Malliavin weight, one asset only
``rep2``        F(basket) / (alpha_1 S_1(T)) times ``1 + weight``
``mmm``         ``rep2`` under the minimal martingale measure
``cond-gauss``  price integrated out per volatility path, one asset only
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BackendContract, DimensionError, InsufficientSamples, QuadratureFailure
from .market_model import PathBundle
from .payoff import PayoffSpec, basket_G1
from .stochastic_driver import TimeGrid

NAIVE = "naive"
REP1 = "rep1"
REP2 = "rep2"
MMM = "mmm"
COND_GAUSS = "cond-gauss"
ESTIMATOR_IDS = (NAIVE, REP1, REP2, MMM, COND_GAUSS)

TRUNCATION = 10.0
SIMPSON_RTOL = 1e-8
SIMPSON_START = 8
SIMPSON_MAX_DOUBLINGS = 16
DET_WARN = 1e-12


@dataclass(eq=False)
class EstimatorResult:
    estimator: str
    samples: np.ndarray
    mean: float
    sd: float
    stderr: float
    paths: int
    steps: int
    runtime_ms: float = 0.0


def summarize(samples):
    """``(mean, sd, stderr)`` with the unbiased standard deviation."""
    samples = np.asarray(samples, dtype=float)
    m = samples.size
    if m < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {m}", "paths")
    # np.sum is pairwise for contiguous float arrays, so the result depends
    # only on the order of the samples, not on how they were produced.
    mean = float(np.sum(samples) / m)
    dev = samples - mean
    sd = math.sqrt(float(np.sum(dev * dev)) / (m - 1))
    return mean, sd, sd / math.sqrt(m)


def make_result(estimator: str, samples, steps: int, runtime_ms: float = 0.0) -> EstimatorResult:
    samples = np.ascontiguousarray(samples, dtype=float)
    mean, sd, stderr = summarize(samples)
    return EstimatorResult(estimator, samples, mean, sd, stderr, samples.size, steps, runtime_ms)


# --- per-bundle samples -----------------------------------------------------

def naive_samples(bundle: PathBundle, spec: PayoffSpec, alpha) -> np.ndarray:
    basket = bundle.s_terminal @ np.asarray(alpha, dtype=float)
    return np.asarray(spec.f(basket), dtype=float)


def rep1_samples(bundle: PathBundle, spec: PayoffSpec, u11: float, horizon: float) -> np.ndarray:
    if bundle.x.shape[1] != 1:
        raise DimensionError("the first representation is for a single asset", "d")
    g = np.asarray(spec.G(bundle.x_terminal[:, 0]), dtype=float)
    return g * bundle.ito / (horizon * u11)


def rep2_samples(bundle: PathBundle, spec: PayoffSpec, alpha, u11: float, horizon: float) -> np.ndarray:
    g1 = basket_G1(spec, alpha, bundle.x_terminal)
    return g1 * (1.0 + bundle.ito / (horizon * u11))


def measure_change_samples(bundle: PathBundle, spec: PayoffSpec, alpha, u11: float,
                           horizon: float) -> np.ndarray:
    if not bundle.joint_law_faithful:
        raise BackendContract(
            "measure change needs the quadrature backend when volatility noise is correlated",
            "backend",
        )
    g1 = basket_G1(spec, alpha, bundle.x_terminal)
    return bundle.density * g1 * (1.0 + (bundle.ito - bundle.correction) / (horizon * u11))


@dataclass(eq=False)
class CondGaussSummary:
    """Per-path conditional moments of the log-price given the volatility noise."""

    m: np.ndarray
    v1sq: np.ndarray
    v2sq: np.ndarray
    det_c: np.ndarray


def cond_gauss_summary(y, dw2, mu_vals, u11: float, u12: float, grid: TimeGrid,
                       x0: float) -> CondGaussSummary:
    """``y``: ``(M, N + 1)`` volatility; ``dw2``: ``(M, N)`` increments of ``W~_2``."""
    y = np.asarray(y, dtype=float)
    yl = y[..., :-1]
    mu_vals = np.asarray(mu_vals, dtype=float)[:-1]
    m = x0 + grid.dt * np.sum(mu_vals - 0.5 * yl * yl, axis=-1) + u12 * np.sum(yl * dw2, axis=-1)
    v1sq = grid.dt * np.sum(yl * yl, axis=-1)
    v2sq = grid.dt * np.sum(1.0 / (yl * yl), axis=-1)
    det_c = u11**2 * (v1sq * v2sq - grid.horizon**2)
    return CondGaussSummary(m, v1sq, v2sq, det_c)


def _simpson_pieces(func, edges, panels):
    # edges: (M, P + 1) sorted; composite Simpson on each piece with `panels` panels
    a, b = edges[:, :-1], edges[:, 1:]
    u = np.linspace(0.0, 1.0, 2 * panels + 1)
    z = a[..., None] + (b - a)[..., None] * u
    w = np.ones(2 * panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    vals = func(z)
    h = (b - a) / (2 * panels)
    return np.sum(h / 3.0 * (vals @ w), axis=-1), np.sum(h / 3.0 * (np.abs(vals) @ w), axis=-1)


def gaussian_weight_integral(spec: PayoffSpec, m, sigma, rtol: float = SIMPSON_RTOL) -> np.ndarray:
    """``(1 / (sqrt(2 pi) sigma)) int G(m + sigma z) z exp(-z^2 / 2) dz`` per path.

    The range is truncated to ``|z| <= 10`` and split at the kinks of ``G``.
    Panels double until successive values agree to ``rtol`` relative to
    ``int |integrand|`` on every path.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    kinks = spec.log_kinks()
    inner = (kinks[None, :] - m[:, None]) / sigma[:, None]
    inner = np.clip(inner, -TRUNCATION, TRUNCATION)
    edges = np.concatenate(
        [np.full((m.size, 1), -TRUNCATION), np.sort(inner, axis=1), np.full((m.size, 1), TRUNCATION)],
        axis=1,
    )

    def integrand(z):
        x = m[:, None, None] + sigma[:, None, None] * z
        return np.asarray(spec.G(x), dtype=float) * z * np.exp(-0.5 * z * z)

    panels = SIMPSON_START
    prev, _ = _simpson_pieces(integrand, edges, panels)
    for _ in range(SIMPSON_MAX_DOUBLINGS):
        panels *= 2
        cur, scale = _simpson_pieces(integrand, edges, panels)
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(np.abs(cur), scale)):
            return cur / (math.sqrt(2.0 * math.pi) * sigma)
        prev = cur
    raise QuadratureFailure(f"Simpson refinement did not reach rtol={rtol} with {panels} panels")


def cond_gauss_samples(y, dw2, spec: PayoffSpec, mu_vals, u11: float, u12: float,
                       grid: TimeGrid, x0: float) -> np.ndarray:
    summary = cond_gauss_summary(y, dw2, mu_vals, u11, u12, grid, x0)
    small = int(np.sum(summary.det_c < DET_WARN))
    if small:
        warnings.warn(
            f"{small} paths have det C below {DET_WARN:g}; the conditional density is degenerate "
            "there but the estimator only uses m and V1",
            RuntimeWarning,
            stacklevel=2,
        )
    sigma = u11 * np.sqrt(summary.v1sq)
    return gaussian_weight_integral(spec, summary.m, sigma)


# --- estimators over bundles ------------------------------------------------

def _run(estimator: str, bundles: Sequence[PathBundle], fn) -> EstimatorResult:
    start = time.perf_counter()
    parts = [fn(b) for b in bundles]
    samples = np.concatenate(parts) if parts else np.empty(0)
    steps = bundles[0].grid.steps if bundles else 0
    return make_result(estimator, samples, steps, 1e3 * (time.perf_counter() - start))


def estimate_naive(bundles, spec, alpha) -> EstimatorResult:
    return _run(NAIVE, bundles, lambda b: naive_samples(b, spec, alpha))


def estimate_rep1(bundles, spec, u11, horizon) -> EstimatorResult:
    return _run(REP1, bundles, lambda b: rep1_samples(b, spec, u11, horizon))


def estimate_rep2(bundles, spec, alpha, u11, horizon) -> EstimatorResult:
    return _run(REP2, bundles, lambda b: rep2_samples(b, spec, alpha, u11, horizon))


def estimate_measure_change(bundles, spec, alpha, u11, horizon) -> EstimatorResult:
    return _run(MMM, bundles, lambda b: measure_change_samples(b, spec, alpha, u11, horizon))


def estimate_cond_gaussian(bundles, spec, mu_vals, u11, u12, x0) -> EstimatorResult:
    def fn(b: PathBundle):
        if b.y.shape[1] != 1:
            raise DimensionError("conditional Gaussian estimator is for a single asset", "d")
        return cond_gauss_samples(b.y[:, 0], b.dw[:, 1], spec, mu_vals, u11, u12, b.grid, x0)

    return _run(COND_GAUSS, bundles, fn)
