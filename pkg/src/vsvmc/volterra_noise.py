"""Volterra kernels and Gaussian Volterra noise ``Z(t) = int_0^t K(t, s) dB^Y(s)``.

Two ways to put ``Z`` on a grid:

* ``exact``: fractional Brownian motion only.  The covariance of the ``N``
  grid increments is factorized once (Cholesky) and every path is
  ``factor @ xi`` for fresh standard normals ``xi``.  The law at the nodes is
  exact for any ``N``.
* ``quadrature``: any kernel.  ``Z(t_n) = sum_{k<n} K(t_n, s_k) dB^Y_k`` with
  ``s_k`` the midpoint of ``[t_k, t_{k+1}]``; midpoints keep away from the
  ``s = 0`` singularity of the Molchan-Golosov kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz
from scipy.linalg.lapack import dpotrf
from scipy.special import gamma as gamma_fn
from scipy.special import hyp2f1

from .errors import (
    DomainError,
    FactorizationFailure,
    ModeContract,
    UnsupportedCombination,
    ValidationError,
)
from .stochastic_driver import TimeGrid

EXACT = "exact"
QUADRATURE = "quadrature"
JITTER = 1e-12


def fbm_normalizer(hurst: float) -> float:
    h = hurst
    return math.sqrt(2 * h * gamma_fn(1.5 - h) / (gamma_fn(h + 0.5) * gamma_fn(2 - 2 * h)))


def _check_hurst(hurst):
    if not 0.0 < hurst < 1.0:
        raise ValidationError(f"Hurst index must lie in (0, 1), got {hurst}", "H")


def _inner_integral_closed(hurst, t, s):
    # int_s^t u^{H-3/2} (u-s)^{H-1/2} du, via u = s/y and a 2F1 for the
    # incomplete beta with a possibly negative first parameter.
    h = hurst
    w = 1.0 - s / t
    return s ** (2 * h - 1) * w ** (h + 0.5) / (h + 0.5) * hyp2f1(2 * h, h + 0.5, h + 1.5, w)


def _inner_integral_quad(hurst, t, s):
    h = hurst
    val, _ = integrate.quad(
        lambda u: u ** (h - 1.5), s, t, weight="alg", wvar=(h - 0.5, 0.0),
        epsabs=0.0, epsrel=1e-10, limit=200,
    )
    return val


def fbm_kernel(hurst: float, t, s, method: str = "closed"):
    """Molchan-Golosov kernel of fBm with Hurst index ``hurst``.

    ``t`` and ``s`` broadcast against each other.  Returns 0 where ``t <= s``.
    ``method="quad"`` evaluates the inner integral with adaptive quadrature
    (scalar inputs only, slow); the default uses its closed form.
    """
    _check_hurst(hurst)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    active = t > s
    if np.any(active & (s <= 0.0)) and hurst != 0.5:
        raise DomainError("kernel is singular at s <= 0; evaluate at interior nodes", "s")
    out = np.zeros(t.shape)
    if hurst == 0.5:
        out[active] = 1.0
        return out if out.ndim else float(out)
    ta, sa = t[active], s[active]
    h = hurst
    if method == "closed":
        inner = _inner_integral_closed(h, ta, sa)
    elif method == "quad":
        inner = np.array([_inner_integral_quad(h, ti, si) for ti, si in zip(ta, sa)])
    else:
        raise ValueError(f"unknown method {method!r}")
    first = (ta / sa) ** (h - 0.5) * (ta - sa) ** (h - 0.5)
    second = (h - 0.5) * sa ** (0.5 - h) * inner
    out[active] = fbm_normalizer(h) * (first - second)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FbmKernel:
    hurst: float

    def __post_init__(self):
        _check_hurst(self.hurst)

    @property
    def normalizer(self) -> float:
        return fbm_normalizer(self.hurst)

    def __call__(self, t, s):
        return fbm_kernel(self.hurst, t, s)


@dataclass(frozen=True)
class GenericKernel:
    """User kernel ``evaluator(t, s)``; must broadcast over numpy arrays.

    ``hurst`` is the Hoelder order the kernel produces; it is trusted, not
    verified.  Values at ``t <= s`` are forced to zero.
    """

    evaluator: Callable
    hurst: float

    def __post_init__(self):
        _check_hurst(self.hurst)

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        vals = np.asarray(self.evaluator(t, s), dtype=float)
        return np.where(t > s, np.broadcast_to(vals, t.shape), 0.0)


def brownian_kernel() -> GenericKernel:
    """Kernel identically 1 below the diagonal, so ``Z = B^Y``."""
    return GenericKernel(lambda t, s: np.ones(np.broadcast(t, s).shape), 0.5)


KernelSpec = Union[FbmKernel, GenericKernel]


def fbm_covariance(hurst: float, t, s):
    h2 = 2 * hurst
    t, s = np.asarray(t, dtype=float), np.asarray(s, dtype=float)
    return 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)


def fbm_increment_covariance(grid: TimeGrid, hurst: float) -> np.ndarray:
    """``N x N`` covariance of the fBm increments over the grid cells.

    The increments are stationary, so only the first column is computed from
    the covariance function and the matrix is Toeplitz.
    """
    _check_hurst(hurst)
    t = grid.nodes
    r = lambda a, b: fbm_covariance(hurst, a, b)  # noqa: E731
    first = r(t[1:], t[1]) - r(t[1:], t[0]) - r(t[:-1], t[1]) + r(t[:-1], t[0])
    return toeplitz(first)


@dataclass(frozen=True, eq=False)
class NoiseBackend:
    """Precomputed linear map from normals (or ``dB^Y``) to ``Z`` on a grid.

    ``matrix`` is the lower Cholesky factor ``(N, N)`` in exact mode and the
    kernel table ``(N + 1, N)`` in quadrature mode.
    """

    mode: str
    grid: TimeGrid
    kernel: KernelSpec
    matrix: np.ndarray

    @property
    def consumes_fresh_normals(self) -> bool:
        return self.mode == EXACT


def kernel_table(kernel: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Entry ``(n, k)`` is ``K(t_n, midpoint of cell k)`` for ``k < n``, else 0."""
    n = grid.steps
    t = grid.nodes
    mid = 0.5 * (t[:-1] + t[1:])
    table = np.zeros((n + 1, n))
    for node in range(1, n + 1):
        table[node, :node] = kernel(t[node], mid[:node])
    return table


def build_backend(spec: KernelSpec, grid: TimeGrid, mode: str = EXACT) -> NoiseBackend:
    if mode == EXACT:
        if not isinstance(spec, FbmKernel):
            raise UnsupportedCombination("exact backend requires the fBm kernel", "backend")
        if grid.steps == 0:
            matrix = np.zeros((0, 0))
        else:
            cov = fbm_increment_covariance(grid, spec.hurst)
            try:
                matrix = _factor(cov)
            except FactorizationFailure:
                cov = fbm_increment_covariance(grid, spec.hurst)
                cov[np.diag_indices_from(cov)] += JITTER
                matrix = _factor(cov)
    elif mode == QUADRATURE:
        matrix = kernel_table(spec, grid)
    else:
        raise ValidationError(f"unknown backend mode {mode!r}", "backend")
    matrix.setflags(write=False)
    return NoiseBackend(mode, grid, spec, matrix)


def _factor(cov: np.ndarray) -> np.ndarray:
    fac, info = dpotrf(cov.T, lower=0, clean=1, overwrite_a=1)
    if info != 0:
        raise FactorizationFailure(f"increment covariance is numerically indefinite (info={info})")
    return np.ascontiguousarray(fac.T)


def generate_noise_path(backend: NoiseBackend, driver_row=None, fresh_normals=None) -> np.ndarray:
    """``Z`` at the ``N + 1`` grid nodes, ``Z(t_0) = 0``.

    Exact mode consumes ``fresh_normals`` (shape ``(..., N)``); quadrature
    mode consumes the volatility increments ``driver_row`` (shape
    ``(..., N)``).  A leading batch axis is allowed in both.
    """
    n = backend.grid.steps
    if backend.mode == EXACT:
        if fresh_normals is None:
            raise ModeContract("exact backend needs fresh standard normals")
        xi = np.asarray(fresh_normals, dtype=float)
        incr = xi @ backend.matrix.T
        z = np.zeros(xi.shape[:-1] + (n + 1,))
        np.cumsum(incr, axis=-1, out=z[..., 1:])
        return z
    if driver_row is None:
        raise ModeContract("quadrature backend needs the volatility driver increments")
    db = np.asarray(driver_row, dtype=float)
    return db @ backend.matrix.T
