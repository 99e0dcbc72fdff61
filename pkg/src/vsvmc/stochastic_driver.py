"""Time grid, random streams, correlation algebra and Brownian increments.

The model is driven by a ``2d``-dimensional standard Brownian motion ``W``.
With ``Sigma = L L^T`` (lower Cholesky) the correlated motion is ``B = L W``;
its first ``d`` rows drive the prices (``B^S``) and the last ``d`` rows drive
the volatility noise (``B^Y``).  Simulation works in the rotated coordinates
``W~ = U^{-1} B`` where ``U`` is the *upper* triangular factor of ``Sigma``.
Because ``U`` is upper triangular, ``W~_1`` never enters ``B^Y``, which is what
makes the Malliavin weights in :mod:`vsvmc.estimators` computable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    BadDiagonal,
    DimensionMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    ValidationError,
)

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_n = T n / N`` of ``[0, T]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValidationError("horizon must be a positive real", "T")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValidationError("number of steps must be a nonnegative integer", "N")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps if self.steps else 0.0

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.steps == 0:
            return np.zeros(1)
        # T * n / N rather than n * dt so that the last node is exactly T
        return self.horizon * np.arange(self.steps + 1) / self.steps

    def coarsen(self, factor: int) -> "TimeGrid":
        if factor <= 0 or self.steps % factor:
            raise ValidationError(f"{factor} does not divide N={self.steps}", "N")
        return TimeGrid(self.horizon, self.steps // factor)


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    """Independent generator for one Monte Carlo path.

    Keyed by ``(seed, path_index)`` only, so a path can be replayed alone and
    the assignment of paths to workers never changes the numbers drawn.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(ss))


def _upper_cholesky(sigma: np.ndarray) -> np.ndarray:
    # Cholesky of the index-reversed matrix, reversed back, is upper triangular.
    rev = sigma[::-1, ::-1]
    low = _lower_cholesky(rev)
    return np.ascontiguousarray(low[::-1, ::-1])


def _lower_cholesky(sigma: np.ndarray) -> np.ndarray:
    n = sigma.shape[0]
    low = np.zeros_like(sigma)
    for j in range(n):
        pivot = sigma[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > PIVOT_TOL:
            raise NotPositiveDefinite(
                f"correlation matrix is not strictly positive definite "
                f"(pivot {pivot:.3e} at index {j})",
                "sigma",
            )
        low[j, j] = np.sqrt(pivot)
        low[j + 1 :, j] = (sigma[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


@dataclass(frozen=True, eq=False)
class CorrelationStructure:
    """``Sigma`` together with every factor the estimators need.

    Attributes
    ----------
    sigma : (2d, 2d) correlation matrix
    lower : ``L`` with ``L L^T = Sigma``
    upper : ``U`` with ``U U^T = Sigma``
    mixing : ``rho = L^{-1} U`` so that ``W = rho W~``
    lower11_inv : inverse of the top-left ``d x d`` block of ``L``
    beta : ``beta_k = -sum_j rho[j, 0] * lower11_inv[j, k]``
    """

    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mixing: np.ndarray
    lower11_inv: np.ndarray
    beta: np.ndarray

    @property
    def dim(self) -> int:
        """Number of assets ``d``."""
        return self.sigma.shape[0] // 2

    @property
    def u11(self) -> float:
        return float(self.upper[0, 0])

    @property
    def u12(self) -> float:
        return float(self.upper[0, 1])

    def volatility_is_isolated(self) -> bool:
        """True when every ``B^Y_i`` is uncorrelated with all other components."""
        d = self.dim
        block = self.sigma[d:, :]
        target = np.zeros_like(block)
        target[:, d:] = np.eye(d)
        return bool(np.all(block == target))


def build_correlation(sigma) -> CorrelationStructure:
    sigma = np.array(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] % 2:
        raise DimensionMismatch(f"expected a 2d x 2d matrix, got shape {sigma.shape}", "sigma")
    if np.max(np.abs(sigma - sigma.T)) > SYMMETRY_TOL:
        raise NotSymmetric("correlation matrix is not symmetric", "sigma")
    if np.max(np.abs(np.diag(sigma) - 1.0)) > SYMMETRY_TOL:
        raise BadDiagonal("correlation matrix must have unit diagonal", "sigma")
    if np.any(np.abs(sigma) > 1.0 + SYMMETRY_TOL):
        raise ValidationError("correlation entries must lie in [-1, 1]", "sigma")

    d = sigma.shape[0] // 2
    lower = _lower_cholesky(sigma)
    upper = _upper_cholesky(sigma)
    mixing = solve_triangular(lower, upper, lower=True)
    lower11_inv = solve_triangular(lower[:d, :d], np.eye(d), lower=True)
    beta = -(mixing[:d, 0] @ lower11_inv)
    for arr in (sigma, lower, upper, mixing, lower11_inv, beta):
        arr.setflags(write=False)
    return CorrelationStructure(sigma, lower, upper, mixing, lower11_inv, beta)


@dataclass(frozen=True)
class DriverIncrements:
    """Increments of ``W~`` on a grid, shape ``(..., 2d, N)``.

    A leading batch axis holds several paths at once.
    """

    dw: np.ndarray
    dt: float = field(default=0.0)

    @property
    def dim(self) -> int:
        return self.dw.shape[-2] // 2


def sample_driver(grid: TimeGrid, stream: np.random.Generator, dim: int = 1) -> DriverIncrements:
    """Draw ``2d x N`` independent ``N(0, dt)`` increments from ``stream``."""
    dw = stream.standard_normal((2 * dim, grid.steps))
    dw *= np.sqrt(grid.dt)
    return DriverIncrements(dw, grid.dt)


def mix_increments(struct: CorrelationStructure, driver: DriverIncrements):
    """Return ``(dB^S, dB^Y, dW)`` from the canonical increments.

    ``dB = U dW~`` split into price and volatility rows, ``dW = rho dW~``.
    Works on a single path ``(2d, N)`` or a batch ``(M, 2d, N)``.
    """
    dw = driver.dw
    if dw.shape[-2] != struct.sigma.shape[0]:
        raise DimensionMismatch(
            f"driver has {dw.shape[-2]} rows, correlation expects {struct.sigma.shape[0]}"
        )
    d = struct.dim
    db = struct.upper @ dw
    dw_orig = struct.mixing @ dw
    return db[..., :d, :], db[..., d:, :], dw_orig
