"""Prices, measure change and path bundles.

Every sum here is a left-point sum on the uniform grid, the same discretization
used for the volatility, so the estimators inherit the scheme's strong rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import BackendContract, DimensionMismatch, ValidationError
from .sandwiched_sde import DEFAULT_TOL, check_mesh_condition, simulate_volatility_path
from .stochastic_driver import (
    CorrelationStructure,
    DriverIncrements,
    TimeGrid,
    mix_increments,
    path_stream,
)
from .volterra_noise import EXACT, QUADRATURE, NoiseBackend, build_backend, generate_noise_path

TimeFunction = Union[float, Callable]


def _on_grid(fn: TimeFunction, nodes: np.ndarray) -> np.ndarray:
    if callable(fn):
        return np.asarray(fn(nodes), dtype=float) * np.ones_like(nodes)
    return np.full(nodes.shape, float(fn))


@dataclass(frozen=True, eq=False)
class MarketParams:
    """Per-asset drift ``mu_i``, short rate ``nu``, spot prices and basket weights."""

    mu: tuple
    nu: TimeFunction
    s0: tuple
    alpha: tuple

    def __post_init__(self):
        for name in ("mu", "s0", "alpha"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len({len(self.mu), len(self.s0), len(self.alpha)}) != 1:
            raise DimensionMismatch("mu, S0 and alpha need one entry per asset")
        if any(not s > 0 for s in self.s0):
            raise ValidationError("initial prices must be positive", "S0")
        if any(not a > 0 for a in self.alpha):
            raise ValidationError("basket weights must be positive", "alpha")

    @property
    def dim(self) -> int:
        return len(self.mu)

    def mu_values(self, grid: TimeGrid) -> np.ndarray:
        return np.stack([_on_grid(m, grid.nodes) for m in self.mu])

    def nu_values(self, grid: TimeGrid) -> np.ndarray:
        return _on_grid(self.nu, grid.nodes)

    def excess_drift(self, grid: TimeGrid) -> np.ndarray:
        return self.mu_values(grid) - self.nu_values(grid)


def simulate_log_price(y, db_s, mu_vals, grid: TimeGrid, x0: float) -> np.ndarray:
    """Euler log-price ``X(t_n) = X0 + sum_{k<n} dt (mu_k - Y_k^2/2) + Y_k dB^S_k``."""
    y = np.asarray(y, dtype=float)
    db_s = np.asarray(db_s, dtype=float)
    if y.shape[-1] != grid.steps + 1 or db_s.shape[-1] != grid.steps:
        raise DimensionMismatch("volatility needs N + 1 nodes and price noise N increments")
    yl = y[..., :-1]
    incr = grid.dt * (np.asarray(mu_vals, dtype=float)[:-1] - 0.5 * yl * yl) + yl * db_s
    x = np.empty(y.shape)
    x[..., 0] = x0
    np.cumsum(incr, axis=-1, out=x[..., 1:])
    x[..., 1:] += x0
    return x


def _girsanov_kernel(y, excess, lower11_inv):
    # theta_j(t_n) = sum_k linv[j, k] * mu~_k(t_n) / Y_k(t_n) for n < N
    ratio = excess[:, :-1] / y[..., :, :-1]
    return np.einsum("jk,...kn->...jn", lower11_inv, ratio)


def martingale_density(y, excess, dw_orig, lower11_inv, grid: TimeGrid) -> np.ndarray:
    """Discretized minimal martingale density, evaluated in log space.

    ``y``: ``(..., d, N + 1)``; ``dw_orig``: increments of the original
    ``W`` with at least ``d`` rows on axis ``-2``.
    """
    y = np.asarray(y, dtype=float)
    d = y.shape[-2]
    theta = _girsanov_kernel(y, np.asarray(excess, dtype=float), np.asarray(lower11_inv))
    dw = np.asarray(dw_orig)[..., :d, :]
    log_density = -np.sum(theta * dw, axis=(-2, -1)) - 0.5 * grid.dt * np.sum(theta * theta, axis=(-2, -1))
    return np.exp(log_density)


def ito_integral_inverse_vol(y1, dw1) -> np.ndarray:
    """Left-point ``sum_k dW~_1(t_k) / Y_1(t_k)``."""
    y1 = np.asarray(y1, dtype=float)
    dw1 = np.asarray(dw1, dtype=float)
    if y1.shape[-1] != dw1.shape[-1] + 1:
        raise DimensionMismatch("volatility needs one more node than there are increments")
    return np.sum(dw1 / y1[..., :-1], axis=-1)


def correction_integral(y, excess, beta, grid: TimeGrid) -> np.ndarray:
    """``dt * sum_n sum_k beta_k mu~_k(t_n) / (Y_k(t_n) Y_1(t_n))``."""
    y = np.asarray(y, dtype=float)
    yl = y[..., :, :-1]
    terms = np.asarray(beta)[:, None] * np.asarray(excess, dtype=float)[:, :-1] / (yl * yl[..., :1, :])
    return grid.dt * np.sum(terms, axis=(-2, -1))


def discount_factor(nu: TimeFunction, grid: TimeGrid) -> float:
    vals = _on_grid(nu, grid.nodes)
    return math.exp(-grid.dt * float(np.sum(vals[:-1])))


@dataclass(frozen=True, eq=False)
class VSVModel:
    """Full model specification for ``d`` assets."""

    correlation: CorrelationStructure
    kernels: tuple
    drifts: tuple
    bounds: tuple
    y0: tuple
    market: MarketParams
    backend_mode: str = EXACT
    tol: float = DEFAULT_TOL
    _backend_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("kernels", "drifts", "bounds", "y0"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.correlation.dim

    @property
    def joint_law_faithful(self) -> bool:
        """Whether simulated ``Z`` has the right joint law with ``W``.

        Exact mode draws ``Z`` from auxiliary normals, which is only right
        when the volatility noise is uncorrelated with everything else.
        """
        return self.backend_mode == QUADRATURE or self.correlation.volatility_is_isolated()

    def validate(self, grid: TimeGrid):
        d = self.dim
        for name in ("kernels", "drifts", "bounds", "y0"):
            if len(getattr(self, name)) != d:
                raise DimensionMismatch(f"{name} needs {d} entries", name)
        if self.market.dim != d:
            raise DimensionMismatch(f"market parameters need {d} entries", "mu")
        for i in range(d):
            hurst = self.kernels[i].hurst
            self.drifts[i].check_hurst(hurst)
            self.bounds[i].validate(grid, hurst)
            lo, hi = float(self.bounds[i].lower(0.0)), float(self.bounds[i].upper(0.0))
            if not lo < self.y0[i] < hi:
                raise ValidationError(f"Y0={self.y0[i]} must lie in ({lo}, {hi})", "Y0")
            if not check_mesh_condition(grid.dt, self.drifts[i]):
                raise ValidationError("mesh condition dt * sup dy b < 1 violated", "N")
        if self.backend_mode == EXACT and not self.correlation.volatility_is_isolated():
            raise BackendContract(
                "exact backend needs volatility noise uncorrelated with all other components; "
                "use the quadrature backend",
                "backend",
            )

    def backends(self, grid: TimeGrid) -> tuple:
        key = (grid.horizon, grid.steps)
        if key not in self._backend_cache:
            built = {}
            out = []
            for kernel in self.kernels:
                if kernel not in built:
                    built[kernel] = build_backend(kernel, grid, self.backend_mode)
                out.append(built[kernel])
            self._backend_cache.clear()
            self._backend_cache[key] = tuple(out)
        return self._backend_cache[key]


@dataclass(eq=False)
class PathBundle:
    """All simulated quantities for a batch of paths (leading axis = path)."""

    indices: np.ndarray
    grid: TimeGrid
    dw: np.ndarray          # (M, 2d, N) canonical increments W~
    z: np.ndarray           # (M, d, N+1)
    y: np.ndarray           # (M, d, N+1)
    x: np.ndarray           # (M, d, N+1)
    ito: np.ndarray         # (M,)
    correction: np.ndarray  # (M,)
    density: np.ndarray     # (M,)
    joint_law_faithful: bool = True

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def x_terminal(self) -> np.ndarray:
        return self.x[:, :, -1]

    @property
    def s_terminal(self) -> np.ndarray:
        return np.exp(self.x[:, :, -1])


def draw_path_normals(model: VSVModel, grid: TimeGrid, seed: int, indices: Sequence[int]):
    """Per-path draws: the ``W~`` block first, then exact-mode normals."""
    d = model.dim
    n = grid.steps
    exact_assets = d if model.backend_mode == EXACT else 0
    dw = np.empty((len(indices), 2 * d, n))
    xi = np.empty((len(indices), exact_assets, n))
    for row, p in enumerate(indices):
        rng = path_stream(seed, p)
        dw[row] = rng.standard_normal((2 * d, n))
        if exact_assets:
            xi[row] = rng.standard_normal((exact_assets, n))
    dw *= math.sqrt(grid.dt)
    return dw, xi


def simulate_bundle(model: VSVModel, grid: TimeGrid, seed: int, indices: Sequence[int]) -> PathBundle:
    indices = np.asarray(indices, dtype=np.int64)
    d = model.dim
    backends = model.backends(grid)
    dw, xi = draw_path_normals(model, grid, seed, indices)
    db_s, db_y, dw_orig = mix_increments(model.correlation, DriverIncrements(dw, grid.dt))
    mu = model.market.mu_values(grid)
    excess = model.market.excess_drift(grid)

    shape = (len(indices), d, grid.steps + 1)
    z, y, x = np.empty(shape), np.empty(shape), np.empty(shape)
    for i in range(d):
        backend: NoiseBackend = backends[i]
        if backend.mode == EXACT:
            z[:, i] = generate_noise_path(backend, fresh_normals=xi[:, i])
        else:
            z[:, i] = generate_noise_path(backend, driver_row=db_y[:, i])
        y[:, i] = simulate_volatility_path(
            z[:, i], model.drifts[i], model.bounds[i], grid, model.y0[i], model.tol
        )
        x[:, i] = simulate_log_price(y[:, i], db_s[:, i], mu[i], grid, math.log(model.market.s0[i]))

    ito = ito_integral_inverse_vol(y[:, 0], dw[:, 0])
    corr = correction_integral(y, excess, model.correlation.beta, grid)
    dens = martingale_density(y, excess, dw_orig, model.correlation.lower11_inv, grid)
    return PathBundle(indices, grid, dw, z, y, x, ito, corr, dens, model.joint_law_faithful)
