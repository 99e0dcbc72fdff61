"""Sandwiched volatility and its drift-implicit Euler scheme.

Each step solves ``y - dt * b(t_{k+1}, y) = y_k + (Z(t_{k+1}) - Z(t_k))`` for
``y`` in ``(phi(t_{k+1}), psi(t_{k+1}))``.  When ``dt * sup dy b < 1`` the
left-hand side is strictly increasing in ``y`` and, because ``b`` explodes
with opposite signs at the two bounds, it maps the open band onto the whole
real line.  Hence the root exists, is unique, and lies strictly inside the
band no matter how large the noise increment is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import BadInitialValue, NoConvergence, ValidationError
from .stochastic_driver import TimeGrid

DEFAULT_TOL = 1e-12
MAX_ITER = 200

BoundLike = Union[float, Callable, np.ndarray]


class SandwichBounds:
    """Lower bound ``phi`` and upper bound ``psi`` of the volatility.

    Each bound may be a constant, a vectorized callable of time, or a table of
    values on the nodes of ``grid`` (linearly interpolated off the nodes).
    """

    def __init__(self, lower: BoundLike, upper: BoundLike, grid: TimeGrid | None = None):
        self._lower = self._wrap(lower, grid, "phi")
        self._upper = self._wrap(upper, grid, "psi")
        self.tabulated = any(isinstance(b, np.ndarray) for b in (lower, upper))
        self._raw = (lower, upper)

    @staticmethod
    def _wrap(bound, grid, name):
        if callable(bound):
            return lambda t: np.asarray(bound(t), dtype=float) * np.ones_like(t, dtype=float)
        arr = np.asarray(bound, dtype=float)
        if arr.ndim == 0:
            value = float(arr)
            return lambda t: np.full(np.shape(t), value)
        if grid is None or arr.shape != grid.nodes.shape:
            raise ValidationError("tabulated bound needs one value per grid node", name)
        nodes = grid.nodes
        return lambda t: np.interp(t, nodes, arr)

    def lower(self, t):
        return self._lower(np.asarray(t, dtype=float))

    def upper(self, t):
        return self._upper(np.asarray(t, dtype=float))

    def min_lower(self, grid: TimeGrid) -> float:
        return float(np.min(self.lower(grid.nodes)))

    def validate(self, grid: TimeGrid, hurst: float | None = None, holder_limit: float = 1e6):
        lo, hi = self.lower(grid.nodes), self.upper(grid.nodes)
        if np.any(lo <= 0):
            raise ValidationError("lower bound must be strictly positive", "phi")
        if np.any(hi <= lo):
            raise ValidationError("upper bound must exceed lower bound at every node", "psi")
        if self.tabulated and hurst is not None and grid.steps:
            for name, vals in (("phi", lo), ("psi", hi)):
                ratio = np.max(np.abs(np.diff(vals))) / grid.dt**hurst
                if ratio > holder_limit:
                    raise ValidationError(
                        f"tabulated bound not Hoelder of order {hurst} (ratio {ratio:.3g})", name
                    )


@dataclass(frozen=True)
class TwoSidedPowerDrift:
    """``b(t, y) = c1 / (y - phi(t))^gamma - c2 / (psi(t) - y)^gamma``.

    Strictly decreasing in ``y``, so the derivative bound is 0.
    """

    c1: float
    c2: float
    gamma: float

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValidationError("c1 and c2 must be positive", "drift")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive", "gamma")

    derivative_bound = 0.0

    def check_hurst(self, hurst: float):
        if not self.gamma > 1.0 / hurst - 1.0:
            raise ValidationError(
                f"gamma={self.gamma} must exceed 1/H - 1 = {1.0 / hurst - 1.0:.4g}", "gamma"
            )

    def value(self, t, y, lo, hi):
        return self.c1 / (y - lo) ** self.gamma - self.c2 / (hi - y) ** self.gamma

    def dy(self, t, y, lo, hi):
        g = self.gamma
        return -g * (self.c1 / (y - lo) ** (g + 1) + self.c2 / (hi - y) ** (g + 1))


@dataclass(frozen=True)
class CallableDrift:
    """Arbitrary drift with user-supplied ``dy b`` and an upper bound for it."""

    func: Callable
    derivative: Callable
    derivative_bound: float

    def check_hurst(self, hurst: float):
        pass

    def value(self, t, y, lo, hi):
        return self.func(t, y)

    def dy(self, t, y, lo, hi):
        return self.derivative(t, y)


DriftSpec = Union[TwoSidedPowerDrift, CallableDrift]


def check_mesh_condition(dt: float, drift: DriftSpec) -> bool:
    return dt * drift.derivative_bound < 1.0


def solve_implicit(target, t, lo, hi, drift: DriftSpec, dt: float, tol: float = DEFAULT_TOL):
    """Vectorized root of ``y - dt * b(t, y) = target`` inside ``(lo, hi)``.

    Safeguarded Newton: a Newton step is taken when it lands inside the
    current bracket and shrinks the residual fast enough, otherwise the
    bracket is bisected.
    """
    target = np.asarray(target, dtype=float)
    shape = target.shape
    target = target.ravel()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), shape).ravel()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), shape).ravel()
    eps = 2.0**-52 * np.maximum(1.0, hi)
    a = lo + eps
    b = hi - eps
    y = np.clip(target, a, b)
    # Initial guess: the explicit target if it is interior, else the midpoint.
    y = np.where((y > a) & (y < b), y, 0.5 * (a + b))
    step_old = b - a
    active = np.arange(target.size)
    for _ in range(MAX_ITER):
        ya, ta, aa, ba = y[active], target[active], a[active], b[active]
        la, ha = lo[active], hi[active]
        f = ya - dt * drift.value(t, ya, la, ha) - ta
        fp = 1.0 - dt * drift.dy(t, ya, la, ha)
        # f is increasing: f < 0 means the root is to the right
        aa = np.where(f < 0, ya, aa)
        ba = np.where(f > 0, ya, ba)
        newton = ya - f / fp
        use_newton = (newton > aa) & (newton < ba) & (np.abs(2 * f) < np.abs(step_old[active] * fp))
        y_new = np.where(use_newton, newton, 0.5 * (aa + ba))
        step = np.abs(y_new - ya)
        a[active], b[active], y[active] = aa, ba, y_new
        step_old[active] = step
        done = (step <= tol) | (f == 0) | (ba - aa <= tol)
        active = active[~done]
        if active.size == 0:
            return y.reshape(shape)
    raise NoConvergence(
        f"implicit step failed to converge for {active.size} paths after {MAX_ITER} iterations"
    )


def implicit_step(y_prev, t_next, dz, drift: DriftSpec, bounds: SandwichBounds, dt: float,
                  tol: float = DEFAULT_TOL):
    """One drift-implicit Euler step; scalar or array ``y_prev``/``dz``."""
    target = np.asarray(y_prev, dtype=float) + dz
    lo, hi = bounds.lower(t_next), bounds.upper(t_next)
    out = solve_implicit(target, t_next, lo, hi, drift, dt, tol)
    return float(out) if out.ndim == 0 else out


def simulate_volatility_path(z, drift: DriftSpec, bounds: SandwichBounds, grid: TimeGrid,
                             y0: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Implicit Euler volatility at the grid nodes.

    ``z`` has shape ``(..., N + 1)``; the result has the same shape with
    ``Y(t_0) = y0``.  Between nodes the path is held constant from the left.
    """
    z = np.asarray(z, dtype=float)
    lo0, hi0 = float(bounds.lower(0.0)), float(bounds.upper(0.0))
    if not lo0 < y0 < hi0:
        raise BadInitialValue(f"Y0={y0} must lie in ({lo0}, {hi0})", "Y0")
    if not check_mesh_condition(grid.dt, drift):
        raise ValidationError("mesh too coarse for the drift derivative bound", "N")
    t = grid.nodes
    lows, highs = bounds.lower(t), bounds.upper(t)
    y = np.empty(z.shape)
    y[..., 0] = y0
    dz = np.diff(z, axis=-1)
    for k in range(grid.steps):
        y[..., k + 1] = solve_implicit(
            y[..., k] + dz[..., k], t[k + 1], lows[k + 1], highs[k + 1], drift, grid.dt, tol
        )
    return y


def inverse_path(y) -> np.ndarray:
    return 1.0 / np.asarray(y, dtype=float)
