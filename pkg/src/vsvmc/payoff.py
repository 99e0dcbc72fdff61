"""Discontinuous payoffs built from weighted atoms.

For a payoff ``f`` the smoothing transforms are

* ``F(s) = int_0^s f(u) du``
* ``G(x) = F(1) + int_0^x f(e^v) dv``
* ``G1(x_1..x_d) = F(sum_i alpha_i e^{x_i}) / (alpha_1 e^{x_1})``

Indicator and call atoms have closed forms for all three; a generic payoff
falls back to adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ValidationError

INDICATOR = "indicator"
CALL = "call"


@dataclass(frozen=True)
class Atom:
    kind: str
    strike: float
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in (INDICATOR, CALL):
            raise ValidationError(f"unknown atom kind {self.kind!r}", "payoff.atoms")
        if not self.strike >= 0:
            raise ValidationError("strikes must be nonnegative", "payoff.atoms")

    def f(self, s):
        if self.kind == INDICATOR:
            return self.weight * (s > self.strike)
        return self.weight * np.maximum(s - self.strike, 0.0)

    def F(self, s):
        excess = np.maximum(s - self.strike, 0.0)
        if self.kind == INDICATOR:
            return self.weight * excess
        return 0.5 * self.weight * excess**2

    def _g_primitive(self, x):
        # int_{-inf}^x f(e^v) dv, finite for these atoms when strike > 0
        k = self.strike
        if self.kind == INDICATOR:
            return np.maximum(x - math.log(k), 0.0)
        ex = np.exp(x)
        return np.where(ex > k, ex - k - k * (x - math.log(k)), 0.0)

    def G_increment(self, x):
        """``int_0^x f(e^v) dv``."""
        if self.strike == 0:
            if self.kind == INDICATOR:
                return self.weight * x
            return self.weight * (np.exp(x) - 1.0)
        return self.weight * (self._g_primitive(x) - self._g_primitive(0.0))

    @property
    def log_breakpoint(self):
        return math.log(self.strike) if self.strike > 0 else None


@dataclass(frozen=True)
class PayoffSpec:
    """Sum of atoms, optionally plus a generic callable ``extra(s)``.

    ``growth`` is the polynomial-growth certificate ``(q, c_f)`` claimed for
    the generic part: ``|f(s)| <= c_f (1 + s^q)``.  It is checked on a sample
    grid when the payoff is constructed.
    """

    atoms: tuple = ()
    extra: Callable | None = None
    breakpoints: tuple = ()
    growth: tuple = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if self.extra is not None:
            q, c = self.growth
            s = np.geomspace(1e-6, 1e6, 400)
            vals = np.abs(np.asarray(self.extra(s), dtype=float))
            if np.any(vals > c * (1 + s**q) * (1 + 1e-12)):
                raise ValidationError("generic payoff violates its growth certificate", "payoff")

    @classmethod
    def from_triples(cls, triples: Sequence):
        return cls(tuple(Atom(kind, float(k), float(w)) for kind, k, w in triples))

    def f(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for atom in self.atoms:
            out = out + atom.f(s)
        if self.extra is not None:
            out = out + np.asarray(self.extra(s), dtype=float)
        return out if out.ndim else float(out)

    def F(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for atom in self.atoms:
            out = out + atom.F(s)
        if self.extra is not None:
            out = out + _vectorize_quad(lambda b: _quad(self.extra, 0.0, b, self.breakpoints), s)
        return out if out.ndim else float(out)

    def G(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.F(1.0)))
        for atom in self.atoms:
            out = out + atom.G_increment(x)
        if self.extra is not None:
            g = lambda v: self.extra(np.exp(v))  # noqa: E731
            logs = tuple(math.log(b) for b in self.breakpoints if b > 0)
            out = out + _vectorize_quad(lambda b: _quad(g, 0.0, b, logs), x)
        return out if out.ndim else float(out)

    def log_kinks(self) -> np.ndarray:
        """Points where ``G`` fails to be smooth (``log`` of the strikes)."""
        pts = [a.log_breakpoint for a in self.atoms if a.log_breakpoint is not None]
        pts += [math.log(b) for b in self.breakpoints if b > 0]
        return np.unique(np.array(pts, dtype=float))

    def is_closed_form(self) -> bool:
        return self.extra is None


def _quad(func, a, b, points=()):
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    inner = [p for p in points if lo < p < hi]
    val, _ = integrate.quad(
        lambda u: float(func(np.asarray(u))), lo, hi, points=inner or None,
        epsabs=1e-14, epsrel=1e-10, limit=200,
    )
    return val if b >= a else -val


def _vectorize_quad(fn, arr):
    flat = np.array([fn(v) for v in np.ravel(arr)])
    return flat.reshape(np.shape(arr))


def eval_f(spec: PayoffSpec, s):
    return spec.f(s)


def eval_F(spec: PayoffSpec, s):
    return spec.F(s)


def eval_G(spec: PayoffSpec, x):
    return spec.G(x)


def basket_G1(spec: PayoffSpec, alpha, x):
    """``F(sum alpha_i e^{x_i}) / (alpha_1 e^{x_1})``; last axis of ``x`` is the asset."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    basket = np.exp(x) @ alpha
    return spec.F(basket) / (alpha[0] * np.exp(x[..., 0]))


def reference_payoff() -> PayoffSpec:
    """Sum of digital indicators at strikes 1, 2 and 4."""
    return PayoffSpec.from_triples([(INDICATOR, 1.0, 1.0), (INDICATOR, 2.0, 1.0), (INDICATOR, 4.0, 1.0)])
