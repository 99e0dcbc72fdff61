"""Experiment configuration: sectioned INI text, validated at load time.

Per-asset keys take a comma list with one value per asset; a single value is
broadcast to every asset.  ``sigma`` lists the ``2d x 2d`` correlation matrix
row by row.  Payoff atoms are ``kind:strike:weight`` triples.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigValidationError, ParseError, ValidationError
from .estimators import ESTIMATOR_IDS
from .market_model import MarketParams, VSVModel
from .payoff import Atom, PayoffSpec
from .sandwiched_sde import SandwichBounds, TwoSidedPowerDrift
from .stochastic_driver import TimeGrid, build_correlation
from .volterra_noise import EXACT, QUADRATURE, FbmKernel, brownian_kernel

KERNELS = ("fbm", "brownian")


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    dim: int = 1
    horizon: float = 1.0
    sigma: tuple = (1.0, 0.0, 0.0, 1.0)
    mu: tuple = (1.5,)
    nu: float = 0.5
    s0: tuple = (1.0,)
    alpha: tuple = (1.0,)
    y0: tuple = (1.0,)
    phi: tuple = (0.01,)
    psi: tuple = (5.0,)
    c1: tuple = (1.0,)
    c2: tuple = (1.0,)
    gamma: tuple = (4.0,)
    # noise
    kernel: str = "fbm"
    hurst: tuple = (0.7,)
    backend: str = EXACT
    # payoff
    atoms: tuple = (("indicator", 1.0, 1.0), ("indicator", 2.0, 1.0), ("indicator", 4.0, 1.0))
    # run
    steps: int = 1000
    paths: int = 10000
    seed: int = 2024
    estimators: tuple = ("rep2", "cond-gauss")
    discount: bool = False
    output: str = ""  # empty: standard output
    chunk_size: int = 500
    timing: bool = True

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def grid(self, steps: int | None = None) -> TimeGrid:
        return TimeGrid(self.horizon, self.steps if steps is None else steps)

    def sigma_matrix(self) -> np.ndarray:
        n = 2 * self.dim
        return np.asarray(self.sigma, dtype=float).reshape(n, n)

    def payoff(self) -> PayoffSpec:
        return PayoffSpec(tuple(Atom(k, float(s), float(w)) for k, s, w in self.atoms))

    def kernels(self) -> tuple:
        if self.kernel == "brownian":
            return tuple(brownian_kernel() for _ in range(self.dim))
        cache: dict = {}
        return tuple(cache.setdefault(h, FbmKernel(h)) for h in self.hurst)

    def build_model(self) -> VSVModel:
        return VSVModel(
            correlation=build_correlation(self.sigma_matrix()),
            kernels=self.kernels(),
            drifts=[TwoSidedPowerDrift(a, b, g) for a, b, g in zip(self.c1, self.c2, self.gamma)],
            bounds=[SandwichBounds(lo, hi) for lo, hi in zip(self.phi, self.psi)],
            y0=self.y0,
            market=MarketParams(self.mu, self.nu, self.s0, self.alpha),
            backend_mode=self.backend,
        )


def validate_config(cfg: ExperimentConfig) -> list:
    """Every field-level problem in ``cfg``, as ``"field: message"`` strings."""
    problems = []
    d = cfg.dim
    if d < 1:
        return ["dimension: must be at least 1"]
    for name in ("mu", "s0", "alpha", "y0", "phi", "psi", "c1", "c2", "gamma", "hurst"):
        if len(getattr(cfg, name)) != d:
            problems.append(f"{name}: expected {d} values, got {len(getattr(cfg, name))}")
    if len(cfg.sigma) != 4 * d * d:
        problems.append(f"sigma: expected {4 * d * d} entries, got {len(cfg.sigma)}")
    if problems:
        return problems
    if cfg.horizon <= 0:
        problems.append("horizon: must be positive")
    if cfg.kernel not in KERNELS:
        problems.append(f"kernel: must be one of {', '.join(KERNELS)}")
    if cfg.backend not in (EXACT, QUADRATURE):
        problems.append(f"backend: must be {EXACT} or {QUADRATURE}")
    if cfg.kernel == "brownian" and any(h != 0.5 for h in cfg.hurst):
        problems.append("hurst: the brownian kernel has H = 0.5")
    if cfg.kernel != "fbm" and cfg.backend == EXACT:
        problems.append("backend: exact simulation is only available for the fbm kernel")
    for i in range(d):
        h = cfg.hurst[i]
        tag = f"[{i}]" if d > 1 else ""
        if not 0 < h < 1:
            problems.append(f"hurst{tag}: must lie in (0, 1)")
            continue
        if not cfg.gamma[i] > 1.0 / h - 1.0:
            problems.append(f"gamma{tag}: {cfg.gamma[i]} must exceed 1/H - 1 = {1.0 / h - 1.0:.4g}")
        if not 0 < cfg.phi[i] < cfg.psi[i]:
            problems.append(f"phi{tag}: need 0 < phi < psi")
        elif not cfg.phi[i] < cfg.y0[i] < cfg.psi[i]:
            problems.append(f"y0{tag}: {cfg.y0[i]} must lie in ({cfg.phi[i]}, {cfg.psi[i]})")
        if cfg.c1[i] <= 0 or cfg.c2[i] <= 0:
            problems.append(f"c1{tag}: c1 and c2 must be positive")
        if cfg.s0[i] <= 0:
            problems.append(f"s0{tag}: must be positive")
        if cfg.alpha[i] <= 0:
            problems.append(f"alpha{tag}: must be positive")
    if cfg.steps < 1:
        problems.append("steps: need at least one step")
    if cfg.paths < 0:
        problems.append("paths: must be nonnegative")
    if cfg.chunk_size < 1:
        problems.append("chunk_size: must be positive")
    for est in cfg.estimators:
        if est not in ESTIMATOR_IDS:
            problems.append(f"estimators: unknown estimator {est!r}")
        elif est in ("rep1", "cond-gauss") and d != 1:
            problems.append(f"estimators: {est} needs a single asset")
    try:
        cfg.payoff()
    except ValidationError as exc:
        problems.append(f"atoms: {exc}")
    try:
        corr = build_correlation(cfg.sigma_matrix())
    except ValidationError as exc:
        problems.append(str(exc))
        return problems
    if cfg.backend == EXACT and not corr.volatility_is_isolated():
        problems.append(
            "backend: exact noise is only valid when the volatility noise is uncorrelated "
            "with everything else; use quadrature"
        )
    # The two-sided power drift is decreasing in y, so the mesh condition
    # dt * sup dy b < 1 holds for every N.  It is still checked for symmetry.
    if not problems:
        try:
            cfg.build_model().validate(cfg.grid())
        except ValidationError as exc:
            problems.append(str(exc))
    return problems


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _parse_atoms(text: str) -> tuple:
    atoms = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) == 2:
            parts.append("1")
        if len(parts) != 3:
            raise ParseError(f"atom {item!r} is not kind:strike:weight", "atoms")
        atoms.append((parts[0].strip(), float(parts[1]), float(parts[2])))
    return tuple(atoms)


_MODEL_KEYS = {
    "horizon": float, "nu": float, "sigma": _floats, "mu": _floats, "s0": _floats,
    "alpha": _floats, "y0": _floats, "phi": _floats, "psi": _floats,
    "c1": _floats, "c2": _floats, "gamma": _floats,
}
_PER_ASSET = ("mu", "s0", "alpha", "y0", "phi", "psi", "c1", "c2", "gamma", "hurst")


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc).splitlines()[0]) from exc
    values: dict = {}
    try:
        if parser.has_section("model"):
            sec = parser["model"]
            if "dimension" in sec:
                values["dim"] = sec.getint("dimension")
            for key, conv in _MODEL_KEYS.items():
                if key in sec:
                    values[key] = conv(sec[key])
        if parser.has_section("noise"):
            sec = parser["noise"]
            if "kernel" in sec:
                values["kernel"] = sec["kernel"].strip().lower()
            if "hurst" in sec:
                values["hurst"] = _floats(sec["hurst"])
            if "backend" in sec:
                values["backend"] = sec["backend"].strip().lower()
        if parser.has_section("payoff") and "atoms" in parser["payoff"]:
            values["atoms"] = _parse_atoms(parser["payoff"]["atoms"])
        if parser.has_section("run"):
            sec = parser["run"]
            for key in ("steps", "paths", "seed", "chunk_size"):
                if key in sec:
                    values[key] = sec.getint(key)
            for key in ("discount", "timing"):
                if key in sec:
                    values[key] = sec.getboolean(key)
            if "estimators" in sec:
                values["estimators"] = tuple(e.strip() for e in sec["estimators"].split(",") if e.strip())
            if "output" in sec:
                values["output"] = sec["output"].strip()
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc)) from exc
    cfg = (base or ExperimentConfig()).replace(**values)
    d = cfg.dim
    # broadcast single per-asset values
    fixed = {k: getattr(cfg, k) * d for k in _PER_ASSET if len(getattr(cfg, k)) == 1 and d > 1}
    return cfg.replace(**fixed) if fixed else cfg


def load_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ParseError(f"no such file {path}", "config")
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    check(cfg)
    return cfg


def check(cfg: ExperimentConfig) -> ExperimentConfig:
    problems = validate_config(cfg)
    if problems:
        raise ConfigValidationError(problems)
    return cfg
