import math

import numpy as np
import pytest

from vsvmc.config import ExperimentConfig
from vsvmc.errors import BackendContract, DimensionMismatch, ValidationError
from vsvmc.market_model import (
    MarketParams,
    correction_integral,
    discount_factor,
    ito_integral_inverse_vol,
    martingale_density,
    simulate_bundle,
    simulate_log_price,
)
from vsvmc.stochastic_driver import TimeGrid, build_correlation, path_stream


def test_log_price_constant_volatility():
    g = TimeGrid(1.0, 4)
    db = np.array([0.1, -0.2, 0.05, 0.3])
    x = simulate_log_price(np.full(5, 2.0), db, np.full(5, 1.5), g, 0.0)
    assert x[0] == 0.0
    assert x[-1] == pytest.approx(1.5 - 2.0 + 2.0 * db.sum())
    assert np.allclose(np.diff(x), 0.25 * (1.5 - 2.0) + 2.0 * db)


def test_log_price_shape_check():
    with pytest.raises(DimensionMismatch):
        simulate_log_price(np.ones(4), np.ones(4), np.ones(4), TimeGrid(1.0, 4), 0.0)


def test_density_is_one_without_excess_drift():
    g = TimeGrid(1.0, 10)
    y = np.ones((3, 1, 11))
    dw = path_stream(0, 0).standard_normal((3, 2, 10))
    assert np.allclose(martingale_density(y, np.zeros((1, 11)), dw, np.eye(1), g), 1.0)


def test_density_constant_volatility():
    g = TimeGrid(1.0, 10)
    y = np.full((1, 11), 2.0)
    dw = path_stream(0, 1).standard_normal((2, 10)) * math.sqrt(g.dt)
    # theta = 1/2, density = exp(-theta W(T) - theta^2 T / 2)
    got = martingale_density(y, np.ones((1, 11)), dw, np.eye(1), g)
    assert got == pytest.approx(math.exp(-0.5 * dw[0].sum() - 0.125))


def test_density_has_unit_mean():
    cfg = ExperimentConfig(steps=50, paths=20000)
    model = cfg.build_model()
    b = simulate_bundle(model, cfg.grid(), 11, range(cfg.paths))
    se = b.density.std(ddof=1) / math.sqrt(b.size)
    assert abs(b.density.mean() - 1.0) < 4 * se


def test_ito_integral():
    y = np.array([1.0, 2.0, 4.0])
    dw = np.array([0.5, 1.0])
    assert ito_integral_inverse_vol(y, dw) == pytest.approx(0.5 + 0.5)
    with pytest.raises(DimensionMismatch):
        ito_integral_inverse_vol(y, np.ones(3))


def test_correction_integral_identity_correlation():
    g = TimeGrid(1.0, 8)
    c = build_correlation(np.eye(2))
    y = np.full((1, 9), 2.0)
    # beta = -1, mu~ = 1, Y = 2: -1 / 4 over [0, 1]
    assert correction_integral(y, np.ones((1, 9)), c.beta, g) == pytest.approx(-0.25)


def test_discount_factor():
    g = TimeGrid(1.0, 2)
    assert discount_factor(0.5, g) == pytest.approx(math.exp(-0.5))
    assert discount_factor(lambda t: t, g) == pytest.approx(math.exp(-0.25))


def test_market_params_validation():
    with pytest.raises(DimensionMismatch):
        MarketParams([1.0, 2.0], 0.0, [1.0], [1.0])
    with pytest.raises(ValidationError):
        MarketParams([1.0], 0.0, [-1.0], [1.0])


def test_time_dependent_drift_on_grid():
    m = MarketParams([lambda t: 1.0 + t], lambda t: 0.5 * t, [1.0], [1.0])
    g = TimeGrid(1.0, 2)
    assert np.allclose(m.excess_drift(g), [[1.0, 1.25, 1.5]])


def test_bundle_paths_do_not_depend_on_chunking():
    cfg = ExperimentConfig(steps=16, paths=6)
    model = cfg.build_model()
    g = cfg.grid()
    whole = simulate_bundle(model, g, 5, range(6))
    for p in (0, 3, 5):
        single = simulate_bundle(model, g, 5, [p])
        assert np.array_equal(single.y[0], whole.y[p])
        assert np.array_equal(single.x[0], whole.x[p])
        assert single.density[0] == whole.density[p]


def test_bundle_shapes_and_sandwich():
    cfg = ExperimentConfig(steps=32, paths=50, hurst=(0.3,))
    model = cfg.build_model()
    b = simulate_bundle(model, cfg.grid(), 1, range(50))
    assert b.y.shape == (50, 1, 33) and b.dw.shape == (50, 2, 32)
    assert np.all((b.y > 0.01) & (b.y < 5.0))
    assert np.all(b.x[:, 0, 0] == 0.0)


def test_exact_backend_rejected_with_correlated_noise():
    rho = 0.5
    cfg = ExperimentConfig(sigma=(1.0, rho, rho, 1.0), steps=8)
    model = cfg.build_model()
    assert not model.joint_law_faithful
    with pytest.raises(BackendContract):
        model.validate(cfg.grid())


def test_quadrature_backend_with_correlated_noise():
    rho = -0.5
    cfg = ExperimentConfig(sigma=(1.0, rho, rho, 1.0), steps=20, backend="quadrature")
    model = cfg.build_model()
    model.validate(cfg.grid())
    b = simulate_bundle(model, cfg.grid(), 2, range(4))
    assert b.joint_law_faithful
    assert np.all(np.isfinite(b.density))


def test_two_asset_bundle():
    sigma = np.eye(4)
    sigma[0, 1] = sigma[1, 0] = 0.3
    cfg = ExperimentConfig(dim=2, sigma=tuple(sigma.ravel()), mu=(1.5, 1.0), s0=(1.0, 2.0),
                           alpha=(1.0, 0.5), y0=(1.0, 1.0), phi=(0.01, 0.01), psi=(5.0, 5.0),
                           c1=(1.0, 1.0), c2=(1.0, 1.0), gamma=(4.0, 4.0), hurst=(0.7, 0.3), steps=16)
    model = cfg.build_model()
    model.validate(cfg.grid())
    b = simulate_bundle(model, cfg.grid(), 3, range(5))
    assert b.x.shape == (5, 2, 17)
    assert np.allclose(b.x[:, 1, 0], math.log(2.0))
