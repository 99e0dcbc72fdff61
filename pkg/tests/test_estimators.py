import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from vsvmc import estimators as est
from vsvmc.config import ExperimentConfig
from vsvmc.errors import BackendContract, DimensionError, InsufficientSamples
from vsvmc.market_model import PathBundle, simulate_bundle
from vsvmc.payoff import PayoffSpec, reference_payoff
from vsvmc.stochastic_driver import TimeGrid

REF = reference_payoff()


def fake_bundle(x_terminal, ito=None, density=None, correction=None, faithful=True):
    x_terminal = np.asarray(x_terminal, dtype=float)
    m = x_terminal.shape[0]
    g = TimeGrid(1.0, 1)
    x = np.zeros((m, x_terminal.shape[1], 2))
    x[:, :, 1] = x_terminal
    y = np.ones_like(x)
    return PathBundle(
        np.arange(m), g, np.zeros((m, 2 * x.shape[1], 1)), np.zeros_like(x), y, x,
        np.zeros(m) if ito is None else np.asarray(ito, float),
        np.zeros(m) if correction is None else np.asarray(correction, float),
        np.ones(m) if density is None else np.asarray(density, float),
        faithful,
    )


def test_summarize_basic():
    mean, sd, se = est.summarize([1.0, 2.0, 3.0])
    assert (mean, sd) == (2.0, 1.0)
    assert se * math.sqrt(3) == pytest.approx(sd, abs=1e-12)
    assert est.summarize([4.0] * 5)[1] == 0.0


def test_summarize_needs_two():
    with pytest.raises(InsufficientSamples):
        est.summarize([1.0])


def test_summarize_clt():
    u = np.random.default_rng(0).random(10**6)
    mean, _, _ = est.summarize(u)
    assert abs(mean - 0.5) < 4 * (1 / math.sqrt(12)) / 1e3


def test_naive_constant_price():
    b = fake_bundle(np.full((4, 1), math.log(3.0)))
    r = est.estimate_naive([b], REF, [1.0])
    assert np.all(r.samples == 2.0) and r.sd == 0.0


def test_naive_constant_payoff():
    b = fake_bundle(np.random.default_rng(1).normal(size=(5, 1)))
    one = PayoffSpec.from_triples([("indicator", 0.0, 1.0)])
    r = est.estimate_naive([b], one, [1.0])
    assert r.mean == 1.0 and r.sd == 0.0


def test_rep1_zero_weight():
    b = fake_bundle(np.random.default_rng(1).normal(size=(5, 1)), ito=np.zeros(5))
    assert np.all(est.rep1_samples(b, REF, 1.0, 1.0) == 0.0)


def test_rep1_needs_one_asset():
    b = fake_bundle(np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        est.rep1_samples(b, REF, 1.0, 1.0)


def test_rep2_zero_antiderivative():
    far = PayoffSpec.from_triples([("indicator", 1e9, 1.0)])
    b = fake_bundle(np.random.default_rng(1).normal(size=(5, 1)), ito=np.ones(5))
    assert np.all(est.rep2_samples(b, far, [1.0], 1.0, 1.0) == 0.0)


def test_measure_change_requires_faithful_law():
    b = fake_bundle(np.zeros((3, 1)), faithful=False)
    with pytest.raises(BackendContract):
        est.measure_change_samples(b, REF, [1.0], 1.0, 1.0)


def test_measure_change_reduces_to_rep2_without_excess_drift():
    cfg = ExperimentConfig(mu=(0.5,), nu=0.5, steps=32)
    model = cfg.build_model()
    b = simulate_bundle(model, cfg.grid(), 3, range(200))
    assert np.all(b.density == 1.0) and np.all(b.correction == 0.0)
    mmm = est.measure_change_samples(b, REF, [1.0], 1.0, 1.0)
    rep2 = est.rep2_samples(b, REF, [1.0], 1.0, 1.0)
    assert np.array_equal(mmm, rep2)


def test_constant_payoff_rep1_and_rep2_have_unit_mean():
    # f = 1: E f(S(T)) = 1 for every representation
    one = PayoffSpec.from_triples([("indicator", 0.0, 1.0)])
    cfg = ExperimentConfig(steps=50)
    model = cfg.build_model()
    b = simulate_bundle(model, cfg.grid(), 4, range(20000))
    for samples in (est.rep1_samples(b, one, 1.0, 1.0), est.rep2_samples(b, one, [1.0], 1.0, 1.0)):
        mean, _, se = est.summarize(samples)
        assert abs(mean - 1.0) < 3 * se + 1e-3


class ConstantG:
    def G(self, x):
        return np.full(np.shape(x), 3.7)

    def log_kinks(self):
        return np.array([])


def test_cond_gauss_odd_moment_vanishes():
    m = np.array([-1.0, 0.0, 2.5])
    sigma = np.array([0.1, 1.0, 3.0])
    out = est.gaussian_weight_integral(ConstantG(), m, sigma)
    assert np.allclose(out, 0.0, atol=1e-10)


def test_cond_gauss_stein_oracle_unit_path():
    # Y = 1, mu = 3/2, u12 = 0, T = 1, X0 = 0: m = 1, V1 = 1
    g = TimeGrid(1.0, 50)
    y = np.ones((1, 51))
    s = est.cond_gauss_summary(y, np.zeros((1, 50)), np.full(51, 1.5), 1.0, 0.0, g, 0.0)
    assert s.m[0] == pytest.approx(1.0) and s.v1sq[0] == pytest.approx(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sample = est.cond_gauss_samples(y, np.zeros((1, 50)), REF, np.full(51, 1.5), 1.0, 0.0, g, 0.0)
    stein = sum(norm.cdf(1.0 - math.log(k)) for k in (1.0, 2.0, 4.0))
    assert sample[0] == pytest.approx(stein, abs=1e-6)


@given(st.floats(-3, 3), st.floats(0.05, 2.0))
def test_cond_gauss_stein_oracle_indicators(m, sigma):
    out = est.gaussian_weight_integral(REF, np.array([m]), np.array([sigma]))[0]
    stein = sum(norm.cdf((m - math.log(k)) / sigma) for k in (1.0, 2.0, 4.0))
    assert out == pytest.approx(stein, abs=1e-6)


@given(st.floats(-1, 1), st.floats(0.05, 1.0), st.floats(0.5, 3.0))
def test_cond_gauss_stein_oracle_call(m, sigma, k):
    spec = PayoffSpec.from_triples([("call", k, 1.0)])
    out = est.gaussian_weight_integral(spec, np.array([m]), np.array([sigma]))[0]
    d1 = (m - math.log(k) + sigma**2) / sigma
    black = math.exp(m + 0.5 * sigma**2) * norm.cdf(d1) - k * norm.cdf(d1 - sigma)
    assert out == pytest.approx(black, abs=1e-6, rel=1e-6)


def test_cond_gauss_warns_on_degenerate_covariance():
    g = TimeGrid(1.0, 4)
    with pytest.warns(RuntimeWarning):
        est.cond_gauss_samples(np.ones((2, 5)), np.zeros((2, 4)), REF, np.full(5, 1.5), 1.0, 0.0, g, 0.0)


@given(st.integers(0, 1000))
def test_cauchy_schwarz_on_simulated_paths(seed):
    cfg = ExperimentConfig(steps=20, hurst=(0.3,))
    b = simulate_bundle(cfg.build_model(), cfg.grid(), seed, range(20))
    s = est.cond_gauss_summary(b.y[:, 0], b.dw[:, 1], np.full(21, 1.5), 1.0, 0.0, cfg.grid(), 0.0)
    assert np.all(s.v1sq > 0) and np.all(s.v2sq > 0)
    assert np.all(s.v1sq * s.v2sq >= 1.0 - 1e-12)
    assert np.all(s.det_c >= -1e-12)


def test_cond_gauss_variance_below_half_of_rep2():
    cfg = ExperimentConfig(steps=100)
    model = cfg.build_model()
    b = simulate_bundle(model, cfg.grid(), 8, range(4000))
    r2 = est.estimate_rep2([b], REF, [1.0], 1.0, 1.0)
    cg = est.estimate_cond_gaussian([b], REF, model.market.mu_values(cfg.grid())[0], 1.0, 0.0, 0.0)
    assert cg.sd < 0.5 * r2.sd


def test_result_fields():
    b = fake_bundle(np.full((4, 1), math.log(3.0)))
    r = est.estimate_naive([b, b], REF, [1.0])
    assert r.paths == 8 and r.steps == 1 and r.estimator == "naive"
    assert r.stderr * math.sqrt(8) == pytest.approx(r.sd, abs=1e-12)
