import math

import numpy as np
import pytest
from scipy import stats

from bandwagon.mfg import ControlLaw, enumerate_equilibria
from bandwagon.micro import (
    LawTable,
    MicroConfig,
    deviation_gain,
    lln_error,
    rounded_initial_m,
    simulate,
    tail_horizon,
)
from bandwagon.model import constant_model
from bandwagon.ode import Orbit


class ConstantRateLaw:
    """Both states flip at the same constant rate."""

    def __init__(self, rate, T):
        self.c, self.t1 = rate, T

    def rate_on_grid(self, sigma, t):
        return np.full(np.shape(t), self.c, dtype=float)


def _origin_law(params, T=10.0):
    coef = np.zeros((1, 5, 2))
    o = Orbit("forward", [0.0, T], [(0.0, 0.0), (0.0, 0.0)], coef, [], "fixed_point")
    return ControlLaw(params, o, attractor="origin")


@pytest.fixture(scope="module")
def law_low(low, eq_low):
    return ControlLaw(low, eq_low[0])


def test_zero_control_closed_form(low):
    law = _origin_law(low)
    T = 7.0
    res = simulate(low, MicroConfig(10, T, 3, law, 0.2))
    assert res.n_events == 0
    sigma = np.where(np.arange(10) < 6, 1.0, -1.0)
    expect = sigma * 0.2 * (1 - math.exp(-low.lam * T)) / low.lam
    assert np.max(np.abs(res.utilities - expect)) <= 1e-12
    assert res.terminal_m == 0.2


def test_path_invariants(low, law_low):
    N = 500
    res = simulate(low, MicroConfig(N, 20.0, 11, law_low, -0.5))
    m = np.concatenate([[res.initial_m], res.m_after])
    assert np.allclose(np.abs(np.diff(m)), 2.0 / N, rtol=0, atol=1e-15)
    assert np.all(np.abs(m) <= 1.0)
    assert np.all(np.diff(res.times) > 0)
    assert np.all(np.sign(np.diff(m)) == res.direction)


def test_reproducible(low, law_low):
    a = simulate(low, MicroConfig(200, 10.0, 42, law_low, -0.5))
    b = simulate(low, MicroConfig(200, 10.0, 42, law_low, -0.5))
    c = simulate(low, MicroConfig(200, 10.0, 43, law_low, -0.5))
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.utilities, b.utilities)
    assert a.to_csv() != c.to_csv()
    assert "rng=numpy.Philox seed=42" in a.to_csv()


def test_config_validation(law_low):
    with pytest.raises(ValueError):
        MicroConfig(1, 1.0, 0, law_low, 0.0)
    with pytest.raises(ValueError):
        MicroConfig(10, 0.0, 0, law_low, 0.0)
    with pytest.raises(ValueError):
        MicroConfig(10, 1.0, 0, law_low, 0.15)
    assert rounded_initial_m(100, -0.5) == -0.5
    assert rounded_initial_m(3, 0.0) in (-1 / 3, 1 / 3)


def test_thinning_matches_poisson(low):
    # two agents, each flipping at rate 1 in either state: total count ~ Poisson(2 T)
    T = 1.0
    law = ConstantRateLaw(1.0, T)
    table = LawTable(low, law, T, n_cells=10)
    counts = np.array([simulate(low, MicroConfig(2, T, s, law, 0.0), table).n_events
                       for s in range(10_000)])
    kmax = 7
    obs = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
    pmf = stats.poisson.pmf(np.arange(kmax), 2 * T)
    probs = np.append(pmf, 1 - pmf.sum())
    chi2, p = stats.chisquare(obs, probs * len(counts))
    assert p > 0.001


def test_consensus_at_finite_n(low, law_low):
    finals = [simulate(low, MicroConfig(1000, 30.0, s, law_low, -0.5)).terminal_m
              for s in range(20)]
    assert abs(np.mean(finals) + 1.0) < 0.1


def test_tail_horizon(low, law_low):
    T = tail_horizon(low, law_low, 1e-4)
    assert math.exp(-low.lam * T) / low.lam < 1e-4
    assert 5 < T < 30


def test_lln_origin_rounding(low):
    eq = [e for e in enumerate_equilibria(low, 0.0, shoot=False) if e.attractor == "origin"][0]
    rows = lln_error(low, eq, (101,), range(3), T=5.0)
    assert rows[0]["mean"] == pytest.approx(abs(rounded_initial_m(101, 0.0)), abs=1e-15)


def test_lln_periodic_shrinks(crowd, eq_crowd):
    eq = [e for e in eq_crowd if e.attractor == "periodic"][0]
    rows = lln_error(crowd, eq, (100, 10000), range(3), T=8.0)
    assert rows[1]["mean"] < rows[0]["mean"]
    assert rows[1]["mean"] < 0.05


def test_identity_deviation_is_zero(low, eq_low, law_low):
    cfg = MicroConfig(100, 10.0, 0, law_low, -0.5)
    res = deviation_gain(low, eq_low[0], cfg, (1.0,), range(10))
    assert res.max_gain == 0.0 and res.standard_error == 0.0


def test_gain_shrinks_with_n(low, eq_low, law_low):
    small = deviation_gain(low, eq_low[0], MicroConfig(10, 10.0, 0, law_low, -0.4),
                           seeds=range(200))
    big = deviation_gain(low, eq_low[0], MicroConfig(1000, 10.0, 0, law_low, -0.5),
                         seeds=range(100))
    assert big.max_gain <= small.max_gain + 2 * small.standard_error
