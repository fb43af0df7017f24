import numpy as np
import pytest

from bandwagon.errors import BracketError, ClassificationError, NoReturnError
from bandwagon.model import constant_model, crowding_model, fixed_points, nullcline_m, phi_pm
from bandwagon.model import Regime, classify_regime
from bandwagon.phase import (
    cycle_points,
    find_limit_cycle,
    find_mu_hat,
    hausdorff,
    m_star,
    poincare_return,
    trace_manifold,
)

MU_HAT = 4.5494


def test_manifold_requires_saddle(low):
    O = {fp.name: fp for fp in fixed_points(low)}["O"]
    with pytest.raises(ClassificationError):
        trace_manifold(low, O)


def test_manifold_seed_distance(low):
    man = trace_manifold(low, "Q")
    d = np.hypot(*np.subtract(man.seed, man.saddle.location))
    assert d == pytest.approx(1e-6 * np.hypot(100.0, 2.1), rel=1e-12)


def test_low_regime_monotone_and_confined(low):
    man = trace_manifold(low, "Q")
    assert man.m_axis_crossings == ()
    z, m = man.orbit.z, man.orbit.m
    order = np.argsort(z)
    assert np.all(np.diff(m[order]) < 0)
    # between the nullcline (below) and phi- (above) for z > 0
    inner = (z > 1e-3) & (z < man.saddle.location.z - 1e-3)
    for zi, mi in zip(z[inner], m[inner]):
        assert nullcline_m(low, zi) <= mi + 1e-12
        lo = phi_pm(low, zi, -1)
        if lo is not None:
            assert mi <= phi_pm(low, zi, 1) + 1e-12


def test_spiral_manifold(high):
    assert len(trace_manifold(high, "Q").m_axis_crossings) >= 2


def test_manifold_symmetry(high):
    q = trace_manifold(high, "Q")
    p = trace_manifold(high, "P")
    a = np.asarray(q.reflected().y)
    b = np.asarray(p.orbit.y)
    assert hausdorff(a, b) <= 1e-6


def test_delta_insensitivity():
    p = crowding_model(0.5, 2.0, 0.5)
    a = m_star(p)
    fps = {fp.name: fp for fp in fixed_points(p)}
    man = trace_manifold(p, fps["Q"], delta=0.5 * 1e-6 * np.hypot(100.0, 2.1),
                         first_crossing_only=True, origin_radius=1e-12)
    assert abs(man.m_axis_crossings[0] - a) < 1e-5


def test_m_star_examples():
    assert m_star(crowding_model(0.5, 4.558, 0.5)) == pytest.approx(1.0, abs=5e-3)
    assert 0.0 < m_star(crowding_model(0.5, 2.0, 0.5)) < 1.0
    small = m_star(crowding_model(0.5, 0.05, 0.5))
    assert 0.0 < small < 0.05
    with pytest.raises(ValueError):
        m_star(crowding_model(0.5, 0.03, 0.5))


def test_m_star_monotone():
    vals = [m_star(crowding_model(0.5, mu, 0.5)) for mu in (0.5, 1.0, 2.0, 3.0, 4.0)]
    assert np.all(np.diff(vals) > 0)


def test_mu_hat():
    res = find_mu_hat(0.5, 0.5, (1.0, 10.0), 1e-3)
    assert res.mu_hat == pytest.approx(4.558, abs=0.01)
    assert not res.warnings
    lo, hi = res.bracket
    assert hi - lo <= 1e-3
    high = crowding_model(0.5, res.mu_hat + 0.05, 0.5)
    assert classify_regime(high, mu_hat=res.mu_hat) == Regime.HIGH
    assert m_star(crowding_model(0.5, res.mu_hat, 0.5)) == pytest.approx(1.0, abs=5e-3)


def test_mu_hat_bracket_errors():
    with pytest.raises(BracketError):
        find_mu_hat(1.0, 0.0)
    with pytest.raises(BracketError):
        find_mu_hat(0.5, 0.5, (5.0, 10.0))


def test_cycle(crowd, crowd_cycle):
    assert len(crowd_cycle.cycles) == 1
    cyc = crowd_cycle.cycle
    assert cyc.amplitude < 1.0
    assert cyc.residual <= 1e-8
    assert abs(cyc.multiplier) < 1.0
    assert cyc.period > 0
    assert abs(poincare_return(crowd, cyc.anchor.m) - cyc.anchor.m) <= 1e-8
    inside = cyc.anchor.m - 0.05
    assert abs(poincare_return(crowd, inside) - cyc.anchor.m) < abs(inside - cyc.anchor.m)
    pts = cycle_points(cyc, 500)
    assert np.max(np.abs(pts[:, 1])) == pytest.approx(cyc.amplitude, abs=1e-6)


def test_no_cycle_cases():
    assert not find_limit_cycle(crowding_model(0.5, 4.0, 0.5)).found
    assert not find_limit_cycle(constant_model(1.0, 1.0)).found


def test_no_return(low):
    with pytest.raises(NoReturnError) as info:
        poincare_return(low, 0.5)
    assert info.value.attractor is not None


def test_period_grows_toward_mu_hat():
    periods = [find_limit_cycle(crowding_model(0.5, MU_HAT + d, 0.5)).cycle.period
               for d in (0.01, 0.1, 0.5)]
    assert periods[0] > periods[1] > periods[2]
