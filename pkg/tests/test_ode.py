import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandwagon.errors import RangeError
from bandwagon.model import constant_model, fixed_points, vector_field
from bandwagon.ode import EventKind, IntegratorOptions, Orbit, classify_orbit, integrate
from bandwagon.phase import manifold_hits, trace_manifold


def test_origin_is_constant_orbit(low):
    o = integrate(low, (0.0, 0.0), IntegratorOptions(t_max=5.0))
    assert np.all(o.y == 0.0)


def test_options_validation():
    with pytest.raises(ValueError):
        IntegratorOptions(rel_tol=0.0)


def test_against_scipy_on_smooth_branch(high):
    # z stays positive on this short arc, so a smooth reference applies
    from scipy.integrate import solve_ivp

    p0 = (1.0, -0.2)
    T = 0.3
    o = integrate(high, p0, IntegratorOptions(rel_tol=1e-12, abs_tol=1e-14, t_max=T))
    ref = solve_ivp(lambda t, y: vector_field(high, y), (0, T), p0, method="DOP853",
                    rtol=1e-13, atol=1e-15)
    assert np.allclose(o.end, ref.y[:, -1], atol=1e-10)
    assert np.all(o.z > 0)


def test_stationary_saddle_line(low):
    # m = -1 is invariant on z > 0; right of the saddle z grows monotonically
    o = integrate(low, (3.0, -1.0), IntegratorOptions(t_max=2.0))
    assert np.all(np.diff(o.z) > 0)
    assert np.all(np.abs(o.m + 1.0) < 1e-12)


def test_times_monotone_and_dense_output(high):
    o = integrate(high, (0.5, 0.3), IntegratorOptions(t_max=10.0))
    assert np.all(np.diff(o.t) > 0)
    mid = 0.5 * (o.t[:-1] + o.t[1:])
    pts = o(mid)
    assert pts.shape == (len(mid), 2)
    with pytest.raises(RangeError):
        o(o.t[-1] + 1.0)


def test_event_points_lie_on_surfaces(high):
    # backward in time the unstable spiral at the origin attracts
    o = integrate(high, (0.5, 0.3), IntegratorOptions(t_max=30.0), "backward",
                  stop_near=[("O", (0.0, 0.0), 1e-6)])
    zs = o.events_of(EventKind.M_AXIS)
    ms = o.events_of(EventKind.Z_AXIS)
    assert len(zs) >= 2 and len(ms) >= 2
    assert all(abs(e.point.z) <= 1e-10 for e in zs)
    assert all(abs(e.point.m) <= 1e-10 for e in ms)


def test_self_convergence(high):
    p0, T = (0.3, 0.2), 8.0
    coarse = integrate(high, p0, IntegratorOptions(rel_tol=1e-9, abs_tol=1e-11, t_max=T))
    fine = integrate(high, p0, IntegratorOptions(rel_tol=5e-10, abs_tol=5e-12, t_max=T))
    finest = integrate(high, p0, IntegratorOptions(rel_tol=1e-13, abs_tol=1e-15, t_max=T))
    assert np.max(np.abs(np.subtract(coarse.end, fine.end))) <= 10 * 5e-10 * max(1, np.abs(fine.end).max())
    assert np.max(np.abs(np.subtract(fine.end, finest.end))) <= 10 * 5e-10 * max(1, np.abs(fine.end).max())


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-0.9, 0.9), st.floats(0.2, 3.0))
def test_time_reversal(z, m, T):
    p = constant_model(1.0, 1.0)
    opts = IntegratorOptions(rel_tol=1e-12, abs_tol=1e-14, t_max=T)
    fwd = integrate(p, (z, m), opts)
    if fwd.status != "t_max":
        return
    back = integrate(p, fwd.end, opts, "backward")
    assert np.max(np.abs(np.subtract(back.end, (z, m)))) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-1, 1), st.sampled_from([0.1, 1.0, 4.6]))
def test_invariant_strip(z, m, mu):
    from bandwagon.model import crowding_model

    for p in (constant_model(1.0, mu), crowding_model(0.5, mu, 0.5)):
        o = integrate(p, (z, m), IntegratorOptions(t_max=20.0))
        assert np.all(np.abs(o.m) <= 1.0 + 1e-8)


def test_phase_area_expansion(low):
    rng = np.random.default_rng(3)
    tau, h = 0.05, 1e-5
    for _ in range(20):
        p = np.array([rng.uniform(0.2, 2.0), rng.uniform(-0.9, 0.9)])
        tri = [p, p + (h, 0.0), p + (0.0, h)]
        ends = [np.array(integrate(low, q, IntegratorOptions(rel_tol=1e-12, abs_tol=1e-15,
                                                              t_max=tau)).end) for q in tri]
        a0 = 0.5 * h * h
        u, w = ends[1] - ends[0], ends[2] - ends[0]
        a1 = 0.5 * abs(u[0] * w[1] - u[1] * w[0])
        rate = math.log(a1 / a0) / tau
        assert rate == pytest.approx(1.0, rel=0.01)


def test_csv_json_round_trip(high, tmp_path):
    o = integrate(high, (0.5, 0.3), IntegratorOptions(t_max=3.0))
    path = tmp_path / "o.csv"
    o.to_csv(path)
    back = Orbit.from_csv(path)
    assert np.array_equal(back.t, o.t) and np.array_equal(back.y, o.y)
    js = Orbit.from_json(o.to_json())
    assert np.array_equal(js.y, o.y) and np.array_equal(js.coef, o.coef)


def test_classify_examples(low, crowd, crowd_cycle):
    z_on = manifold_hits(low, "Q", -0.5)[0]
    att = classify_orbit(low, (z_on, -0.5))
    assert att.kind == "fixed_point" and att.target == "Q"
    off = classify_orbit(low, (z_on + 0.05, -0.5))
    assert off.kind == "unbounded"
    cyc = crowd_cycle.cycle
    near = classify_orbit(crowd, (0.0, cyc.anchor.m - 0.01))
    assert near.kind == "cycle"


def test_manifold_seed_examples(low, high):
    # stable eigenvector seed at 1e-6, traced backward
    for p, expect_spiral in ((low, False), (high, True)):
        Q = {fp.name: fp for fp in fixed_points(p)}["Q"]
        v = Q.eigenvector("stable")
        s = 1.0 if v[1] > 0 else -1.0  # branch entering the strip
        o = integrate(p, (Q.location.z + s * 1e-6 * v[0], Q.location.m + s * 1e-6 * v[1]),
                      IntegratorOptions(t_max=200.0), "backward",
                      stop_near=[("O", (0.0, 0.0), 1e-4)])
        n = len(o.events_of(EventKind.M_AXIS))
        if expect_spiral:
            assert n >= 2
        else:
            assert n == 0 and np.all(np.diff(o.m) > 0)

    man = trace_manifold(low, "Q")
    assert man.terminated_by == "near_point"
