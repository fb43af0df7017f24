import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandwagon.config import dump_params, dumps_params, load_params, params_from_dict
from bandwagon.errors import InvalidMobilityError, NonSmoothPointError, UnsupportedLinearizationError
from bandwagon.model import (
    ConstantMobility,
    CrowdingMobility,
    FixedPointClass,
    GenericMobility,
    ModelParams,
    Regime,
    classify_regime,
    constant_model,
    crowding_model,
    crowding_reference_point_residual,
    divergence,
    fixed_points,
    jacobian,
    mobility_eval,
    nullcline_m,
    nullcline_roots,
    origin_linearization,
    phi_pm,
    vector_field,
)

Z_STAR = (math.sqrt(1.4) - 1.0) / 0.1
reals = st.floats(-5, 5, allow_nan=False)
strip = st.floats(-1, 1, allow_nan=False)


def test_mobility_examples():
    assert mobility_eval(ConstantMobility(0.1), 1, 0.7) == 0.1
    assert mobility_eval(CrowdingMobility(4.6, 0.5), 1, 1.0) == pytest.approx(6.9, abs=1e-12)
    assert mobility_eval(CrowdingMobility(4.6, 0.5), -1, 1.0) == pytest.approx(2.3, abs=1e-12)


def test_mobility_rejects_negative():
    with pytest.raises(InvalidMobilityError):
        GenericMobility(lambda m: 2.0 * m, lambda m: 1.0)
    with pytest.raises(ValueError):
        mobility_eval(ConstantMobility(1.0), 0, 0.0)


def test_lambda_must_be_positive():
    with pytest.raises(ValueError):
        ModelParams(0.0, ConstantMobility(1.0))


def test_vector_field_examples(low):
    assert vector_field(low, (0.0, 0.0)) == (0.0, 0.0)
    assert max(map(abs, vector_field(low, (1.832159566, -1.0)))) < 1e-9
    cr = crowding_model(0.5, 4.6, 0.5)
    assert max(map(abs, vector_field(cr, (-1.1191675, 1.0)))) < 1e-6


@settings(max_examples=200, deadline=None)
@given(reals, strip, st.sampled_from([0.1, 1.0, 4.6]), st.sampled_from([0.0, 0.5, 1.0]))
def test_odd_symmetry(z, m, mu, eps):
    for p in (constant_model(1.0, mu), crowding_model(0.5, mu, eps)):
        a = vector_field(p, (z, m))
        b = vector_field(p, (-z, -m))
        assert abs(a[0] + b[0]) <= 1e-12 * max(1.0, abs(a[0]))
        assert abs(a[1] + b[1]) <= 1e-12 * max(1.0, abs(a[1]))


@settings(max_examples=200, deadline=None)
@given(reals.filter(lambda z: abs(z) > 1e-3), strip)
def test_jacobian_matches_finite_differences(z, m):
    for p in (constant_model(1.0, 1.0), crowding_model(0.5, 4.6, 0.5)):
        J = jacobian(p, (z, m))
        h = 1e-6
        fd = np.empty((2, 2))
        for j, d in enumerate(((h, 0.0), (0.0, h))):
            fp = np.array(vector_field(p, (z + d[0], m + d[1])))
            fm = np.array(vector_field(p, (z - d[0], m - d[1])))
            fd[:, j] = (fp - fm) / (2 * h)
        assert np.allclose(J, fd, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(J).max()))


def test_jacobian_examples(high, low):
    assert jacobian(high, (1.0, 0.0))[0, 0] == pytest.approx(2.0)
    ev = np.linalg.eigvals(jacobian(low, (Z_STAR, -1.0)))
    assert np.all(np.isreal(ev)) and ev.real.min() < 0 < ev.real.max()
    with pytest.raises(NonSmoothPointError):
        jacobian(low, (0.0, 0.5))


def test_origin_linearization():
    ev = np.sort(np.linalg.eigvals(origin_linearization(constant_model(1, 0.1))).real)
    assert ev == pytest.approx([0.2763932, 0.7236068], abs=1e-7)
    ev = np.linalg.eigvals(origin_linearization(constant_model(1, 1)))
    assert sorted(ev.imag) == pytest.approx([-math.sqrt(7) / 2, math.sqrt(7) / 2])
    assert ev.real == pytest.approx([0.5, 0.5])
    ev = np.linalg.eigvals(origin_linearization(constant_model(1, 0.125)))
    assert ev.real == pytest.approx([0.5, 0.5], abs=1e-7)
    shifted = ModelParams(1.0, GenericMobility(lambda m: 0.1 + 0.0 * m, lambda m: 1.0))
    with pytest.raises(UnsupportedLinearizationError):
        origin_linearization(shifted)


def test_divergence_examples(low):
    assert divergence(low, (0.3, 0.2)) == pytest.approx(1.0, abs=1e-12)
    cr = crowding_model(0.5, 4.6, 0.5)
    assert divergence(cr, (1.0, 0.5)) == pytest.approx(-2.95, abs=1e-12)
    assert divergence(cr, (1e-12, 0.0)) == pytest.approx(0.5, abs=1e-9)


def test_constant_divergence_everywhere():
    rng = np.random.default_rng(5)
    for mu in (0.1, 1.0, 3.0):
        p = constant_model(1.0, mu)
        for z, m in zip(rng.uniform(-10, 10, 2000), rng.uniform(-1, 1, 2000)):
            assert abs(divergence(p, (z, m)) - 1.0) <= 1e-10


def test_nullcline(low):
    assert nullcline_m(low, 0.0) == 0.0
    assert nullcline_m(low, 1.0) == pytest.approx(-0.525)
    assert nullcline_m(low, -1.0) == pytest.approx(0.525)
    assert nullcline_roots(low, 1.0) == pytest.approx([-0.525])
    cr = crowding_model(0.5, 4.6, 0.5)
    for m in nullcline_roots(cr, 0.4):
        assert abs(vector_field(cr, (0.4, m))[0]) < 1e-10


def test_phi_pm():
    p = constant_model(1.0, 0.125)
    assert phi_pm(p, 0.0, 1) == 0.0 and phi_pm(p, 0.0, -1) == 0.0
    assert phi_pm(constant_model(1.0, 1.0), 0.0, 1) is None
    low = constant_model(1.0, 0.1)
    assert phi_pm(low, 0.0, 1) == 0.0 and phi_pm(low, 0.0, -1) == 0.0
    root = math.sqrt(1 - 0.8 + 0.6 + 0.04)
    assert phi_pm(low, 1.0, 1) == pytest.approx(-(1 - root) / 4, abs=1e-14)
    assert phi_pm(low, 1.0, -1) == pytest.approx(-(1 + root) / 4, abs=1e-14)


def _check_class(fp):
    ev = np.asarray(fp.eigenvalues)
    if fp.kind == FixedPointClass.SADDLE:
        assert np.all(ev.imag == 0) and ev.real.min() < 0 < ev.real.max()
    elif fp.kind == FixedPointClass.UNSTABLE_SPIRAL:
        assert np.any(ev.imag != 0) and np.all(ev.real > 0)
    elif fp.kind == FixedPointClass.UNSTABLE_NODE:
        assert np.all(ev.imag == 0) and np.all(ev.real > 0)


@pytest.mark.parametrize("params", [constant_model(1, 0.1), constant_model(1, 1),
                                    crowding_model(0.5, 4.6, 0.5), crowding_model(0.5, 2.0, 1.0)])
def test_fixed_points_invariants(params):
    fps = {fp.name: fp for fp in fixed_points(params)}
    assert set(fps) == {"O", "P", "Q"}
    for fp in fps.values():
        assert math.hypot(*vector_field(params, fp.location)) <= 1e-9
        _check_class(fp)
    assert fps["P"].location == (-fps["Q"].location.z, -fps["Q"].location.m)


def test_fixed_point_examples(low, high):
    fps = {fp.name: fp for fp in fixed_points(low)}
    assert fps["O"].kind == FixedPointClass.UNSTABLE_NODE
    assert fps["Q"].location.z == pytest.approx(1.832159566, abs=1e-9)
    assert fps["Q"].location.z == pytest.approx(Z_STAR, abs=1e-10)
    assert fps["Q"].kind == FixedPointClass.SADDLE
    assert {fp.name: fp for fp in fixed_points(high)}["O"].kind == FixedPointClass.UNSTABLE_SPIRAL
    cr = {fp.name: fp for fp in fixed_points(crowding_model(0.5, 4.6, 0.5))}
    assert cr["P"].location.z == pytest.approx(-1.1191675, abs=1e-6)


def test_reference_crowding_point_only_at_full_crowding():
    lam, mu = 0.5, 4.6
    assert abs(crowding_reference_point_residual(crowding_model(lam, mu, 1.0))) <= 1e-9
    r = crowding_reference_point_residual(crowding_model(lam, mu, 0.5))
    assert abs(r) == pytest.approx(abs(2 * mu * (0.5 - 1) / lam**2), rel=1e-9)
    P = {fp.name: fp for fp in fixed_points(crowding_model(lam, mu, 1.0))}["P"]
    assert P.location.z == pytest.approx(-2 / lam, abs=1e-9)


def test_regimes(low, high):
    assert classify_regime(low) == Regime.LOW
    assert classify_regime(high) == Regime.HIGH
    assert classify_regime(crowding_model(0.5, 4.6, 0.5), mu_hat=4.549) == Regime.HIGH
    assert classify_regime(crowding_model(0.5, 4.0, 0.5), mu_hat=4.549) == Regime.MODERATE
    assert classify_regime(crowding_model(0.5, 0.03, 0.5), mu_hat=4.549) == Regime.LOW


def test_config_round_trip(tmp_path):
    for p in (constant_model(1.0, 0.1), crowding_model(0.5, 4.6, 0.5)):
        path = tmp_path / "p.toml"
        dump_params(p, path)
        assert load_params(path) == p
    assert "lambda = 0.5" in dumps_params(crowding_model(0.5, 4.6, 0.5))
    with pytest.raises(ValueError):
        params_from_dict({"lambda": 1.0, "mobility": {"kind": "crowding", "mu": 1.0}})
    with pytest.raises(ValueError):
        params_from_dict({"lambda": 1.0})
