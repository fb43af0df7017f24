"""Model parameters and the planar vector field for ``(z, m)``.

The state ``m`` is the mean opinion of the population and ``z`` is the
value-function increment ``V(-1, t) - V(+1, t)``.  Writing the mobility as
``mu(sigma, m) = sigma * a(m) + b(m)`` the coupled system reads::

    dz/dt = b(m)/2 * z|z| + a(m)/2 * z**2 + lam * z + 2 m
    dm/dt = -(m b(m) + a(m)) |z| - (m a(m) + b(m)) z

The field is smooth on each of the half planes ``z > 0`` and ``z < 0`` and
has a kink on ``z = 0``.  Functions that need derivatives therefore work on
a *branch*: ``s = +1`` replaces ``|z|`` by ``z`` and ``s = -1`` by ``-z``.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    InvalidMobilityError,
    NonSmoothPointError,
    UnsupportedLinearizationError,
)

__all__ = [
    "ConstantMobility",
    "CrowdingMobility",
    "GenericMobility",
    "ModelParams",
    "PhasePoint",
    "FixedPointClass",
    "FixedPointInfo",
    "Regime",
    "constant_model",
    "crowding_model",
    "mobility_eval",
    "vector_field",
    "jacobian",
    "origin_linearization",
    "divergence",
    "nullcline_m",
    "nullcline_roots",
    "phi_pm",
    "fixed_points",
    "classify_fixed_point",
    "classify_regime",
    "crowding_reference_point_residual",
]

_GRID = np.linspace(-1.0, 1.0, 1001)


def _check_nonnegative(spec):
    for sigma in (-1.0, 1.0):
        vals = [sigma * spec.a(m) + spec.b(m) for m in _GRID]
        worst = min(vals)
        if worst < 0.0 or not math.isfinite(worst):
            raise InvalidMobilityError(
                f"mobility mu(sigma={sigma:+.0f}, m) attains {worst!r} < 0 on [-1, 1]"
            )


# -- mobility ---------------------------------------------------------------


@dataclass(frozen=True)
class ConstantMobility:
    """``mu(sigma, m) = mu``."""

    mu: float
    kind = "constant"

    def __post_init__(self):
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise InvalidMobilityError(f"constant mobility must be >= 0, got {self.mu!r}")

    def a(self, m):
        return 0.0

    def b(self, m):
        return self.mu

    def da(self, m):
        return 0.0

    def db(self, m):
        return 0.0

    def __call__(self, sigma, m):
        return self.mu


@dataclass(frozen=True)
class CrowdingMobility:
    """``mu(sigma, m) = mu * (1 + epsilon * sigma * m)``.

    Joining a large majority is costlier than leaving it.
    """

    mu: float
    epsilon: float
    kind = "crowding"

    def __post_init__(self):
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise InvalidMobilityError(f"crowding mobility needs mu >= 0, got {self.mu!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidMobilityError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")

    def a(self, m):
        return self.mu * self.epsilon * m

    def b(self, m):
        return self.mu

    def da(self, m):
        return self.mu * self.epsilon

    def db(self, m):
        return 0.0

    def __call__(self, sigma, m):
        return self.mu * (1.0 + self.epsilon * sigma * m)


@dataclass(frozen=True, eq=False)
class GenericMobility:
    """Arbitrary coefficient functions ``a(m)`` and ``b(m)``.

    Derivatives are taken by central differences unless ``a_prime`` and
    ``b_prime`` are supplied.
    """

    a_func: Callable[[float], float]
    b_func: Callable[[float], float]
    a_prime: Optional[Callable[[float], float]] = None
    b_prime: Optional[Callable[[float], float]] = None
    kind = "generic"

    def __post_init__(self):
        _check_nonnegative(self)

    def a(self, m):
        return float(self.a_func(m))

    def b(self, m):
        return float(self.b_func(m))

    def da(self, m):
        if self.a_prime is not None:
            return float(self.a_prime(m))
        h = 1e-6
        return (self.a(m + h) - self.a(m - h)) / (2 * h)

    def db(self, m):
        if self.b_prime is not None:
            return float(self.b_prime(m))
        h = 1e-6
        return (self.b(m + h) - self.b(m - h)) / (2 * h)

    def __call__(self, sigma, m):
        return sigma * self.a(m) + self.b(m)


def mobility_eval(spec, sigma, m):
    """Evaluate ``mu(sigma, m) = sigma a(m) + b(m)``.

    Raises
    ------
    InvalidMobilityError
        If the value is negative.
    """
    if sigma not in (-1, 1):
        raise ValueError(f"sigma must be +1 or -1, got {sigma!r}")
    value = spec(sigma, m)
    if value < 0.0:
        raise InvalidMobilityError(f"mu({sigma:+d}, {m!r}) = {value!r} < 0")
    return value


# -- parameters and points --------------------------------------------------


class PhasePoint(NamedTuple):
    z: float
    m: float


@dataclass(frozen=True)
class ModelParams:
    """Discount rate plus a mobility specification.

    Parameters
    ----------
    lam : float
        Discount rate, strictly positive.
    mobility : ConstantMobility | CrowdingMobility | GenericMobility
    """

    lam: float
    mobility: object

    def __post_init__(self):
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"discount rate must be positive, got {self.lam!r}")

    @property
    def kind(self):
        return self.mobility.kind

    @property
    def mu(self):
        return getattr(self.mobility, "mu", None)

    @property
    def epsilon(self):
        return getattr(self.mobility, "epsilon", 0.0 if self.kind == "constant" else None)

    def with_mu(self, mu):
        """Copy of these parameters with a different mobility level."""
        if self.kind == "constant":
            return ModelParams(self.lam, ConstantMobility(mu))
        if self.kind == "crowding":
            return ModelParams(self.lam, CrowdingMobility(mu, self.mobility.epsilon))
        raise TypeError("with_mu() is undefined for generic mobility")

    def rhs(self, branch):
        """Return a fast scalar closure ``f(z, m) -> (dz, dm)`` on ``branch``.

        ``branch`` is the sign used in place of ``|z|/z``.  The closure
        avoids numpy so that it can be called inside tight integrator loops.
        """
        lam = self.lam
        s = 1.0 if branch > 0 else -1.0
        mob = self.mobility
        if mob.kind == "constant":
            mu = mob.mu
            hmu = 0.5 * mu * s

            def f(z, m):
                return hmu * z * z + lam * z + 2.0 * m, -mu * (m * s * z + z)

        elif mob.kind == "crowding":
            mu, eps = mob.mu, mob.epsilon
            hmu = 0.5 * mu * s
            hme = 0.5 * mu * eps

            def f(z, m):
                zz = z * z
                return (
                    hmu * zz + hme * m * zz + lam * z + 2.0 * m,
                    -mu * ((1.0 + eps) * m * s * z + (1.0 + eps * m * m) * z),
                )

        else:
            afun, bfun = mob.a, mob.b

            def f(z, m):
                a, b = afun(m), bfun(m)
                zz = z * z
                return (
                    0.5 * b * s * zz + 0.5 * a * zz + lam * z + 2.0 * m,
                    -(m * b + a) * s * z - (m * a + b) * z,
                )

        return f


def constant_model(lam, mu):
    return ModelParams(lam, ConstantMobility(mu))


def crowding_model(lam, mu, epsilon):
    return ModelParams(lam, CrowdingMobility(mu, epsilon))


def _branch_of(z, branch=None):
    if branch is not None:
        return 1.0 if branch > 0 else -1.0
    return 1.0 if z >= 0.0 else -1.0


def vector_field(params, p):
    """Evaluate ``(dz/dt, dm/dt)`` at ``p = (z, m)``."""
    z, m = p
    mob = params.mobility
    a, b = mob.a(m), mob.b(m)
    az = abs(z)
    dz = 0.5 * b * z * az + 0.5 * a * z * z + params.lam * z + 2.0 * m
    dm = -(m * b + a) * az - (m * a + b) * z
    return dz, dm


def field_norm(params, p):
    dz, dm = vector_field(params, p)
    return math.hypot(dz, dm)


def jacobian(params, p, branch=None):
    """Analytic Jacobian of the field on the smooth branch containing ``p``.

    Raises
    ------
    NonSmoothPointError
        If ``z == 0`` and no branch is requested (the origin has its own
        linearisation, see :func:`origin_linearization`).
    """
    z, m = p
    if z == 0.0 and branch is None:
        raise NonSmoothPointError(f"field is not differentiable at z = 0 (m = {m!r})")
    s = _branch_of(z, branch)
    mob = params.mobility
    a, b, da, db = mob.a(m), mob.b(m), mob.da(m), mob.db(m)
    az = s * z
    return np.array(
        [
            [b * az + a * z + params.lam, 0.5 * db * z * az + 0.5 * da * z * z + 2.0],
            [-(m * b + a) * s - (m * a + b), -(b + m * db + da) * az - (a + m * da + db) * z],
        ]
    )


def origin_linearization(params):
    """Linearisation ``[[lam, 2], [-b(0), 0]]`` at the origin.

    Requires ``a(0) == 0``; otherwise the ``|z|`` term is first order and
    the field has no linearisation there.
    """
    mob = params.mobility
    a0 = mob.a(0.0)
    if abs(a0) > 1e-14:
        raise UnsupportedLinearizationError(f"a(0) = {a0!r} != 0: origin is a first-order kink")
    return np.array([[params.lam, 2.0], [-mob.b(0.0), 0.0]])


def divergence(params, p, branch=None):
    """Trace of the Jacobian; limits at ``z = 0`` are taken along ``branch``
    (default ``+``)."""
    z, m = p
    if z == 0.0 and branch is None:
        branch = 1
    J = jacobian(params, p, branch=branch)
    return float(J[0, 0] + J[1, 1])


def nullcline_m(params, z):
    """Closed-form ``dz = 0`` locus ``m(z)`` for constant mobility."""
    if params.kind != "constant":
        raise TypeError("nullcline_m() has a closed form only for constant mobility")
    mu, lam = params.mobility.mu, params.lam
    return -(0.5 * mu * z * abs(z) + lam * z) / 2.0


def nullcline_roots(params, z, n_grid=401):
    """All ``m`` in ``[-1, 1]`` with ``dz(z, m) = 0``, located by bracketing.

    Works for every mobility kind; for constant mobility it agrees with
    :func:`nullcline_m` whenever that value lies in the strip.
    """
    from scipy.optimize import brentq

    def g(m):
        return vector_field(params, (z, m))[0]

    grid = np.linspace(-1.0, 1.0, n_grid)
    vals = [g(m) for m in grid]
    roots = []
    for lo, hi, vlo, vhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if vlo == 0.0:
            roots.append(float(lo))
        elif vlo * vhi < 0.0:
            roots.append(brentq(g, lo, hi, xtol=1e-14))
    if vals[-1] == 0.0:
        roots.append(1.0)
    return roots


def phi_pm(params, z, branch):
    """Boundary curves of the convexity region of trajectories ``m(z)``.

    ``phi+-(z) = -(z/4) * (lam -+ sqrt(lam^2 - 8 mu + 6 lam mu z + 4 mu^2 z^2))``
    for ``z >= 0``; returns ``None`` where the radicand is negative.
    """
    if params.kind != "constant":
        raise TypeError("phi_pm() is defined for constant mobility only")
    if z < 0:
        raise ValueError("phi_pm() takes z >= 0; reflect through the origin for z < 0")
    lam, mu = params.lam, params.mobility.mu
    disc = lam * lam - 8.0 * mu + 6.0 * lam * mu * z + 4.0 * mu * mu * z * z
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    if branch in ("+", 1, "plus"):
        return -(z / 4.0) * (lam - root)
    if branch in ("-", -1, "minus"):
        return -(z / 4.0) * (lam + root)
    raise ValueError(f"unknown branch {branch!r}")


# -- fixed points -----------------------------------------------------------


class FixedPointClass(str, enum.Enum):
    SADDLE = "saddle"
    UNSTABLE_NODE = "unstable_node"
    UNSTABLE_SPIRAL = "unstable_spiral"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class FixedPointInfo:
    name: str
    location: PhasePoint
    jacobian: np.ndarray = field(repr=False)
    eigenvalues: tuple
    kind: FixedPointClass

    def eigenvector(self, which):
        """Unit eigenvector for ``which`` in ``{"stable", "unstable"}``.

        Only meaningful for saddles.  The sign is normalised so that the
        ``m`` component is non-negative (``z`` positive if ``m`` vanishes).
        """
        w, v = np.linalg.eig(self.jacobian)
        w = np.real(w)
        idx = int(np.argmin(w)) if which == "stable" else int(np.argmax(w))
        vec = np.real(v[:, idx])
        vec = vec / np.linalg.norm(vec)
        if vec[1] < 0 or (vec[1] == 0 and vec[0] < 0):
            vec = -vec
        return vec


def classify_fixed_point(J, tol=1e-12):
    """Stability class from trace/determinant of a 2x2 Jacobian."""
    tr = float(J[0, 0] + J[1, 1])
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    disc = tr * tr - 4.0 * det
    scale = max(1.0, tr * tr, abs(det))
    if det < -tol * scale:
        return FixedPointClass.SADDLE
    if det > tol * scale and tr > 0.0:
        if disc < -tol * scale:
            return FixedPointClass.UNSTABLE_SPIRAL
        return FixedPointClass.UNSTABLE_NODE
    return FixedPointClass.DEGENERATE


def _eigs(J):
    tr = float(J[0, 0] + J[1, 1])
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    root = cmath.sqrt(tr * tr - 4.0 * det)
    return ((tr + root) / 2.0, (tr - root) / 2.0)


def _saddle_closed_form(params):
    """Closed-form candidates on the invariant lines ``m = -1`` and ``m = +1``.

    On ``m = -1`` only the ``+1``-agents can flip and ``dz = 0`` reduces to
    ``mu(+1,-1)/2 z^2 + lam z - 2 = 0`` with ``z > 0``; on ``m = +1`` the
    mirror equation holds with ``mu(-1,+1)``.
    """
    lam = params.lam
    mob = params.mobility

    def positive_root(mu_):
        if mu_ <= 0.0:
            return 2.0 / lam
        return (math.sqrt(lam * lam + 4.0 * mu_) - lam) / mu_

    zq = positive_root(mob(1, -1.0))
    zp = -positive_root(mob(-1, 1.0))
    return PhasePoint(zp, 1.0), PhasePoint(zq, -1.0)


def _newton_polish(params, p, tol=1e-13, max_iter=50):
    z, m = p
    for _ in range(max_iter):
        F = np.array(vector_field(params, (z, m)))
        res = float(np.hypot(*F))
        if res <= tol:
            return PhasePoint(z, m), res
        J = jacobian(params, (z, m))
        try:
            dz, dm = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        z, m = z + dz, m + dm
    res = field_norm(params, (z, m))
    if res <= 1e-9:
        return PhasePoint(z, m), res
    raise ConvergenceError(f"Newton iteration did not converge near {p}", residual=res)


def fixed_points(params):
    """Origin ``O`` and the two saddles ``P`` (m = +1) and ``Q`` (m = -1).

    The saddle locations come from the closed form on the invariant lines
    ``m = +-1`` and are then polished by Newton on the full field.
    """
    out = []
    try:
        J0 = origin_linearization(params)
        out.append(
            FixedPointInfo("O", PhasePoint(0.0, 0.0), J0, _eigs(J0), classify_fixed_point(J0))
        )
    except UnsupportedLinearizationError:
        J0 = np.full((2, 2), np.nan)
        out.append(
            FixedPointInfo("O", PhasePoint(0.0, 0.0), J0, (cmath.nan, cmath.nan),
                           FixedPointClass.DEGENERATE)
        )
    p_guess, q_guess = _saddle_closed_form(params)
    q, _ = _newton_polish(params, q_guess)
    p, _ = _newton_polish(params, p_guess)
    if _is_odd_symmetric(params):
        # enforce exact reflection
        p = PhasePoint(-q.z, -q.m)
    for name, pt in (("P", p), ("Q", q)):
        J = jacobian(params, pt)
        out.append(FixedPointInfo(name, pt, J, _eigs(J), classify_fixed_point(J)))
    return out


def _is_odd_symmetric(params):
    mob = params.mobility
    if mob.kind in ("constant", "crowding"):
        return True
    probe = np.linspace(-1.0, 1.0, 11)
    return all(
        abs(mob.a(-m) + mob.a(m)) < 1e-14 and abs(mob.b(-m) - mob.b(m)) < 1e-14 for m in probe
    )


def fixed_point_by_name(params, name):
    for fp in fixed_points(params):
        if fp.name == name:
            return fp
    raise KeyError(name)


def crowding_reference_point_residual(params):
    """Field norm at ``(-2/lam, 1)`` for the crowding model.

    This point is a fixed point only when ``epsilon == 1``; for other values
    the residual equals ``2 mu (1 - epsilon) / lam^2`` in the ``z`` component.
    """
    if params.kind != "crowding":
        raise TypeError("crowding model only")
    return field_norm(params, (-2.0 / params.lam, 1.0))


# -- regimes ----------------------------------------------------------------


class Regime(str, enum.Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


def classify_regime(params, mu_hat=None):
    """Mobility regime of the parameter set.

    For crowding mobility the moderate/high split needs the critical level
    ``mu_hat``; it is computed with :func:`bandwagon.phase.find_mu_hat` when
    not supplied.
    """
    lam = params.lam
    b0 = params.mobility.b(0.0)
    if b0 <= lam * lam / 8.0:
        return Regime.LOW
    if params.kind != "crowding":
        return Regime.HIGH
    if mu_hat is None:
        from .phase import find_mu_hat

        mu_hat = find_mu_hat(lam, params.mobility.epsilon).mu_hat
    return Regime.MODERATE if params.mobility.mu <= mu_hat else Regime.HIGH


def odd_reflect(p: Sequence[float]):
    return PhasePoint(-p[0], -p[1])
