"""Global phase-plane analysis.

Stable manifolds of the saddles are traced in reversed time from a seed
``saddle + delta * v_s``; their crossings of the line ``z = 0`` (the ``m``
axis) organise the whole portrait.  For the crowding model the first such
crossing ``m*(mu)`` increases with ``mu`` and reaches 1 at the critical
mobility ``mu_hat``.  Periodic orbits are located as fixed points of the
return map to the section ``{z = 0, m > 0}``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, ClassificationError, NoCrossingError, NoCycleError, NoReturnError
from .model import FixedPointClass, PhasePoint, crowding_model, fixed_points
from .ode import EventKind, IntegratorOptions, Orbit, integrate

log = logging.getLogger(__name__)

__all__ = [
    "Manifold",
    "LimitCycle",
    "CycleSearch",
    "MuHatResult",
    "manifold_options",
    "trace_manifold",
    "manifold_hits",
    "m_star",
    "find_mu_hat",
    "poincare_return",
    "return_map_scan",
    "find_limit_cycle",
]

#: caps from the design notes: slow passages near a saddle can take long
TIME_CAP = 1e5
ARC_CAP = 1e3


def manifold_options(**kw):
    """Tight defaults for manifold tracing."""
    base = dict(rel_tol=1e-11, abs_tol=1e-13, t_max=TIME_CAP, max_step=0.25)
    base.update(kw)
    return IntegratorOptions(**base)


@dataclass(frozen=True)
class Manifold:
    saddle: object
    kind: str
    branch: int
    orbit: Orbit
    m_axis_crossings: tuple
    delta: float

    @property
    def seed(self):
        return self.orbit.start

    @property
    def terminated_by(self):
        return self.orbit.status

    def crossings_with_m(self, m0):
        """Points where the manifold meets the horizontal line ``m = m0``."""
        return self.orbit.level_crossings(1, m0)

    def reflected(self):
        """Point reflection through the origin (the mirror saddle's manifold)."""
        o = self.orbit
        refl = Orbit(o.direction, o.t, -o.y, None if o.coef is None else -o.coef, [],
                     o.status, o.meta)
        return refl


def _saddles(params):
    return {fp.name: fp for fp in fixed_points(params) if fp.name in ("P", "Q")}


def _entering_branch(saddle, vec, delta):
    """Sign of the eigenvector offset that points into the strip |m| < 1."""
    m_s = saddle.location.m
    for b in (1, -1):
        if abs(m_s + b * delta * vec[1]) < 1.0 - 1e-15:
            return b
    # eigenvector tangent to the boundary line: fall back to decreasing |m - m_s|
    return 1 if vec[1] * (-m_s) >= 0 else -1


def trace_manifold(params, saddle, kind="stable", branch=None, opts=None, delta=None,
                   first_crossing_only=False, origin_radius=1e-4):
    """Trace a branch of the stable or unstable manifold of ``saddle``.

    Parameters
    ----------
    saddle : FixedPointInfo or str
        The saddle or its name (``"P"`` or ``"Q"``).
    kind : {"stable", "unstable"}
        Stable manifolds are integrated backward, unstable ones forward.
    branch : {+1, -1}, optional
        Sign of the eigenvector offset.  Default: the branch entering the
        strip ``|m| < 1``.
    delta : float, optional
        Seed distance, default ``1e-6`` times the box diagonal.
    first_crossing_only : bool
        Stop at the first crossing of ``z = 0``.

    The trace ends on box exit, within ``origin_radius`` of the origin,
    near the mirror saddle, or at the time / arc-length caps.
    """
    if isinstance(saddle, str):
        saddle = _saddles(params)[saddle]
    if saddle.kind != FixedPointClass.SADDLE:
        raise ClassificationError(f"{saddle.name} is {saddle.kind.value}, not a saddle")
    if kind not in ("stable", "unstable"):
        raise ValueError(f"kind must be 'stable' or 'unstable', got {kind!r}")
    opts = opts or manifold_options()
    if delta is None:
        delta = 1e-6 * opts.box_diagonal
    vec = saddle.eigenvector(kind)
    if branch is None:
        branch = _entering_branch(saddle, vec, delta)
    z0 = saddle.location.z + branch * delta * vec[0]
    m0 = saddle.location.m + branch * delta * vec[1]
    mirror = PhasePoint(-saddle.location.z, -saddle.location.m)
    stop_near = [("O", (0.0, 0.0), origin_radius), ("mirror", mirror, 0.1 * delta)]

    def terminal(ev, events):
        return first_crossing_only and ev.kind == EventKind.M_AXIS

    direction = "backward" if kind == "stable" else "forward"
    orbit = integrate(params, (z0, m0), opts, direction, stop_near=stop_near,
                      terminal=terminal, max_arclength=ARC_CAP)
    crossings = tuple(e.point.m for e in orbit.events if e.kind == EventKind.M_AXIS)
    return Manifold(saddle, kind, branch, orbit, crossings, delta)


def manifold_hits(params, saddle, m0, opts=None):
    """``z`` values where the strip branch of ``saddle``'s stable manifold
    crosses ``m = m0``, in order of increasing backward time."""
    if isinstance(saddle, str):
        saddle = _saddles(params)[saddle]
    man = trace_manifold(params, saddle, "stable", opts=opts)
    return [pt.z for _, pt in man.crossings_with_m(m0)]


def m_star(params, opts=None, return_manifold=False):
    """First crossing of ``z = 0`` by the stable manifold of ``Q``.

    Requires the spiral regime ``b(0) > lam^2/8``.  The value may exceed 1
    (up to the box bound) when the manifold leaves the strip first.

    Raises
    ------
    NoCrossingError
        If the manifold terminates without crossing; the manifold is
        attached to the exception.
    """
    lam = params.lam
    if params.mobility.b(0.0) <= lam * lam / 8.0:
        raise ValueError("m_star() needs the spiral regime mu > lam^2/8")
    man = trace_manifold(params, "Q", "stable", opts=opts, first_crossing_only=True,
                         origin_radius=1e-12)
    if not man.m_axis_crossings:
        raise NoCrossingError(
            f"stable manifold of Q ended ({man.terminated_by}) at {tuple(man.orbit.end)} "
            "without crossing z = 0", manifold=man)
    ms = man.m_axis_crossings[0]
    return (ms, man) if return_manifold else ms


@dataclass
class MuHatResult:
    mu_hat: float
    bracket: tuple
    evaluations: list
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "mu_hat": self.mu_hat,
            "bracket": list(self.bracket),
            "evaluations": [{"mu": mu, "m_star": ms} for mu, ms in self.evaluations],
            "warnings": list(self.warnings),
        }


def _g_mu_hat(lam, eps, mu, opts):
    """``m*(mu) - 1``; a manifold leaving the strip above counts as positive."""
    params = crowding_model(lam, mu, eps)
    try:
        ms = m_star(params, opts)
    except NoCrossingError as exc:
        end = exc.manifold.orbit.end
        if exc.manifold.terminated_by == "box_exit" and end.m > 1.0:
            return math.inf, math.inf
        raise
    return ms - 1.0, ms


def find_mu_hat(lam, epsilon, bracket=(1.0, 10.0), tol=1e-3, opts=None):
    """Critical mobility where ``m*(mu) = 1``, by bisection.

    Monotonicity of ``m*`` in ``mu`` is checked on every evaluated pair;
    violations beyond ``1e-4`` are attached as warnings.

    Raises
    ------
    BracketError
        If ``m*`` is not below 1 at the lower end and at or above 1 at the
        upper end of ``bracket``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise BracketError(f"empty bracket {bracket!r}")
    if lo <= lam * lam / 8.0:
        raise BracketError(f"bracket must lie above lam^2/8 = {lam * lam / 8.0}")
    evals = []
    glo, mlo = _g_mu_hat(lam, epsilon, lo, opts)
    ghi, mhi = _g_mu_hat(lam, epsilon, hi, opts)
    evals += [(lo, mlo), (hi, mhi)]
    if not (glo < 0.0 <= ghi):
        raise BracketError(
            f"m*(mu) - 1 does not change sign on [{lo}, {hi}]: values {glo:.6g}, {ghi:.6g}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g, ms = _g_mu_hat(lam, epsilon, mid, opts)
        evals.append((mid, ms))
        if g < 0.0:
            lo = mid
        else:
            hi = mid
    warn = []
    ordered = sorted(evals)
    for (mu_a, ms_a), (mu_b, ms_b) in zip(ordered[:-1], ordered[1:]):
        if ms_b < ms_a - 1e-4:
            msg = f"m* decreased from {ms_a:.6g} at mu={mu_a:.6g} to {ms_b:.6g} at mu={mu_b:.6g}"
            warn.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return MuHatResult(0.5 * (lo + hi), (lo, hi), evals, warn)


# -- return map and cycles -------------------------------------------------------


def _return_options():
    return IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13, t_max=1e3, max_step=0.25)


def _first_return(ev, events):
    return ev.kind == EventKind.M_AXIS and ev.point.m > 0.0


def poincare_return(params, m_in, opts=None, full=False):
    """Next crossing of the section ``{z = 0, m > 0}`` from ``(0, m_in)``.

    Returns ``m_out``, or ``(m_out, return_time, orbit)`` with ``full``.

    Raises
    ------
    NoReturnError
        If the orbit leaves the box, reaches a fixed point or times out.
    """
    if not 0.0 < m_in < 1.0:
        raise ValueError(f"section coordinate must lie in (0, 1), got {m_in!r}")
    opts = opts or _return_options()
    orbit = integrate(params, (0.0, m_in), opts, "forward", terminal=_first_return,
                      record_m_zero=False)
    if orbit.status != "terminal_event":
        label = {"box_exit": "unbounded", "fixed_point": "fixed_point"}.get(orbit.status,
                                                                            orbit.status)
        raise NoReturnError(f"no return from m={m_in!r}: {orbit.status}", attractor=label)
    m_out = orbit.end.m
    if full:
        return m_out, orbit.t[-1], orbit
    return m_out


@dataclass(frozen=True)
class LimitCycle:
    anchor: PhasePoint
    period: float
    orbit: Orbit
    amplitude: float
    residual: float
    multiplier: float

    def to_dict(self):
        return {
            "anchor_m": self.anchor.m,
            "period": self.period,
            "amplitude": self.amplitude,
            "return_residual": self.residual,
            "multiplier": self.multiplier,
        }


@dataclass
class CycleSearch:
    """Outcome of a section scan.  An empty ``cycles`` list is a result."""

    grid: np.ndarray
    displacement: np.ndarray
    cycles: list

    @property
    def found(self):
        return bool(self.cycles)

    @property
    def cycle(self):
        if not self.cycles:
            raise NoCycleError("no periodic orbit on the section scan")
        return self.cycles[0]


def return_map_scan(params, grid, opts=None):
    """``R(m) - m`` on ``grid``; NaN where the orbit does not return."""
    out = np.empty(len(grid))
    for i, m in enumerate(grid):
        try:
            out[i] = poincare_return(params, float(m), opts) - m
        except NoReturnError:
            out[i] = np.nan
    return out


def find_limit_cycle(params, n_scan=200, grid=None, tol=1e-10, opts=None, fd_step=1e-5):
    """Scan the section for sign changes of ``R(m) - m`` and refine each.

    Parameters
    ----------
    n_scan : int
        Number of interior points of ``(0, 1)`` when ``grid`` is not given.
    tol : float
        Bisection width for the anchor.

    Returns
    -------
    CycleSearch
        All cycles found, ordered by anchor.
    """
    opts = opts or _return_options()
    if grid is None:
        grid = np.linspace(0.0, 1.0, n_scan + 2)[1:-1]
    grid = np.asarray(grid, dtype=float)
    disp = return_map_scan(params, grid, opts)
    cycles = []
    for i in range(len(grid) - 1):
        a, b = disp[i], disp[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)) or a * b > 0:
            continue
        if a == 0.0:
            root = grid[i]
        else:
            root = brentq(lambda x: poincare_return(params, x, opts) - x, grid[i], grid[i + 1],
                          xtol=tol, rtol=4 * np.finfo(float).eps)
        cycles.append(_build_cycle(params, root, opts, fd_step))
    return CycleSearch(grid, disp, cycles)


def _build_cycle(params, anchor_m, opts, fd_step):
    m_out, period, orbit = poincare_return(params, anchor_m, opts, full=True)
    ts = np.linspace(orbit.t[0], orbit.t[-1], 4001)
    amp = float(np.max(np.abs(orbit(ts)[:, 1])))
    amp = max(amp, float(np.max(np.abs(orbit.m))))
    hi = min(anchor_m + fd_step, 1.0 - 1e-12)
    lo = anchor_m - fd_step
    try:
        slope = (poincare_return(params, hi, opts) - poincare_return(params, lo, opts)) / (hi - lo)
    except NoReturnError:
        slope = math.nan
    return LimitCycle(PhasePoint(0.0, anchor_m), float(period), orbit, amp,
                      abs(m_out - anchor_m), float(slope))


def cycle_points(cycle, n=2000):
    ts = np.linspace(cycle.orbit.t[0], cycle.orbit.t[-1], n)
    return cycle.orbit(ts)


def hausdorff(a, b):
    """Symmetric Hausdorff distance between two point clouds (k, 2)."""
    from scipy.spatial import cKDTree

    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))
