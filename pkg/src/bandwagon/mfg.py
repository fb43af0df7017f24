"""Mean-field-game equilibria, value functions and verification.

Every bounded solution of the ``(z, m)`` system is an equilibrium.  For a
given initial opinion ``m0`` they are:

* consensus equilibria: points of ``m = m0`` on the stable manifold of a
  saddle (``Q`` leads to ``m -> -1``, ``P`` to ``m -> +1``);
* periodic equilibria: the two points where the limit cycle meets
  ``m = m0`` (one on the ascending, one on the descending arc);
* the origin, when ``m0 = 0``.

Consensus orbits are built from the traced manifold itself, reversed in
time, followed by the linear approach to the saddle.  Integrating them
forward instead would leave the manifold at the rate of the unstable
eigenvalue.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .errors import NoCrossingError, RangeError
from .model import PhasePoint, fixed_points
from .ode import IntegratorOptions, Orbit, classify_orbit, integrate
from .phase import find_limit_cycle, manifold_options, trace_manifold

__all__ = [
    "MfgEquilibrium",
    "ValueSamples",
    "ControlLaw",
    "enumerate_equilibria",
    "value_function",
    "hjb_residual",
    "consistency_check",
    "control_rate",
    "stationary_values",
    "shoot_refine",
]

ATTRACTORS = ("consensus_plus", "consensus_minus", "periodic", "origin")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class ValueSamples:
    t: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def gradient(self):
        """``V(-1, t) - V(+1, t)``, which must reproduce ``z(t)``."""
        return self.v_minus - self.v_plus

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "v_plus", "v_minus"])
        for row in zip(self.t, self.v_plus, self.v_minus):
            w.writerow([format(float(x), ".17g") for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class MfgEquilibrium:
    m0: float
    z0: float
    orbit: Orbit
    attractor: str
    value_samples: Optional[ValueSamples] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return self.orbit.duration

    def with_values(self, samples):
        return replace(self, value_samples=samples)

    def to_dict(self, orbit_csv_path=None, value_csv_path=None, residuals=None):
        return {
            "m0": self.m0,
            "z0": self.z0,
            "attractor": self.attractor,
            "orbit_csv_path": orbit_csv_path,
            "value_csv_path": value_csv_path,
            "residuals": residuals or {},
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(**kw))


class ControlLaw:
    """Optimal feedback ``u*(sigma, t) = mu(sigma, m(t)) [grad V(sigma, t)]^+``.

    ``grad V(+1, t) = z(t)`` and ``grad V(-1, t) = -z(t)``.  Beyond the end
    of the orbit the state is held at the terminal point for consensus
    equilibria and continued periodically for periodic ones.
    """

    def __init__(self, params, eq_or_orbit, attractor=None, period=None):
        self.params = params
        if isinstance(eq_or_orbit, MfgEquilibrium):
            self.equilibrium = eq_or_orbit
            self.orbit = eq_or_orbit.orbit
            attractor = eq_or_orbit.attractor
            period = eq_or_orbit.diagnostics.get("period")
        else:
            self.equilibrium = None
            self.orbit = eq_or_orbit
        self.attractor = attractor
        self.period = period
        self.t0, self.t1 = self.orbit.span

    def state(self, t, extend=True):
        """``(z(t), m(t))`` as arrays of shape ``t.shape + (2,)``."""
        tt = np.asarray(t, dtype=float)
        if np.any(tt < self.t0 - 1e-12):
            raise RangeError(f"t before orbit start {self.t0}")
        if np.any(tt > self.t1 + 1e-9 * max(1.0, self.t1)):
            if not extend or self.attractor not in ATTRACTORS:
                raise RangeError(f"t beyond orbit end {self.t1}")
            if self.attractor == "periodic" and self.period:
                base = self.t1 - self.period
                tt = np.where(tt > self.t1, base + np.mod(tt - base, self.period), tt)
            else:
                tt = np.minimum(tt, self.t1)
        return self.orbit(np.clip(tt, self.t0, self.t1))

    def rate(self, sigma, t, extend=True):
        zm = self.state(t, extend)
        z, m = zm[..., 0], zm[..., 1]
        mob = self.params.mobility
        mu = np.asarray(sigma * mob.a(m) + mob.b(m) if mob.kind != "constant" else mob.mu,
                        dtype=float)
        grad = z if sigma > 0 else -z
        return mu * np.maximum(grad, 0.0)

    def rate_on_grid(self, sigma, t):
        """Vectorised rates for a numpy time grid (generic mobility safe)."""
        zm = self.state(t)
        z, m = zm[:, 0], zm[:, 1]
        mu = _mobility_vec(self.params.mobility, sigma, m)
        grad = z if sigma > 0 else -z
        return mu * np.maximum(grad, 0.0)


def _mobility_vec(mob, sigma, m):
    if mob.kind == "constant":
        return np.full_like(m, mob.mu)
    if mob.kind == "crowding":
        return mob.mu * (1.0 + mob.epsilon * sigma * m)
    return np.array([sigma * mob.a(x) + mob.b(x) for x in m])


def control_rate(law, sigma, t):
    """Flip rate of an agent in state ``sigma`` at time ``t``.

    Raises
    ------
    RangeError
        If ``t`` lies outside the span of the law's orbit.
    """
    if sigma not in (-1, 1):
        raise ValueError("sigma must be +1 or -1")
    return float(law.rate(sigma, t, extend=False))


def stationary_values(params, point):
    """Stationary HJB values ``(V(+1), V(-1))`` at a fixed point.

    ``lam V(sigma) = mu(sigma, m)/2 ([grad V(sigma)]^+)^2 + sigma m`` with
    ``grad V(+1) = z`` and ``grad V(-1) = -z``.
    """
    z, m = point
    mob, lam = params.mobility, params.lam
    vp = (0.5 * mob(1, m) * max(z, 0.0) ** 2 + m) / lam
    vm = (0.5 * mob(-1, m) * max(-z, 0.0) ** 2 - m) / lam
    return vp, vm


# -- enumeration -------------------------------------------------------------------


def _constant_orbit(point, duration):
    coef = np.zeros((1, 5, 2))
    coef[0, 0] = point
    return Orbit("forward", [0.0, duration], [point, point], coef, [], "fixed_point")


def _linear_tail(saddle_pt, seed, rate, t_start, target=1e-10, width=None):
    """Forward orbit of the linear approach ``S + (seed - S) exp(rate (t - t_start))``."""
    S = np.array(saddle_pt, dtype=float)
    off = np.array(seed, dtype=float) - S
    dist = float(np.hypot(*off))
    if dist <= target:
        return None
    dur = math.log(dist / target) / abs(rate)
    width = width or 0.1 / abs(rate)
    n = max(1, int(math.ceil(dur / width)))
    edges = t_start + np.linspace(0.0, dur, n + 1)
    th = np.linspace(0.0, 1.0, 5)
    coef = np.empty((n, 5, 2))
    for k in range(n):
        tk = edges[k] + th * (edges[k + 1] - edges[k])
        vals = S + off * np.exp(rate * (tk - t_start))[:, None]
        for d in range(2):
            coef[k, :, d] = np.polynomial.polynomial.polyfit(th, vals[:, d], 4)
    ys = S + off * np.exp(rate * (edges - t_start))[:, None]
    ys[0] = seed
    return Orbit("forward", edges, ys, coef, [], "fixed_point")


def _consensus_orbit(manifold, t_cross, target=1e-10):
    piece = manifold.orbit.slice(0.0, t_cross).reversed_as_forward(0.0)
    sd = manifold.saddle
    rate = float(np.min(np.real(sd.eigenvalues)))
    tail = _linear_tail(sd.location, piece.end, rate, piece.t[-1], target)
    if tail is None:
        return piece
    tail.y[0] = piece.y[-1]
    return Orbit.concatenate([piece, tail])


def _exit_side(params, p0, opts):
    o = integrate(params, p0, opts, "forward", record_m_zero=False)
    if o.status != "box_exit":
        return 0
    return 1 if o.end.z > 0 else -1


def shoot_refine(params, z0, m0, window=1e-3, iters=60, opts=None):
    """Locate the separatrix on ``m = m0`` near ``z0`` by exit-side bisection.

    Forward orbits on the two sides of a stable manifold leave the box with
    opposite signs of ``z``.  Returns the refined ``z`` or ``None`` when the
    window does not straddle such a flip.
    """
    opts = opts or IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13, t_max=2e3)
    lo, hi = z0 - window, z0 + window
    slo = _exit_side(params, (lo, m0), opts)
    shi = _exit_side(params, (hi, m0), opts)
    if slo == 0 or shi == 0 or slo == shi:
        return None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        s = _exit_side(params, (mid, m0), opts)
        if s == 0:
            return None
        if s == slo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def enumerate_equilibria(params, m0, opts=None, *, shoot=True, n_periods=4, cycle_search=None):
    """All bounded solutions with ``m(0) = m0`` that the tracing resolves.

    Parameters
    ----------
    m0 : float
        Initial mean opinion in ``[-1, 1]``.
    shoot : bool
        Cross-check every manifold crossing by exit-side bisection; the gap
        is stored in ``diagnostics["shooting_gap"]``.
    n_periods : int
        Length of periodic orbits in periods.
    cycle_search : CycleSearch, optional
        Reuse a previous section scan (crowding model only).

    Returns
    -------
    list of MfgEquilibrium
        Possibly empty; the count is discovered, not assumed.
    """
    if not -1.0 <= m0 <= 1.0:
        raise ValueError(f"m0 must lie in [-1, 1], got {m0!r}")
    fps = {fp.name: fp for fp in fixed_points(params)}
    out = []
    if abs(m0) == 1.0:
        sd = fps["Q"] if m0 < 0 else fps["P"]
        orbit = _constant_orbit(sd.location, 50.0)
        att = "consensus_minus" if m0 < 0 else "consensus_plus"
        return [MfgEquilibrium(m0, sd.location.z, orbit, att,
                               diagnostics={"saddle": sd.name, "stationary": True})]

    opts = opts or manifold_options()
    for name, att in (("Q", "consensus_minus"), ("P", "consensus_plus")):
        man = trace_manifold(params, fps[name], "stable", opts=opts)
        for t_c, pt in man.crossings_with_m(m0):
            orbit = _consensus_orbit(man, t_c)
            diag = {"saddle": name, "manifold_time": -t_c, "delta": man.delta,
                    "horizon": orbit.duration}
            if shoot:
                zs = shoot_refine(params, pt.z, m0)
                diag["shooting_z0"] = zs
                diag["shooting_gap"] = None if zs is None else abs(zs - pt.z)
            out.append(MfgEquilibrium(m0, pt.z, orbit, att, diagnostics=diag))

    if params.kind == "crowding":
        search = cycle_search if cycle_search is not None else find_limit_cycle(params)
        if search.found:
            cyc = search.cycle
            hits = cyc.orbit.level_crossings(1, m0)
            seen = []
            for t_h, pt in hits:
                if any(abs(pt.z - s) < 1e-9 for s in seen):
                    continue
                seen.append(pt.z)
                T = n_periods * cyc.period
                orbit = integrate(params, pt, IntegratorOptions(rel_tol=1e-12, abs_tol=1e-14,
                                                                t_max=T, max_step=0.05))
                diag = {"period": cyc.period, "cycle_anchor": cyc.anchor.m, "phase": t_h,
                        "horizon": T}
                out.append(MfgEquilibrium(m0, pt.z, orbit, "periodic", diagnostics=diag))
                if len(seen) == 2:
                    break

    if m0 == 0.0:
        orbit = _constant_orbit((0.0, 0.0), 50.0)
        out.append(MfgEquilibrium(0.0, 0.0, orbit, "origin"))
    return out


# -- value function ----------------------------------------------------------------


def _grid(t0, t1, h_max, align=None):
    span = t1 - t0
    if align:
        per_cell = max(1, int(math.ceil(align / h_max)))
        h = align / per_cell
        n = int(round(span / h))
    else:
        n = max(2, int(math.ceil(span / h_max)))
    return np.linspace(t0, t0 + (n * (span / n) if not align else n * h), n + 1)


def _source(params, law, t):
    """``g_sigma(t) = mu(sigma, m)/2 ([grad V]^+)^2 + sigma m`` from the orbit."""
    zm = law.state(t)
    z, m = zm[:, 0], zm[:, 1]
    mob = params.mobility
    gp = 0.5 * _mobility_vec(mob, 1, m) * np.maximum(z, 0.0) ** 2 + m
    gm = 0.5 * _mobility_vec(mob, -1, m) * np.maximum(-z, 0.0) ** 2 - m
    return gp, gm


def _cell_integrals(params, law, t):
    """``int_{t_k}^{t_k+1} exp(-lam (s - t_k)) g(s) ds`` by 5-point Gauss-Legendre."""
    lam = params.lam
    h = np.diff(t)
    nodes = t[:-1, None] + 0.5 * h[:, None] * (_GL_X[None, :] + 1.0)
    gp, gm = _source(params, law, nodes.ravel())
    wts = 0.5 * h[:, None] * _GL_W[None, :] * np.exp(-lam * (nodes - t[:-1, None]))
    return (wts * gp.reshape(nodes.shape)).sum(1), (wts * gm.reshape(nodes.shape)).sum(1)


def _backward(decay, integrals, terminal):
    # V_k = decay_k V_{k+1} + I_k, run from the end
    if np.allclose(decay, decay[0]):
        a = decay[0]
        rev = integrals[::-1]
        zi = np.array([a * terminal])
        vals, _ = lfilter([1.0], [1.0, -a], rev, zi=zi)
        return np.concatenate([vals[::-1], [terminal]])
    out = np.empty(len(integrals) + 1)
    out[-1] = terminal
    for k in range(len(integrals) - 1, -1, -1):
        out[k] = decay[k] * out[k + 1] + integrals[k]
    return out


def value_function(params, eq, horizon=None, h_max=1e-3, max_iter=200):
    """Reconstruct ``V(+1, t)`` and ``V(-1, t)`` on ``[0, horizon]``.

    Solves ``dV/dt = lam V - mu(sigma, m)/2 ([grad V]^+)^2 - sigma m``
    backward from the horizon with the gradient taken from the orbit's
    ``z(t)``; cell integrals use 5-point Gauss-Legendre quadrature.
    Terminal data: stationary values at the saddle for consensus
    equilibria, the periodic solution of the one-period backward map for
    periodic ones.
    """
    lam = params.lam
    law = ControlLaw(params, eq)
    if eq.attractor == "origin":
        t = _grid(0.0, horizon or eq.horizon, h_max)
        zeros = np.zeros_like(t)
        return ValueSamples(t, zeros, zeros.copy(), {"terminal": "origin"})
    t_end = horizon if horizon is not None else eq.orbit.span[1]
    meta = {}
    if eq.attractor == "periodic":
        period = eq.diagnostics["period"]
        t = _grid(eq.orbit.span[0], t_end, h_max, align=period)
        ip, im = _cell_integrals(params, law, t)
        h = np.diff(t)
        per_cells = int(round(period / h[0]))
        decay_p = math.exp(-lam * period)
        if not decay_p < 1.0:
            raise RuntimeError("one-period backward map is not a contraction")
        decay = np.exp(-lam * h)
        # one-period backward map on the last period, iterated to its fixed point
        vt = np.array(stationary_values(params, law.state(np.array([t[-1]]))[0]))
        sl = slice(len(h) - per_cells, len(h))
        for it in range(max_iter):
            vp0 = _backward(decay[sl], ip[sl], vt[0])[0]
            vm0 = _backward(decay[sl], im[sl], vt[1])[0]
            new = np.array([vp0, vm0])
            delta = float(np.max(np.abs(new - vt)))
            vt = new
            if delta < 1e-14 * max(1.0, float(np.max(np.abs(vt)))):
                break
        meta.update(contraction=decay_p, iterations=it + 1, terminal="periodic")
    else:
        t = _grid(eq.orbit.span[0], t_end, h_max)
        ip, im = _cell_integrals(params, law, t)
        decay = np.exp(-lam * np.diff(t))
        end = law.state(np.array([t[-1]]))[0]
        fps = {fp.name: fp for fp in fixed_points(params)}
        target = fps.get(eq.diagnostics.get("saddle", ""),
                         min(fps.values(), key=lambda f: math.hypot(*(np.array(f.location) - end))))
        vt = np.array(stationary_values(params, target.location))
        dist = float(math.hypot(*(np.array(target.location) - end)))
        meta.update(terminal="stationary", terminal_distance=dist,
                    tail_bound=math.exp(-lam * t[-1]) * float(np.max(np.abs(vt))))
    vp = _backward(decay, ip, vt[0])
    vm = _backward(decay, im, vt[1])
    return ValueSamples(t, vp, vm, meta)


def hjb_residual(params, eq, samples=None):
    """Maximum of ``|-lam V + mu/2 ([grad V]^+)^2 + dV/dt + sigma m|``.

    ``dV/dt`` is a central difference on the sample grid and ``grad V`` is
    taken from the samples themselves.
    """
    s = samples if samples is not None else eq.value_samples
    if s is None:
        s = value_function(params, eq)
    if eq.attractor == "origin":
        return float(np.max(np.abs(np.concatenate([s.v_plus, s.v_minus]))) * params.lam)
    t = s.t
    dt = t[2:] - t[:-2]
    m = ControlLaw(params, eq).state(t[1:-1])[:, 1]
    mob = params.mobility
    worst = 0.0
    for sigma, v, vo in ((1, s.v_plus, s.v_minus), (-1, s.v_minus, s.v_plus)):
        dv = (v[2:] - v[:-2]) / dt
        grad = vo[1:-1] - v[1:-1]
        res = (-params.lam * v[1:-1] + 0.5 * _mobility_vec(mob, sigma, m)
               * np.maximum(grad, 0.0) ** 2 + dv + sigma * m)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def consistency_check(params, eq, law=None, h_max=1e-3, return_path=False):
    """``sup_t |2 p(t) - 1 - m(t)|`` for the representative agent.

    ``p(t) = P(sigma(t) = +1)`` solves ``dp/dt = -p u(+1, t) + (1 - p) u(-1, t)``
    with the rates of the control law; the ODE is integrated by classical
    RK4 on a grid that contains every kink time of ``z``.
    """
    law = law or ControlLaw(params, eq)
    t0, t1 = eq.orbit.span
    kinks = [t for t, _ in eq.orbit.level_crossings(0, 0.0) if t0 < t < t1]
    edges = [t0] + sorted(kinks) + [t1]
    ts, ps = [t0], [(1.0 + eq.m0) / 2.0]
    p = ps[0]

    def f(tt, pp):
        up = law.rate(1, tt)
        um = law.rate(-1, tt)
        return -pp * up + (1.0 - pp) * um

    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, int(math.ceil((b - a) / h_max)))
        grid = np.linspace(a, b, n + 1)
        h = grid[1] - grid[0]
        # stage times of all RK4 steps in one vectorised rate evaluation
        tl = grid[:-1]
        up = {c: np.asarray(law.rate(1, tl + c * h)) for c in (0.0, 0.5, 1.0)}
        um = {c: np.asarray(law.rate(-1, tl + c * h)) for c in (0.0, 0.5, 1.0)}
        for k in range(n):
            def g(c, pp):
                return -pp * up[c][k] + (1.0 - pp) * um[c][k]
            k1 = g(0.0, p)
            k2 = g(0.5, p + 0.5 * h * k1)
            k3 = g(0.5, p + 0.5 * h * k2)
            k4 = g(1.0, p + h * k3)
            p = p + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            ts.append(grid[k + 1])
            ps.append(p)
    ts = np.array(ts)
    ps = np.array(ps)
    m = eq.orbit(ts)[:, 1]
    dev = float(np.max(np.abs(2.0 * ps - 1.0 - m)))
    if return_path:
        return dev, ts, ps
    return dev


def classify_equilibrium(params, eq, opts=None):
    """Re-derive the attractor of an equilibrium from its starting point."""
    if eq.attractor == "origin":
        return "origin"
    att = classify_orbit(params, eq.orbit.start, opts)
    if att.kind == "fixed_point":
        return {"Q": "consensus_minus", "P": "consensus_plus", "O": "origin"}[att.target]
    if att.kind == "cycle":
        return "periodic"
    return att.kind


__all__ += ["classify_equilibrium", "ATTRACTORS", "NoCrossingError"]
