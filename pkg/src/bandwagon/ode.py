"""Adaptive Dormand-Prince 5(4) integration of the ``(z, m)`` field.

The field has a kink on ``z = 0``.  :func:`integrate` therefore runs on one
smooth branch at a time: as soon as an accepted step crosses ``z = 0`` the
crossing time is located on the dense output, the step is redone up to the
crossing and the integration restarts on the other branch.  This keeps the
fifth order of the pair across the kink.

Dense output uses the free quartic interpolant of the pair, stored per step
in the power basis of the local coordinate ``theta in [0, 1]``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import RangeError, StiffnessError
from .model import PhasePoint, field_norm, fixed_points

__all__ = [
    "IntegratorOptions",
    "EventKind",
    "Event",
    "Orbit",
    "Attractor",
    "integrate",
    "classify_orbit",
]

# Dormand & Prince (1980), coefficients as in Hairer, Norsett & Wanner, vol. I.
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
D1, D3, D4, D5, D6, D7 = (
    -12715105075 / 11282082432,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)

_PROBES = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = 0.5
    t_max: float = 500.0
    box: tuple = (-50.0, 50.0, -1.05, 1.05)
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0 or self.t_max <= 0:
            raise ValueError("max_step and t_max must be positive")
        zlo, zhi, mlo, mhi = self.box
        if not (zlo < zhi and mlo < mhi):
            raise ValueError(f"degenerate box {self.box!r}")

    @property
    def box_diagonal(self):
        zlo, zhi, mlo, mhi = self.box
        return math.hypot(zhi - zlo, mhi - mlo)

    def replace(self, **kw):
        d = dict(
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            max_step=self.max_step,
            t_max=self.t_max,
            box=self.box,
            max_steps=self.max_steps,
        )
        d.update(kw)
        return IntegratorOptions(**d)


class EventKind(str, enum.Enum):
    # crossing of the line m = 0 (the z axis)
    Z_AXIS = "z_axis_crossing"
    # crossing of the line z = 0 (the m axis); the field's kink
    M_AXIS = "m_axis_crossing"
    BOX_EXIT = "box_exit"
    NEAR_POINT = "near_point"


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    point: PhasePoint
    label: Optional[str] = None


def _poly_eval(coef, theta):
    # coef: (..., 5, 2), theta broadcastable against the leading axes
    out = coef[..., 4, :]
    for k in (3, 2, 1, 0):
        out = out * theta[..., None] + coef[..., k, :]
    return out


def _reparam(coef, a, b):
    """Coefficients of ``y(a + (b - a) u)`` in ``u`` for a (5, 2) block."""
    out = np.zeros_like(coef)
    lin = np.array([a, b - a])
    for d in range(coef.shape[-1]):
        p = np.polynomial.Polynomial(coef[:, d])
        q = p(np.polynomial.Polynomial(lin))
        c = q.coef
        out[: len(c), d] = c
    return out


class Orbit:
    """A sampled trajectory with piecewise quartic dense output.

    Attributes
    ----------
    direction : str
        ``"forward"`` (increasing ``t``) or ``"backward"`` (decreasing ``t``).
    t : ndarray, shape (n,)
    y : ndarray, shape (n, 2)
        Columns are ``z`` and ``m``.
    coef : ndarray, shape (n - 1, 5, 2) or None
        Interpolant of step ``k`` in ``theta = (t - t[k]) / (t[k+1] - t[k])``.
    events : list of Event
    status : str
        Why the integration stopped.
    """

    def __init__(self, direction, t, y, coef=None, events=(), status="", meta=None):
        self.direction = direction
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float).reshape(-1, 2)
        self.coef = None if coef is None else np.asarray(coef, dtype=float)
        self.events = list(events)
        self.status = status
        self.meta = dict(meta or {})
        self._sgn = 1.0 if direction == "forward" else -1.0

    def __len__(self):
        return len(self.t)

    def __repr__(self):
        return (
            f"Orbit({self.direction}, n={len(self)}, t=[{self.t[0]:.6g}, {self.t[-1]:.6g}], "
            f"status={self.status!r})"
        )

    @property
    def z(self):
        return self.y[:, 0]

    @property
    def m(self):
        return self.y[:, 1]

    @property
    def start(self):
        return PhasePoint(*self.y[0])

    @property
    def end(self):
        return PhasePoint(*self.y[-1])

    @property
    def span(self):
        lo, hi = self.t[0], self.t[-1]
        return (min(lo, hi), max(lo, hi))

    @property
    def duration(self):
        return abs(self.t[-1] - self.t[0])

    def events_of(self, kind):
        return [e for e in self.events if e.kind == kind]

    def level_crossings(self, dim, level):
        """All times where coordinate ``dim`` (0 = z, 1 = m) crosses ``level``.

        Sign changes are detected on the dense output at the nodes and three
        interior probes per step, then bisected to machine precision.
        Returns a list of ``(t, PhasePoint)`` in orbit order.
        """
        if self.coef is None or len(self.coef) == 0:
            return []
        th = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        vals = _poly_eval(self.coef[:, None, :, :], np.broadcast_to(th, (len(self.coef), 5)))
        f = vals[..., dim] - level
        out = []
        for k in np.nonzero(np.any(np.sign(f[:, :-1]) * np.sign(f[:, 1:]) < 0, axis=1)
                            | np.any(f[:, 1:-1] == 0, axis=1))[0]:
            c = self.coef[k]
            for j in range(4):
                a, b = f[k, j], f[k, j + 1]
                if a == 0.0 and j > 0:
                    theta = th[j]
                elif a * b < 0:
                    theta = _bisect_theta(c, dim, level, th[j], th[j + 1], 1e-15)
                else:
                    continue
                tk = self.t[k] + theta * (self.t[k + 1] - self.t[k])
                pt = _poly_eval(c, np.array(theta))
                out.append((float(tk), PhasePoint(float(pt[0]), float(pt[1]))))
        # crossings snapped exactly onto a step boundary
        for k in np.nonzero(self.y[1:-1, dim] == level)[0] + 1:
            out.append((float(self.t[k]), PhasePoint(*map(float, self.y[k]))))
        out.sort(key=lambda item: self._sgn * item[0])
        return out

    def __call__(self, t):
        """Dense evaluation; returns shape (2,) for scalar ``t`` else (k, 2)."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.span
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(tt < lo - slack) or np.any(tt > hi + slack):
            raise RangeError(f"time outside orbit span [{lo}, {hi}]")
        if len(self.t) == 1:
            out = np.repeat(self.y[:1], len(tt), axis=0)
            return out[0] if scalar else out
        tau = self._sgn * self.t
        q = self._sgn * tt
        k = np.clip(np.searchsorted(tau, q, side="right") - 1, 0, len(tau) - 2)
        h = tau[k + 1] - tau[k]
        theta = np.clip((q - tau[k]) / h, 0.0, 1.0)
        if self.coef is None:
            out = self.y[k] + theta[:, None] * (self.y[k + 1] - self.y[k])
        else:
            out = _poly_eval(self.coef[k], theta)
        return out[0] if scalar else out

    # -- transformations ---------------------------------------------------

    def reversed_as_forward(self, t0=0.0):
        """Reparametrise a backward orbit as a forward one starting at its end.

        The backward orbit runs in physical time from ``t[0]`` down to
        ``t[-1]``; the result runs from its last point to its first, with
        times shifted to start at ``t0``.
        """
        if self.direction != "backward":
            raise ValueError("only backward orbits can be reversed")
        t_new = t0 + (self.t[::-1] - self.t[-1])
        y_new = self.y[::-1].copy()
        coef_new = None
        if self.coef is not None:
            coef_new = np.stack([_reparam(c, 1.0, 0.0) for c in self.coef[::-1]])
        return Orbit("forward", t_new, y_new, coef_new, [], self.status, self.meta)

    def slice(self, t_a, t_b):
        """Sub-orbit between two times given in the orbit's own direction."""
        tau = self._sgn * self.t
        qa, qb = self._sgn * t_a, self._sgn * t_b
        if qa > qb:
            raise ValueError("t_a must precede t_b along the orbit")
        ka = int(np.clip(np.searchsorted(tau, qa, side="right") - 1, 0, len(tau) - 2))
        kb = int(np.clip(np.searchsorted(tau, qb, side="left") - 1, 0, len(tau) - 2))
        ts, ys, cs = [t_a], [self(t_a)], []
        for k in range(ka, kb + 1):
            h = tau[k + 1] - tau[k]
            a = max(0.0, (qa - tau[k]) / h) if k == ka else 0.0
            b = min(1.0, (qb - tau[k]) / h) if k == kb else 1.0
            if b - a <= 1e-15:
                continue
            cs.append(_reparam(self.coef[k], a, b))
            tnext = self._sgn * (tau[k] + b * h)
            ts.append(tnext if k < kb else t_b)
            ys.append(_poly_eval(cs[-1], np.array(1.0)) if k < kb else self(t_b))
        ev = [e for e in self.events if qa <= self._sgn * e.t <= qb]
        return Orbit(self.direction, ts, ys, np.array(cs) if cs else None, ev, self.status,
                     self.meta)

    def shifted(self, dt):
        return Orbit(self.direction, self.t + dt, self.y, self.coef,
                     [Event(e.t + dt, e.kind, e.point, e.label) for e in self.events],
                     self.status, self.meta)

    @staticmethod
    def concatenate(orbits):
        """Join forward orbits whose end and start times coincide."""
        first = orbits[0]
        t, y, c, ev = [first.t], [first.y], [first.coef], list(first.events)
        for o in orbits[1:]:
            if abs(o.t[0] - t[-1][-1]) > 1e-9 * max(1.0, abs(o.t[0])):
                raise ValueError("orbits are not contiguous in time")
            t.append(o.t[1:])
            y.append(o.y[1:])
            c.append(o.coef)
            ev.extend(o.events)
        return Orbit(first.direction, np.concatenate(t), np.concatenate(y),
                     np.concatenate(c), ev, orbits[-1].status, first.meta)

    # -- serialisation -----------------------------------------------------

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "z", "m"])
        for ti, (zi, mi) in zip(self.t, self.y):
            w.writerow([_fmt(ti), _fmt(zi), _fmt(mi)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, direction=None):
        """Read samples written by :meth:`to_csv` (no dense output)."""
        if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = source
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["t", "z", "m"]:
            raise ValueError(f"unexpected CSV header {rows[0]!r}")
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        if direction is None:
            direction = "backward" if len(data) > 1 and data[1, 0] < data[0, 0] else "forward"
        return cls(direction, data[:, 0], data[:, 1:], None, [], "loaded")

    def to_dict(self, dense=True):
        d = {
            "direction": self.direction,
            "status": self.status,
            "t": self.t.tolist(),
            "z": self.y[:, 0].tolist(),
            "m": self.y[:, 1].tolist(),
            "events": [
                {"t": e.t, "kind": e.kind.value, "z": e.point[0], "m": e.point[1],
                 "label": e.label}
                for e in self.events
            ],
        }
        if dense and self.coef is not None:
            d["coef"] = self.coef.tolist()
        return d

    def to_json(self, path=None, dense=True):
        text = json.dumps(self.to_dict(dense=dense))
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        ev = [Event(e["t"], EventKind(e["kind"]), PhasePoint(e["z"], e["m"]), e.get("label"))
              for e in d.get("events", [])]
        y = np.column_stack([d["z"], d["m"]])
        coef = np.array(d["coef"]) if "coef" in d else None
        return cls(d["direction"], d["t"], y, coef, ev, d.get("status", ""))

    @classmethod
    def from_json(cls, source):
        if isinstance(source, str) and source.lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _fmt(x):
    return format(float(x), ".17g")


# -- the stepper ---------------------------------------------------------------


class _Stepper:
    """One smooth branch of the (possibly time-reversed) field."""

    def __init__(self, params, branch, sgn):
        f = params.rhs(branch)
        if sgn > 0:
            self.f = f
        else:
            def g(z, m):
                a, b = f(z, m)
                return -a, -b

            self.f = g

    def step(self, z, m, k1z, k1m, h):
        f = self.f
        k2z, k2m = f(z + h * A21 * k1z, m + h * A21 * k1m)
        k3z, k3m = f(z + h * (A31 * k1z + A32 * k2z), m + h * (A31 * k1m + A32 * k2m))
        k4z, k4m = f(
            z + h * (A41 * k1z + A42 * k2z + A43 * k3z),
            m + h * (A41 * k1m + A42 * k2m + A43 * k3m),
        )
        k5z, k5m = f(
            z + h * (A51 * k1z + A52 * k2z + A53 * k3z + A54 * k4z),
            m + h * (A51 * k1m + A52 * k2m + A53 * k3m + A54 * k4m),
        )
        k6z, k6m = f(
            z + h * (A61 * k1z + A62 * k2z + A63 * k3z + A64 * k4z + A65 * k5z),
            m + h * (A61 * k1m + A62 * k2m + A63 * k3m + A64 * k4m + A65 * k5m),
        )
        zn = z + h * (B1 * k1z + B3 * k3z + B4 * k4z + B5 * k5z + B6 * k6z)
        mn = m + h * (B1 * k1m + B3 * k3m + B4 * k4m + B5 * k5m + B6 * k6m)
        k7z, k7m = f(zn, mn)
        ez = h * (E1 * k1z + E3 * k3z + E4 * k4z + E5 * k5z + E6 * k6z + E7 * k7z)
        em = h * (E1 * k1m + E3 * k3m + E4 * k4m + E5 * k5m + E6 * k6m + E7 * k7m)
        ks = ((k1z, k3z, k4z, k5z, k6z, k7z), (k1m, k3m, k4m, k5m, k6m, k7m))
        return zn, mn, k7z, k7m, ez, em, ks

    @staticmethod
    def dense(y0, y1, ks, h):
        """Power-basis coefficients (5, 2) of the quartic interpolant."""
        c = np.empty((5, 2))
        for d in range(2):
            k1, k3, k4, k5, k6, k7 = ks[d]
            r1 = y0[d]
            r2 = y1[d] - y0[d]
            r3 = h * k1 - r2
            r4 = r2 - h * k7 - r3
            r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
            c[0, d] = r1
            c[1, d] = r2 + r3
            c[2, d] = -r3 + r4 + r5
            c[3, d] = -r4 - 2.0 * r5
            c[4, d] = r5
        return c


def _cval(c, theta, d):
    return (((c[4, d] * theta + c[3, d]) * theta + c[2, d]) * theta + c[1, d]) * theta + c[0, d]


def _bisect_theta(c, d, target, lo, hi, tol):
    flo = _cval(c, lo, d) - target
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = _cval(c, mid, d) - target
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _first_sign_change(c, d, target, sign_start):
    """Smallest probe theta at which ``sign * (y_d - target)`` turns negative."""
    prev = 0.0
    for th in _PROBES:
        if sign_start * (_cval(c, th, d) - target) < 0.0:
            return prev, th
        prev = th
    return None


def integrate(params, p0, opts=None, direction="forward", *, stop_near=(), fixed=None,
              terminal: Optional[Callable[[Event, list], bool]] = None, record_m_zero=True,
              max_arclength=None):
    """Integrate the field from ``p0``.

    Parameters
    ----------
    params : ModelParams
    p0 : (z, m)
    opts : IntegratorOptions
    direction : {"forward", "backward"}
        Backward integration runs the same field in decreasing time.
    stop_near : sequence of (label, point, radius)
        Terminate as soon as an accepted step lands within ``radius``.
    fixed : sequence of FixedPointInfo, optional
        Fixed points used for the arrival criterion (field norm below 1e-10
        and distance below 1e-6).  Defaults to :func:`fixed_points`.
    terminal : callable, optional
        ``terminal(event, events_so_far)`` returning True stops integration
        right after the event.
    max_arclength : float, optional
        Stop once the accumulated chord length exceeds this value.

    Returns
    -------
    Orbit

    Raises
    ------
    StiffnessError
        On step size underflow.
    """
    opts = opts or IntegratorOptions()
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    sgn = 1.0 if direction == "forward" else -1.0
    z, m = float(p0[0]), float(p0[1])
    if not (math.isfinite(z) and math.isfinite(m)):
        raise ValueError(f"non-finite initial point {p0!r}")
    if fixed is None:
        fixed = fixed_points(params)
    zlo, zhi, mlo, mhi = opts.box
    rtol, atol = opts.rel_tol, opts.abs_tol

    events: list[Event] = []
    ts, ys, cs = [0.0], [(z, m)], []

    def finish(status):
        t_arr = sgn * np.array(ts)
        coef = np.array(cs) if cs else None
        return Orbit(direction, t_arr, np.array(ys), coef, events, status)

    if field_norm(params, (z, m)) == 0.0:
        # exact equilibrium: constant orbit over the whole horizon
        ts.append(opts.t_max)
        ys.append((z, m))
        c = np.zeros((1, 5, 2))
        c[0, 0] = (z, m)
        cs.append(c[0])
        label = next((fp.name for fp in fixed
                      if math.hypot(fp.location.z - z, fp.location.m - m) < 1e-12), None)
        events.append(Event(0.0, EventKind.NEAR_POINT, PhasePoint(z, m), label))
        return finish("fixed_point")

    def new_branch(z, m):
        if z != 0.0:
            return 1.0 if z > 0 else -1.0
        dz = params.rhs(1)(0.0, m)[0] * sgn
        return 1.0 if dz >= 0 else -1.0

    s = new_branch(z, m)
    stepper = _Stepper(params, s, sgn)
    k1z, k1m = stepper.f(z, m)
    # initial step: Hairer-style heuristic on the scaled norms
    sc0 = atol + rtol * max(abs(z), abs(m))
    d0 = math.hypot(z, m) / sc0
    d1 = math.hypot(k1z, k1m) / sc0
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, opts.max_step, opts.t_max)
    tau = 0.0
    nsteps = 0
    facmax = 10.0
    arclength = 0.0

    while True:
        nsteps += 1
        if nsteps > opts.max_steps:
            return finish("max_steps")
        if tau + h > opts.t_max:
            h = opts.t_max - tau
        zn, mn, k7z, k7m, ez, em, ks = stepper.step(z, m, k1z, k1m, h)
        scz = atol + rtol * max(abs(z), abs(zn))
        scm = atol + rtol * max(abs(m), abs(mn))
        err = math.sqrt(0.5 * ((ez / scz) ** 2 + (em / scm) ** 2))
        if not math.isfinite(err):
            err = 1e10
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            facmax = 1.0
            if h < 16 * 2.2e-16 * max(1.0, abs(tau)):
                raise StiffnessError(
                    f"step size underflow at t={sgn * tau!r}", t=sgn * tau, state=PhasePoint(z, m)
                )
            continue

        hnext = h * min(facmax, max(0.2, 0.9 * (err ** -0.2 if err > 0 else 10.0)))
        hnext = min(hnext, opts.max_step)
        facmax = 10.0
        coef = _Stepper.dense((z, m), (zn, mn), ks, h)
        stop_status = None
        crossed = False

        # kink crossing: the branch sign of z flips inside the step
        br = _first_sign_change(coef, 0, 0.0, s)
        if br is not None:
            th = _bisect_theta(coef, 0, 0.0, br[0], br[1], 1e-13)
            hc = th * h
            for _ in range(4):
                zc, mc, _, _, _, _, ksc = stepper.step(z, m, k1z, k1m, hc)
                gz = stepper.f(zc, mc)[0]
                if gz == 0.0:
                    break
                dh = -zc / gz
                hc += dh
                if abs(dh) < 1e-15 * max(1.0, hc):
                    break
            zc, mc, k7z, k7m, _, _, ks = stepper.step(z, m, k1z, k1m, hc)
            h, zn, mn = hc, 0.0, mc
            coef = _Stepper.dense((z, m), (zn, mn), ks, h)
            crossed = True

        # box exit
        if not (zlo <= zn <= zhi and mlo <= mn <= mhi):
            th_exit, d_exit, bound = 1.0, None, None
            for d, lo_b, hi_b in ((0, zlo, zhi), (1, mlo, mhi)):
                for bnd, sign0 in ((lo_b, 1.0), (hi_b, -1.0)):
                    y0d = (z, m)[d]
                    ynd = (zn, mn)[d]
                    if sign0 * (ynd - bnd) < 0.0:
                        thb = _bisect_theta(coef, d, bnd, 0.0, 1.0, 1e-14)
                        if sign0 * (y0d - bnd) < 0.0:
                            thb = 0.0
                        if thb <= th_exit:
                            th_exit, d_exit, bound = thb, d, bnd
            pt = _poly_eval(coef, np.array(th_exit))
            pt = [float(pt[0]), float(pt[1])]
            if d_exit is not None:
                pt[d_exit] = bound
            if th_exit > 0.0:
                cs.append(_reparam(coef, 0.0, th_exit))
                ts.append(tau + th_exit * h)
                ys.append(tuple(pt))
            _record_m_zero(events, cs, ts, sgn, record_m_zero, upto=len(cs))
            events.append(Event(sgn * ts[-1], EventKind.BOX_EXIT, PhasePoint(*pt)))
            return finish("box_exit")

        cs.append(coef)
        tau += h
        ts.append(tau)
        ys.append((zn, mn))
        n_before = len(events)
        _record_m_zero(events, cs, ts, sgn, record_m_zero, upto=len(cs))
        arclength += math.hypot(zn - z, mn - m)
        z, m = zn, mn
        if terminal is not None and len(events) > n_before and terminal(events[-1], events):
            stop_status = "terminal_event"

        if crossed:
            ev = Event(sgn * tau, EventKind.M_AXIS, PhasePoint(0.0, m))
            events.append(ev)
            if stop_status is not None:
                pass
            elif m == 0.0:
                stop_status = "fixed_point"
                events.append(Event(sgn * tau, EventKind.NEAR_POINT, PhasePoint(0.0, 0.0), "O"))
            elif terminal is not None and terminal(ev, events):
                stop_status = "terminal_event"
            else:
                s = new_branch(0.0, m)
                stepper = _Stepper(params, s, sgn)
                k7z, k7m = stepper.f(z, m)
        k1z, k1m = k7z, k7m

        if stop_status is None:
            for label, pt, radius in stop_near:
                if math.hypot(z - pt[0], m - pt[1]) < radius:
                    events.append(Event(sgn * tau, EventKind.NEAR_POINT, PhasePoint(z, m), label))
                    stop_status = "near_point"
                    break
        if stop_status is None and math.hypot(k1z, k1m) < 1e-10:
            for fp in fixed:
                if math.hypot(z - fp.location.z, m - fp.location.m) < 1e-6:
                    events.append(Event(sgn * tau, EventKind.NEAR_POINT, PhasePoint(z, m),
                                        fp.name))
                    stop_status = "fixed_point"
                    break
        if stop_status is None and tau >= opts.t_max * (1 - 1e-15):
            stop_status = "t_max"
        if stop_status is None and max_arclength is not None and arclength > max_arclength:
            stop_status = "arc_length"
        if stop_status is not None:
            return finish(stop_status)
        h = hnext if not crossed else min(hnext, max(h, 1e-8))


def _record_m_zero(events, cs, ts, sgn, enabled, upto):
    """Locate an ``m = 0`` crossing inside the newest step."""
    if not enabled:
        return
    c = cs[upto - 1]
    m0 = c[0, 1]
    m1 = _cval(c, 1.0, 1)
    if m0 == 0.0:
        return
    br = _first_sign_change(c, 1, 0.0, 1.0 if m0 > 0 else -1.0)
    if br is None:
        return
    th = _bisect_theta(c, 1, 0.0, br[0], br[1], 1e-14)
    t0, t1 = ts[upto - 1], ts[upto]
    tc = t0 + th * (t1 - t0)
    zc = _cval(c, th, 0)
    events.append(Event(sgn * tc, EventKind.Z_AXIS, PhasePoint(zc, 0.0)))
    del m1


# -- attractor classification ----------------------------------------------------


@dataclass(frozen=True)
class Attractor:
    """Long-time fate of a forward orbit.

    ``kind`` is one of ``"fixed_point"``, ``"cycle"``, ``"unbounded"`` or
    ``"undetermined"``.  ``target`` names the fixed point, ``side`` is the
    sign of ``z`` at box exit for unbounded orbits.
    """

    kind: str
    target: Optional[str] = None
    side: Optional[int] = None
    detail: dict = field(default_factory=dict, compare=False)

    def __str__(self):
        if self.kind == "fixed_point":
            return f"FixedPoint({self.target})"
        if self.kind == "unbounded":
            return f"Unbounded({'+' if (self.side or 0) > 0 else '-'})"
        return self.kind.capitalize()


def _return_terminal(tol, min_returns=3):
    def stop(ev, events):
        if ev.kind != EventKind.M_AXIS or ev.point.m <= 0:
            return False
        rets = [e.point.m for e in events if e.kind == EventKind.M_AXIS and e.point.m > 0]
        return len(rets) >= min_returns and abs(rets[-1] - rets[-2]) < tol
    return stop


def classify_orbit(params, p0, opts=None, *, cycle_tol=1e-8, on_manifold_tol=1e-7):
    """Classify the forward fate of ``p0``.

    Saddles attract only along their stable manifold, and a forward orbit
    started on that manifold is pushed off it at the rate of the unstable
    eigenvalue, so plain forward integration cannot confirm such an arrival.
    When the forward orbit exits the box after passing close to a saddle,
    ``p0`` is therefore tested for membership of that saddle's stable
    manifold (traced backward from the saddle); membership within
    ``on_manifold_tol`` is classified as convergence to the saddle.
    """
    opts = opts or IntegratorOptions(t_max=2000.0)
    fps = fixed_points(params)
    saddles = [fp for fp in fps if fp.kind.value == "saddle"]
    orbit = integrate(params, p0, opts, "forward", fixed=fps,
                      terminal=_return_terminal(cycle_tol))
    if orbit.status == "fixed_point":
        label = next((e.label for e in reversed(orbit.events)
                      if e.kind == EventKind.NEAR_POINT), None)
        return Attractor("fixed_point", label, detail={"orbit": orbit})
    if orbit.status == "terminal_event":
        rets = [e for e in orbit.events if e.kind == EventKind.M_AXIS and e.point.m > 0]
        return Attractor("cycle", detail={"orbit": orbit, "anchor": rets[-1].point.m,
                                          "period": abs(rets[-1].t - rets[-2].t)})
    if orbit.status == "box_exit":
        side = 1 if orbit.end.z > 0 else -1
        d = np.hypot(orbit.z[:, None] - [s.location.z for s in saddles],
                     orbit.m[:, None] - [s.location.m for s in saddles])
        closest = d.min(axis=0) if len(saddles) else []
        for sd, dist in zip(saddles, closest):
            if dist < 0.25 and _on_stable_manifold(params, sd, p0, on_manifold_tol):
                return Attractor("fixed_point", sd.name, detail={"orbit": orbit})
        return Attractor("unbounded", side=side, detail={"orbit": orbit})
    return Attractor("undetermined", detail={"orbit": orbit})


def _on_stable_manifold(params, saddle, p0, tol):
    from .phase import manifold_hits

    for zc in manifold_hits(params, saddle, p0[1]):
        if abs(zc - p0[0]) <= tol * max(1.0, abs(zc)):
            return True
    return False
