"""Event-driven simulation of the N-agent game under the mean-field control.

Each agent flips at rate ``u*(sigma, t)`` computed from the mean-field pair
``(z(t), m(t))``.  The time-inhomogeneous Markov chain is sampled exactly by
thinning: candidate times come from a homogeneous Poisson clock whose rate
dominates the total flip rate, and a candidate is kept with probability
``total rate / bound``.  Everything is drawn from one counter-based Philox
stream per seed, so identical ``(config, seed)`` pairs reproduce the event
log bit for bit.

Agent 0 may use a scaled control ``alpha * u*``.  The candidate stream does
not depend on ``alpha`` (the bound is shared across a deviation family), so
runs with different ``alpha`` use common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .mfg import ControlLaw, _mobility_vec

__all__ = [
    "RNG_NAME",
    "MicroConfig",
    "MicroResult",
    "LawTable",
    "simulate",
    "lln_error",
    "deviation_gain",
    "DeviationResult",
    "tail_horizon",
    "rounded_initial_m",
    "worker_count",
]

RNG_NAME = "numpy.Philox"
N_CELLS = 10_000
SAFETY = 1.01


def worker_count():
    """Worker processes from ``BANDWAGON_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BANDWAGON_THREADS", "1")))
    except ValueError:
        return 1


def rounded_initial_m(N, m0):
    """Closest ``m`` to ``m0`` with ``N (1 + m) / 2`` an integer."""
    n_plus = int(round(N * (1.0 + m0) / 2.0))
    return (2.0 * n_plus - N) / N


class LawTable:
    """Control law sampled on ``N_CELLS`` cells of ``[0, T]``.

    ``peak`` is the grid maximum of ``u*`` over both states and ``W[s]`` holds
    prefix integrals of ``exp(-lam t) u*(s, t)^2`` at the cell edges, using the
    midpoint value on each cell.
    """

    def __init__(self, params, law, T, n_cells=N_CELLS):
        self.params, self.law, self.T = params, law, float(T)
        self.n = n_cells
        self.dt = self.T / n_cells
        edges = np.linspace(0.0, self.T, n_cells + 1)
        mids = 0.5 * (edges[1:] + edges[:-1])
        lam = params.lam
        self.edges = edges
        self.E = np.exp(-lam * edges)
        self.u = {}
        self.W = {}
        peak = 0.0
        for s in (1, -1):
            u_mid = law.rate_on_grid(s, mids)
            u_edge = law.rate_on_grid(s, edges)
            peak = max(peak, float(u_mid.max(initial=0.0)), float(u_edge.max(initial=0.0)))
            self.u[s] = u_mid
            cell = u_mid ** 2 * (self.E[:-1] - self.E[1:]) / lam
            self.W[s] = np.concatenate([[0.0], np.cumsum(cell)])
        self.peak = peak

    def cell(self, t):
        return min(int(t / self.dt), self.n - 1)

    def W_at(self, s, t):
        """``int_0^t exp(-lam r) u(s, r)^2 dr`` for the sampled law."""
        k = self.cell(t)
        lam = self.params.lam
        return self.W[s][k] + self.u[s][k] ** 2 * (self.E[k] - math.exp(-lam * t)) / lam

    def rates(self, t):
        """Exact ``u*(+1, t)``, ``u*(-1, t)`` at an array of times."""
        return self.law.rate_on_grid(1, t), self.law.rate_on_grid(-1, t)


def tail_horizon(params, law, tol=1e-4, T_probe=None):
    """Smallest ``T`` with ``exp(-lam T) (1 + peak^2 / (2 min mu)) / lam < tol``."""
    lam = params.lam
    probe = T_probe or law.t1
    table = LawTable(params, law, probe, n_cells=2000)
    mob = params.mobility
    mgrid = np.linspace(-1.0, 1.0, 201)
    mu_min = min(float(_mobility_vec(mob, s, mgrid).min()) for s in (1, -1))
    c = 1.0 + (table.peak ** 2 / (2.0 * mu_min) if mu_min > 0 else 0.0)
    return max(math.log(c / (lam * tol)) / lam, 1e-6)


@dataclass(frozen=True)
class MicroConfig:
    """Configuration of one N-agent run.

    ``alpha`` scales agent 0's control; ``alpha_bound`` is the largest scale in
    the deviation family and fixes the shared proposal rate.
    """

    N: int
    T: float
    seed: int
    law: ControlLaw
    initial_m: float
    alpha: float = 1.0
    alpha_bound: float = 1.0
    n_cells: int = N_CELLS

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not -1.0 <= self.initial_m <= 1.0:
            raise ValueError("initial_m must lie in [-1, 1]")
        n_plus = self.N * (1.0 + self.initial_m) / 2.0
        if abs(n_plus - round(n_plus)) > 1e-9:
            raise ValueError(f"N (1 + m) / 2 = {n_plus} is not an integer")
        if self.alpha < 0 or self.alpha_bound < max(self.alpha, 1.0) - 1e-15:
            raise ValueError("need 0 <= alpha and alpha_bound >= max(alpha, 1)")

    @property
    def n_plus(self):
        return int(round(self.N * (1.0 + self.initial_m) / 2.0))


@dataclass
class MicroResult:
    """Event log and discounted utilities of one run.

    ``direction[k]`` is ``+1`` for a ``-1 -> +1`` flip and ``-1`` otherwise;
    ``m_after[k]`` is ``m_N`` just after event ``k``.
    """

    times: np.ndarray
    direction: np.ndarray
    agent: np.ndarray
    m_after: np.ndarray
    utilities: np.ndarray
    seed: int
    N: int
    T: float
    initial_m: float
    n_candidates: int
    rate_bound: float
    rng: str = RNG_NAME
    meta: dict = field(default_factory=dict)

    @property
    def n_events(self):
        return len(self.times)

    @property
    def terminal_m(self):
        return float(self.m_after[-1]) if len(self.m_after) else self.initial_m

    def m_at(self, t):
        """Right-continuous ``m_N(t)``."""
        k = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        vals = np.concatenate([[self.initial_m], self.m_after])
        return vals[k]

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(f"# rng={self.rng} seed={self.seed} N={self.N}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "direction", "m_N"])
        for t, d, m in zip(self.times, self.direction, self.m_after):
            w.writerow([format(float(t), ".17g"), int(d), format(float(m), ".17g")])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        return {
            "rng": self.rng,
            "seed": self.seed,
            "N": self.N,
            "T": self.T,
            "initial_m": self.initial_m,
            "terminal_m": self.terminal_m,
            "n_events": self.n_events,
            "n_candidates": self.n_candidates,
            "rate_bound": self.rate_bound,
            "mean_utility": float(np.mean(self.utilities)),
            "agent0_utility": float(self.utilities[0]),
        }

    def to_json(self):
        return json.dumps(self.summary())


def _stream(seed):
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def simulate(params, cfg: MicroConfig, table: Optional[LawTable] = None) -> MicroResult:
    """Simulate one run by Poisson thinning.

    The total flip rate at ``t`` is ``n_+ u(+1, t) + n_- u(-1, t)`` with agent 0
    counted at ``alpha`` times its state's rate.  Candidates are accepted
    into, in order, the ``+`` group without agent 0, the ``-`` group without
    agent 0, then agent 0; the flipping member of a group is drawn uniformly.

    Rewards ``sigma m_N - u^2 / (2 mu(sigma, m_N))`` are integrated with
    discount ``exp(-lam t)`` in closed form between events, using the
    cell-midpoint values of the law.
    """
    N, T, lam = cfg.N, float(cfg.T), params.lam
    table = table or LawTable(params, cfg.law, T, cfg.n_cells)
    mob = params.mobility
    bound = (N - 1 + cfg.alpha_bound) * table.peak * SAFETY
    rng = _stream(cfg.seed)
    n_cand = int(rng.poisson(bound * T)) if bound > 0 else 0
    cand_t = np.sort(rng.uniform(0.0, T, n_cand))
    u1 = rng.random(n_cand)
    u2 = rng.random(n_cand)
    up_all, um_all = table.rates(cand_t) if n_cand else (np.empty(0), np.empty(0))

    # membership lists without agent 0 (swap-remove)
    sigma = -np.ones(N, dtype=np.int8)
    sigma[: cfg.n_plus] = 1
    members = {1: [i for i in range(1, N) if sigma[i] == 1],
               -1: [i for i in range(1, N) if sigma[i] == -1]}
    pos = np.zeros(N, dtype=np.int64)
    for s in (1, -1):
        for j, i in enumerate(members[s]):
            pos[i] = j
    n_pl = int(np.sum(sigma == 1))
    m_n = (2.0 * n_pl - N) / N
    alpha, a2 = cfg.alpha, cfg.alpha ** 2

    # running reward integrals per state: G for regular agents, G0 for agent 0
    G = {1: 0.0, -1: 0.0}
    G0 = {1: 0.0, -1: 0.0}
    t_last, E_last = 0.0, 1.0
    W_last = {1: 0.0, -1: 0.0}
    entered = np.zeros(N)
    U = np.zeros(N)

    def advance(t):
        nonlocal t_last, E_last
        E_t = math.exp(-lam * t)
        base = m_n * (E_last - E_t) / lam
        for s in (1, -1):
            Wt = table.W_at(s, t)
            dW = Wt - W_last[s]
            mu_s = float(mob(s, m_n))
            cost = 0.0 if dW == 0.0 else (dW / (2.0 * mu_s) if mu_s > 0 else math.inf)
            G[s] += s * base - cost
            G0[s] += s * base - a2 * cost
            W_last[s] = Wt
        t_last, E_last = t, E_t

    ev_t, ev_d, ev_a, ev_m = [], [], [], []
    for k in range(n_cand):
        up, um = up_all[k], um_all[k]
        s0 = int(sigma[0])
        r_p = len(members[1]) * up
        r_m = len(members[-1]) * um
        r_0 = alpha * (up if s0 == 1 else um)
        total = r_p + r_m + r_0
        if total > bound * (1.0 + 1e-12):
            raise AssertionError(f"acceptance probability {total / bound} exceeds 1 at t={cand_t[k]}")
        x = u1[k] * bound
        if x >= total:
            continue
        t = float(cand_t[k])
        advance(t)
        if x < r_p:
            grp = members[1]
            i = grp[min(int(u2[k] * len(grp)), len(grp) - 1)]
        elif x < r_p + r_m:
            grp = members[-1]
            i = grp[min(int(u2[k] * len(grp)), len(grp) - 1)]
        else:
            i = 0
        s_old = int(sigma[i])
        g = G0 if i == 0 else G
        U[i] += g[s_old] - entered[i]
        s_new = -s_old
        entered[i] = g[s_new]
        sigma[i] = s_new
        if i != 0:
            lst = members[s_old]
            j = pos[i]
            last = lst[-1]
            lst[j] = last
            pos[last] = j
            lst.pop()
            pos[i] = len(members[s_new])
            members[s_new].append(i)
        n_pl += s_new
        m_n = (2.0 * n_pl - N) / N
        ev_t.append(t)
        ev_d.append(s_new)
        ev_a.append(i)
        ev_m.append(m_n)
    advance(T)
    for i in range(N):
        g = G0 if i == 0 else G
        U[i] += g[int(sigma[i])] - entered[i]
    return MicroResult(np.array(ev_t), np.array(ev_d, dtype=np.int8), np.array(ev_a, dtype=np.int64),
                       np.array(ev_m), U, int(cfg.seed), N, T, float(cfg.initial_m), n_cand, bound,
                       meta={"alpha": alpha, "alpha_bound": cfg.alpha_bound, "n_cells": table.n})


def _pmap(fn, items, workers=None):
    workers = workers or worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _sup_error(res, orbit_m, t_grid, m_grid):
    # m_N is a step function: check both one-sided limits at every event
    err = float(np.max(np.abs(res.m_at(t_grid) - m_grid)))
    if res.n_events:
        mt = orbit_m(res.times)
        prev = np.concatenate([[res.initial_m], res.m_after[:-1]])
        err = max(err, float(np.max(np.abs(prev - mt))), float(np.max(np.abs(res.m_after - mt))))
    return err


class _LlnJob:
    def __init__(self, params, law, N, T, m_init, table):
        self.params, self.law, self.N, self.T, self.m_init = params, law, N, T, m_init
        self.table = table

    def __call__(self, seed):
        cfg = MicroConfig(self.N, self.T, seed, self.law, self.m_init)
        res = simulate(self.params, cfg, self.table)
        t_grid = np.linspace(0.0, self.T, 20_001)
        orbit_m = lambda t: self.law.state(t)[..., 1]  # noqa: E731
        return _sup_error(res, orbit_m, t_grid, orbit_m(t_grid))


def lln_error(params, eq, N_list=(100, 1000, 10000), seeds=range(50), T=20.0, workers=None):
    """Mean and standard deviation of ``sup_t |m_N(t) - m(t)|`` per ``N``.

    The initial ``m_N`` is the closest admissible value to ``eq.m0`` for each
    ``N``, so the error includes that rounding.

    Returns
    -------
    list of dict
        Keys ``N``, ``mean``, ``std``, ``n_seeds``, ``initial_m``.
    """
    law = eq if isinstance(eq, ControlLaw) else ControlLaw(params, eq)
    m0 = law.equilibrium.m0 if law.equilibrium is not None else float(law.orbit.start.m)
    seeds = list(seeds)
    table = LawTable(params, law, T)
    rows = []
    for N in N_list:
        m_init = rounded_initial_m(N, m0)
        errs = np.array(_pmap(_LlnJob(params, law, N, T, m_init, table), seeds, workers))
        rows.append({"N": int(N), "mean": float(errs.mean()), "std": float(errs.std(ddof=1))
                     if len(errs) > 1 else 0.0, "n_seeds": len(seeds), "initial_m": m_init})
    return rows


@dataclass(frozen=True)
class DeviationResult:
    max_gain: float
    standard_error: float
    n_seeds: int
    alpha_star: float
    table: tuple
    baseline_utility: float

    @property
    def within_two_se(self):
        return self.max_gain <= 2.0 * self.standard_error

    def to_dict(self):
        return {
            "max_gain": self.max_gain,
            "standard_error": self.standard_error,
            "n_seeds": self.n_seeds,
            "alpha_star": self.alpha_star,
            "baseline_utility": self.baseline_utility,
            "table": [dict(r) for r in self.table],
            "rng": RNG_NAME,
        }


class _DevJob:
    def __init__(self, params, cfg, alphas, table):
        self.params, self.cfg, self.alphas, self.table = params, cfg, alphas, table

    def __call__(self, seed):
        base = replace(self.cfg, seed=seed, alpha=1.0)
        u_ref = simulate(self.params, base, self.table).utilities[0]
        gains = [simulate(self.params, replace(base, alpha=a), self.table).utilities[0] - u_ref
                 for a in self.alphas]
        return u_ref, gains


def deviation_gain(params, eq, cfg: MicroConfig, deviation_family=(0.0, 0.5, 1.5, 2.0),
                   seeds=range(200), workers=None):
    """Common-random-numbers estimate of agent 0's best unilateral gain.

    For each ``alpha`` the gain ``U_0(alpha u*) - U_0(u*)`` is averaged over
    ``seeds``; the same seed gives the same candidate stream for every
    ``alpha``.  The alpha with the largest mean gain is reported with its
    standard error.
    """
    alphas = tuple(float(a) for a in deviation_family)
    bound = max(alphas + (1.0,))
    law = cfg.law if cfg.law is not None else ControlLaw(params, eq)
    cfg = replace(cfg, law=law, alpha=1.0, alpha_bound=bound)
    table = LawTable(params, law, cfg.T, cfg.n_cells)
    seeds = list(seeds)
    out = _pmap(_DevJob(params, cfg, alphas, table), seeds, workers)
    ref = np.array([o[0] for o in out])
    gains = np.array([o[1] for o in out])
    n = len(seeds)
    means = gains.mean(0)
    ses = gains.std(0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(alphas))
    rows = tuple({"alpha": a, "mean_gain": float(mu), "standard_error": float(se)}
                 for a, mu, se in zip(alphas, means, ses))
    k = int(np.argmax(means))
    return DeviationResult(float(means[k]), float(ses[k]), n, alphas[k], rows, float(ref.mean()))
