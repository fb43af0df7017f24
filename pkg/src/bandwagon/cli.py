"""Command-line interface: ``bandwagon <subcommand> [flags]``.

Every subcommand writes its artifacts into ``--out`` together with a
``manifest.json`` and prints a one-line JSON summary.  Exit codes: 0 on
success, 2 on domain errors, 1 on internal errors, 64 on bad usage.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
import traceback

import numpy as np

from . import __version__
from .config import load_params, params_to_dict
from .errors import BandwagonError, NoCycleError
from .model import classify_regime, constant_model, crowding_model, fixed_points, nullcline_roots

EXIT_OK, EXIT_INTERNAL, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2, 64

SUBCOMMANDS = ("fixed-points", "portrait", "manifold", "mu-hat", "cycle", "equilibria", "value",
               "micro", "lln", "nash")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


# -- JSON with 17 significant digits -----------------------------------------------


def dumps(obj):
    """JSON text where every float carries 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        import json

        return json.dumps(obj, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class _Run:
    def __init__(self, args):
        self.args = args
        self.out = args.out
        self.files = []
        self.seeds = []
        os.makedirs(self.out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def write(self, name, text):
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.files.append(name)
        return p

    def write_json(self, name, obj):
        return self.write(name, dumps(obj) + "\n")


# -- parameter resolution ----------------------------------------------------------


def resolve_params(args):
    if getattr(args, "config", None):
        return load_params(args.config)
    if args.model == "constant":
        return constant_model(args.lam, args.mu)
    return crowding_model(args.lam, args.mu, args.epsilon)


def _fp_dict(fp):
    return {
        "name": fp.name,
        "z": fp.location.z,
        "m": fp.location.m,
        "kind": fp.kind.value,
        "eigenvalues": [[float(np.real(e)), float(np.imag(e))] for e in fp.eigenvalues],
    }


# -- subcommands -------------------------------------------------------------------


def cmd_fixed_points(run, params):
    fps = [_fp_dict(fp) for fp in fixed_points(params)]
    regime = classify_regime(params) if params.kind != "generic" else None
    run.write_json("fixed_points.json", {"fixed_points": fps, "regime": regime and regime.value})
    return {"fixed_points": fps, "regime": regime and regime.value}


def _fp(params, name):
    return {fp.name: fp for fp in fixed_points(params)}[name]


def cmd_manifold(run, params):
    from .phase import trace_manifold

    args = run.args
    man = trace_manifold(params, _fp(params, args.saddle), args.kind)
    name = f"manifold_{args.saddle}_{args.kind}.csv"
    man.orbit.to_csv(run.path(name))
    run.files.append(name)
    from .ode import EventKind

    cross = [{"t": e.t, "z": e.point.z, "m": e.point.m} for e in man.orbit.events_of(EventKind.M_AXIS)]
    run.write_json(f"manifold_{args.saddle}_{args.kind}.json",
                   {"saddle": args.saddle, "kind": args.kind, "branch": man.branch,
                    "delta": man.delta, "terminated_by": man.terminated_by,
                    "m_axis_crossings": cross})
    return {"saddle": args.saddle, "kind": args.kind, "m_axis_crossings": len(cross),
            "terminated_by": man.terminated_by,
            "first_crossing_m": cross[0]["m"] if cross else None}


def cmd_mu_hat(run, params):
    from .phase import find_mu_hat

    args = run.args
    res = find_mu_hat(args.lam, args.epsilon, tuple(args.bracket), args.tol)
    d = res.to_dict()
    run.write_json("mu_hat.json", d)
    return {"mu_hat": d["mu_hat"], "bracket": d["bracket"], "evaluations": d["evaluations"]}


def _cycle(params, run):
    from .phase import find_limit_cycle

    if params.kind == "constant":
        search = None
    else:
        search = find_limit_cycle(params, n_scan=run.args.n_scan)
    found = bool(search and search.found)
    if run.args.require_cycle and not found:
        raise NoCycleError("no limit cycle found and --require-cycle was given")
    return search, found


def cmd_cycle(run, params):
    search, found = _cycle(params, run)
    summary = {"found": found, "n_cycles": len(search.cycles) if search else 0}
    if found:
        cyc = search.cycle
        cyc.orbit.to_csv(run.path("cycle.csv"))
        run.files.append("cycle.csv")
        summary.update(cyc.to_dict())
    if search is not None:
        scan = "m,displacement\n" + "".join(
            f"{format(float(m), '.17g')},{format(float(d), '.17g') if math.isfinite(d) else 'nan'}\n"
            for m, d in zip(search.grid, search.displacement))
        run.write("return_map.csv", scan)
    run.write_json("cycle.json", summary)
    return summary


def cmd_portrait(run, params):
    from .phase import trace_manifold
    from .svg import PortraitLayers, render_portrait

    fps = fixed_points(params)
    zmax = 1.5 * max(abs(fp.location.z) for fp in fps) + 0.5
    layers = PortraitLayers((-zmax, zmax))
    zs = np.linspace(-zmax, zmax, 241)
    pts = [(z, m) for z in zs for m in nullcline_roots(params, z)]
    if pts:
        layers.add_curve(pts, "nullcline", "dz = 0")
    for fp in fps:
        if fp.name == "O":
            continue
        for kind in ("stable", "unstable"):
            man = trace_manifold(params, fp, kind)
            layers.add_curve(man.orbit.y, kind, f"{kind} manifold of {fp.name}")
            name = f"manifold_{fp.name}_{kind}.csv"
            man.orbit.to_csv(run.path(name))
            run.files.append(name)
    summary = {"fixed_points": len(fps)}
    if params.kind == "crowding":
        search, found = _cycle(params, run)
        summary["cycle"] = found
        if found:
            layers.add_curve(search.cycle.orbit.y, "cycle", "limit cycle")
            search.cycle.orbit.to_csv(run.path("cycle.csv"))
            run.files.append("cycle.csv")
    for fp in fps:
        layers.add_point(fp.location.z, fp.location.m, fp.name)
    title = f"{params.kind} lambda={params.lam:g} mu={params.mu:g}"
    if params.kind == "crowding":
        title += f" epsilon={params.epsilon:g}"
    run.write("portrait.svg", render_portrait(layers, title))
    summary["svg"] = "portrait.svg"
    return summary


def _equilibria(run, params):
    from .mfg import enumerate_equilibria

    return enumerate_equilibria(params, run.args.m0, shoot=not run.args.no_shoot)


def _write_equilibrium(run, params, k, eq):
    from .mfg import consistency_check, hjb_residual, value_function

    orbit_name = f"equilibrium_{k}_orbit.csv"
    value_name = f"equilibrium_{k}_value.csv"
    eq.orbit.to_csv(run.path(orbit_name))
    run.files.append(orbit_name)
    vs = value_function(params, eq)
    vs.to_csv(run.path(value_name))
    run.files.append(value_name)
    res = {"hjb": hjb_residual(params, eq, vs), "consistency": consistency_check(params, eq)}
    return eq.to_dict(orbit_name, value_name, res)


def cmd_equilibria(run, params):
    eqs = _equilibria(run, params)
    items = [_write_equilibrium(run, params, k, eq) for k, eq in enumerate(eqs)]
    run.write_json("equilibria.json", {"m0": run.args.m0, "count": len(eqs), "equilibria": items})
    return {"m0": run.args.m0, "count": len(eqs),
            "attractors": [e["attractor"] for e in items]}


def _pick(run, params):
    eqs = _equilibria(run, params)
    k = run.args.index
    if not eqs:
        raise BandwagonError(f"no equilibrium with m0={run.args.m0}")
    if not 0 <= k < len(eqs):
        raise BandwagonError(f"--index {k} out of range (found {len(eqs)} equilibria)")
    return k, eqs[k]


def cmd_value(run, params):
    k, eq = _pick(run, params)
    d = _write_equilibrium(run, params, k, eq)
    run.write_json(f"equilibrium_{k}.json", d)
    return {"index": k, "attractor": eq.attractor, "z0": eq.z0, "residuals": d["residuals"]}


def _law(run, params):
    from .mfg import ControlLaw

    k, eq = _pick(run, params)
    return k, eq, ControlLaw(params, eq)


def cmd_micro(run, params):
    from .micro import MicroConfig, rounded_initial_m, simulate

    args = run.args
    k, eq, law = _law(run, params)
    m_init = rounded_initial_m(args.N, eq.m0)
    cfg = MicroConfig(args.N, args.T, args.seed, law, m_init)
    res = simulate(params, cfg)
    run.seeds.append(args.seed)
    res.to_csv(run.path("events.csv"))
    run.files.append("events.csv")
    summ = res.summary()
    summ["equilibrium_index"] = k
    run.write_json("micro.json", summ)
    return summ


def cmd_lln(run, params):
    from .micro import RNG_NAME, lln_error

    args = run.args
    _, eq, law = _law(run, params)
    seeds = list(range(args.seed, args.seed + args.seeds))
    run.seeds.extend(seeds)
    rows = lln_error(params, law, args.N_list, seeds, T=args.T)
    ratio = rows[-1]["mean"] / rows[0]["mean"] if rows[0]["mean"] > 0 else None
    out = {"rng": RNG_NAME, "seeds": seeds, "T": args.T, "table": rows, "ratio_last_first": ratio}
    run.write_json("lln.json", out)
    return {"table": rows, "ratio_last_first": ratio}


def cmd_nash(run, params):
    from .micro import MicroConfig, deviation_gain, rounded_initial_m

    args = run.args
    _, eq, law = _law(run, params)
    seeds = list(range(args.seed, args.seed + args.seeds))
    run.seeds.extend(seeds)
    cfg = MicroConfig(args.N, args.T, args.seed, law, rounded_initial_m(args.N, eq.m0))
    res = deviation_gain(params, eq, cfg, tuple(args.alphas), seeds)
    d = res.to_dict()
    d["within_two_se"] = res.within_two_se
    run.write_json("nash.json", d)
    return {"max_gain": d["max_gain"], "standard_error": d["standard_error"],
            "within_two_se": res.within_two_se, "alpha_star": d["alpha_star"]}


HANDLERS = {
    "fixed-points": cmd_fixed_points,
    "portrait": cmd_portrait,
    "manifold": cmd_manifold,
    "mu-hat": cmd_mu_hat,
    "cycle": cmd_cycle,
    "equilibria": cmd_equilibria,
    "value": cmd_value,
    "micro": cmd_micro,
    "lln": cmd_lln,
    "nash": cmd_nash,
}


# -- parser ------------------------------------------------------------------------


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--model", choices=("constant", "crowding"), default="constant")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0)
    g.add_argument("--mu", type=float, default=0.1)
    g.add_argument("--epsilon", type=float, default=0.5)
    g.add_argument("--config", help="TOML file with lambda and a [mobility] table")
    common.add_argument("--out", default="bandwagon_out", help="output directory")

    p = _Parser(prog="bandwagon", description="Mean-field opinion game toolkit")
    p.add_argument("--version", action="version", version=f"bandwagon {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    add("fixed-points", "fixed points and their classification")
    sp = add("portrait", "SVG phase portrait with manifolds and cycle")
    sp.add_argument("--require-cycle", action="store_true")
    sp.add_argument("--n-scan", type=int, default=200)
    sp = add("manifold", "trace one saddle manifold")
    sp.add_argument("--saddle", choices=("P", "Q"), default="Q")
    sp.add_argument("--kind", choices=("stable", "unstable"), default="stable")
    sp = add("mu-hat", "critical mobility where m* reaches 1")
    sp.add_argument("--bracket", type=float, nargs=2, default=(1.0, 10.0), metavar=("LO", "HI"))
    sp.add_argument("--tol", type=float, default=1e-3)
    sp = add("cycle", "limit cycle search on the section z = 0")
    sp.add_argument("--require-cycle", action="store_true")
    sp.add_argument("--n-scan", type=int, default=200)
    for name, help_ in (("equilibria", "enumerate equilibria for m(0) = m0"),
                        ("value", "value function of one equilibrium"),
                        ("micro", "one N-agent simulation"),
                        ("lln", "law-of-large-numbers experiment"),
                        ("nash", "unilateral deviation experiment")):
        sp = add(name, help_)
        sp.add_argument("--m0", type=float, required=True)
        sp.add_argument("--no-shoot", action="store_true", help="skip shooting cross-check")
        if name != "equilibria":
            sp.add_argument("--index", type=int, default=0, help="which equilibrium")
        if name in ("micro", "lln", "nash"):
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--T", type=float, default=20.0 if name != "nash" else 12.0)
        if name in ("micro", "nash"):
            sp.add_argument("--N", type=int, default=1000)
        if name == "lln":
            sp.add_argument("--N-list", dest="N_list", type=int, nargs="+",
                            default=[100, 1000, 10000])
            sp.add_argument("--seeds", type=int, default=50, help="number of seeds")
        if name == "nash":
            sp.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.5, 1.5, 2.0])
            sp.add_argument("--seeds", type=int, default=200, help="number of seeds")
    return p


def run(argv=None):
    """Execute one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        params = resolve_params(args)
        r = _Run(args)
        summary = HANDLERS[args.command](r, params)
        resolved = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
        resolved["model_params"] = params_to_dict(params)
        manifest = {
            "command": args.command,
            "parameters": resolved,
            "version": __version__,
            "seeds": r.seeds,
            "outputs": list(r.files),
            "duration_s": time.perf_counter() - t0,
        }
        r.write_json("manifest.json", manifest)
        summary = {"command": args.command, **summary, "out": args.out}
        sys.stdout.write(dumps(summary) + "\n")
        return EXIT_OK
    except (BandwagonError, ValueError, TypeError, OSError) as exc:
        code = EXIT_INTERNAL if isinstance(exc, TypeError) else EXIT_DOMAIN
        sys.stderr.write(f"bandwagon: {type(exc).__name__}: {exc}\n")
        sys.stdout.write(dumps({"command": args.command, "error": type(exc).__name__,
                                "message": str(exc)}) + "\n")
        return code
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        sys.stdout.write(dumps({"command": args.command, "error": type(exc).__name__,
                                "message": str(exc)}) + "\n")
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
