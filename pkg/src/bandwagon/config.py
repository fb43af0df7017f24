"""Reading and writing model parameters as TOML documents.

The layout is a flat table with a nested mobility section::

    lambda = 0.5

    [mobility]
    kind = "crowding"
    mu = 4.6
    epsilon = 0.5
"""

from __future__ import annotations

import sys

from .model import ConstantMobility, CrowdingMobility, ModelParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

__all__ = ["params_from_dict", "params_to_dict", "load_params", "dump_params", "dumps_params"]


def params_from_dict(doc):
    """Build :class:`ModelParams` from a parsed document.

    Raises
    ------
    ValueError
        On a missing field or an unknown mobility kind.
    """
    try:
        lam = float(doc["lambda"])
        mob = doc["mobility"]
        kind = mob["kind"]
        mu = float(mob["mu"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"config is missing field {exc}") from None
    if kind == "constant":
        return ModelParams(lam, ConstantMobility(mu))
    if kind == "crowding":
        if "epsilon" not in mob:
            raise ValueError("crowding mobility needs mobility.epsilon")
        return ModelParams(lam, CrowdingMobility(mu, float(mob["epsilon"])))
    raise ValueError(f"unknown mobility kind {kind!r}")


def params_to_dict(params):
    if params.kind not in ("constant", "crowding"):
        raise TypeError("only constant and crowding mobility can be serialised")
    mob = {"kind": params.kind, "mu": float(params.mu)}
    if params.kind == "crowding":
        mob["epsilon"] = float(params.epsilon)
    return {"lambda": float(params.lam), "mobility": mob}


def load_params(path):
    with open(path, "rb") as fh:
        return params_from_dict(tomllib.load(fh))


def _val(v):
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(float(v))


def dumps_params(params):
    d = params_to_dict(params)
    lines = [f"lambda = {_val(d['lambda'])}", "", "[mobility]"]
    lines += [f"{k} = {_val(v)}" for k, v in d["mobility"].items()]
    return "\n".join(lines) + "\n"


def dump_params(params, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_params(params))
