"""Experiment configuration: schema, defaults, parsing and effective-parameter echo."""
from __future__ import annotations

import copy
import hashlib
import json
import warnings
from pathlib import Path

import jsonschema
import yaml

EXPERIMENTS = ("spectrum", "prop31", "feshbach-check", "mourre", "lemma-suite", "lap-sweep",
               "local-decay", "transfer-check", "nelson")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_numlist = {"type": "array", "items": _num, "minItems": 1}

GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "geomspace": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "linspace": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "directions": {"anyOf": [{"type": "string"}, {"type": "integer", "minimum": 1},
                                 {"type": "array", "items": _vec3}]},
        "quadrature": {"enum": ["spherical", "unit"]},
        "n_pol": {"type": "integer", "minimum": 1, "maximum": 2},
        "points": {"type": "array", "items": _vec3},
        "weights": _numlist,
    },
}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "P": _vec3,
        "alpha": {"type": "number", "minimum": 0},
        "Lam": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"anyOf": [{"type": "number", "minimum": 0}, _numlist]},
        "rho": {"anyOf": [{"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                          {"type": "null"}]},
        "n_max": {"type": "integer", "minimum": 0},
        "n_high": {"type": "integer", "minimum": 0},
        "n_low": {"type": "integer", "minimum": 0},
        "e_max": {"anyOf": [_num, {"type": "null"}]},
        "p_c": {"type": "number", "exclusiveMinimum": 0},
    },
}

OPTIONS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "P_list": {"type": "array", "items": _vec3},
        "P_scan": {"type": "object", "additionalProperties": False,
                   "properties": {"direction": _vec3, "values": _numlist},
                   "required": ["values"]},
        "alphas": _numlist,
        "s": {"type": "number", "exclusiveMinimum": 0.5, "maximum": 1},
        "s_list": _numlist,
        "eps": _numlist,
        "J": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "lambdas": _numlist,
        "n_lambdas": {"type": "integer", "minimum": 1},
        "weight": {"enum": ["y", "B"]},
        "holder": {"type": "boolean"},
        "holder_eps": {"type": "number", "exclusiveMinimum": 0},
        "holder_center": _num,
        "trials": {"type": "integer", "minimum": 1},
        "max_dim": {"type": "integer", "minimum": 2},
        "relax": {"type": "number", "exclusiveMinimum": 0},
        "theorems": {"type": "array", "items": {"enum": ["2.1", "5.1"]}},
        "mourre_sigma": {"type": "number", "exclusiveMinimum": 0},
        "state": {"type": "object", "additionalProperties": False,
                  "properties": {"center": _num, "width": {"type": "number", "exclusiveMinimum": 0}}},
        "floor_factor": {"type": "number", "exclusiveMinimum": 0},
        "t_frac": {"type": "number", "exclusiveMinimum": 0},
        "g_values": _numlist,
        "mu": {"anyOf": [{"type": "number", "minimum": 0}, _numlist]},
        "H_el": {"type": "array", "items": _numlist},
        "lam_point": _num,
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "grid": GRID_SCHEMA,
        "model": MODEL_SCHEMA,
        "options": OPTIONS_SCHEMA,
        "thresholds": {"type": "object", "additionalProperties": _num},
        "out": {"type": "string"},
        "jobs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "strict": {"type": "boolean"},
    },
}

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "model": {"P": [0.0, 0.0, 0.0], "alpha": 0.0, "Lam": 1.0, "sigma": 0.0, "rho": None,
              "n_max": 2, "p_c": 1 / 40},
    "options": {"s": 1.0},
    "thresholds": {},
    "jobs": 1,
    "seed": 0,
    "strict": False,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(cfg: dict) -> dict:
    """Schema check, then defaults and effective-parameter echo."""
    v = jsonschema.Draft7Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        raise ConfigError(f"config field {_path(e)}: {e.message}")
    full = _merge(DEFAULTS, cfg)
    full["effective"] = effective_parameters(full)
    return full


def load(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return data


def parse_config(path) -> dict:
    return validate(load(path))


def grid_spec(cfg: dict) -> dict:
    """Translate the config grid block into a build_mode_grid spec."""
    import numpy as np

    g = dict(cfg["grid"])
    for key, fn in (("geomspace", np.geomspace), ("linspace", np.linspace)):
        if key in g:
            a, b, n = g.pop(key)
            g["radii"] = fn(a, b, int(n)).tolist()
    return g


def sigma_list(cfg: dict) -> list:
    s = cfg["model"]["sigma"]
    return list(s) if isinstance(s, list) else [s]


def effective_parameters(cfg: dict) -> dict:
    """Snapped sigma values (with warnings) and the resolved grid size."""
    from .fock import build_mode_grid
    from .model import snap_sigma

    try:
        grid = build_mode_grid(grid_spec(cfg))
    except ValueError as exc:
        raise ConfigError(f"config field grid: {exc}") from exc
    eff = []
    for s in sigma_list(cfg):
        if not s:
            eff.append(0.0)
            continue
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                new, snapped = snap_sigma(grid, s)
        except ValueError as exc:
            raise ConfigError(f"config field model/sigma: {exc}") from exc
        if snapped:
            msg = str(caught[0].message) if caught else f"sigma {s} snapped to {new}"
            if cfg.get("strict"):
                raise ConfigError(f"config field model/sigma: {msg}")
            warnings.warn(msg)
        eff.append(new)
    return {"sigma": eff, "n_modes": grid.n_modes, "grid_digest": grid.digest()}


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in ("effective", "out", "jobs")}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]
