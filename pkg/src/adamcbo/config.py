"""Run configuration: schema validation, defaults and hashing.

A configuration is a YAML (or JSON) mapping with four sections::

    optimizer:              # how to optimize
      kind: adam_cbo        # cbo | adam_cbo
      lambda: 0.1
      gamma: 0.01           # cbo only
      sigma: 5.1            # cbo only
      alpha: 1000.0
      beta1: 0.9            # adam_cbo only
      beta2: 0.99
      epsilon: 1.0e-8
      N: 500                # particles
      M: 5                  # batch size
      t_N: 10000            # iterations (a phase plan overrides it)
      noise: gaussian       # gaussian | uniform | wiener
      stop_tol: null
      sigma_schedule: {base: 0.99, period: 20}
      phases:               # optional; contiguous from 0
        - {start: 0, end: 5000, lambda: 0.2, M: 5, noise: true}
    problem:                # what to optimize; fields depend on `kind`
      kind: rastrigin
    trials: {count: 100, success_radius: 0.25, init: uniform, seed: 0}
    output: {dir: out, formats: [csv, jsonl, txt]}

Unknown keys anywhere are rejected and every error names its dotted path.
``trials.seed`` is the master seed of every subcommand.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

import yaml

from .exceptions import ConfigError
from .schedules import NOISE_KINDS

__all__ = ["load_config", "resolve", "validate", "config_hash", "DEFAULTS", "FORMATS"]

FORMATS = ("csv", "jsonl", "txt")


# -- field validators ------------------------------------------------------
# Each returns the cleaned value or raises ConfigError(path, ...).


def _num(lo=None, hi=None, lo_open=True, hi_open=True, nullable=False):
    def check(path, v):
        if v is None and nullable:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(path, f"expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(path, f"must be finite, got {v}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and (v >= hi if hi_open else v > hi):
            raise ConfigError(path, f"must be {'<' if hi_open else '<='} {hi}, got {v}")
        return v

    return check


def _int(lo=None, hi=None):
    def check(path, v):
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            else:
                raise ConfigError(path, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(path, f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigError(path, f"must be <= {hi}, got {v}")
        return v

    return check


def _choice(*options):
    def check(path, v):
        if v not in options:
            raise ConfigError(path, f"must be one of {list(options)}, got {v!r}")
        return v

    return check


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true or false, got {v!r}")
    return v


def _string(path, v):
    if not isinstance(v, str) or not v:
        raise ConfigError(path, f"expected a non-empty string, got {v!r}")
    return v


def _list_of(item, min_len=0):
    def check(path, v):
        if not isinstance(v, list):
            raise ConfigError(path, f"expected a list, got {v!r}")
        if len(v) < min_len:
            raise ConfigError(path, f"needs at least {min_len} entries")
        return [item(f"{path}[{i}]", x) for i, x in enumerate(v)]

    return check


def _section(fields, required=()):
    def check(path, v):
        if not isinstance(v, dict):
            raise ConfigError(path, f"expected a mapping, got {v!r}")
        for key in v:
            if key not in fields:
                raise ConfigError(f"{path}.{key}" if path else str(key), f"unknown key; allowed: {sorted(fields)}")
        for key in required:
            if key not in v:
                raise ConfigError(f"{path}.{key}" if path else key, "required")
        return {k: fields[k](f"{path}.{k}" if path else k, x) for k, x in v.items()}

    return check


_SCHEDULE = _section({"base": _num(0, 1, hi_open=False), "period": _num(0)})

_PHASE = _section(
    {
        "start": _int(0),
        "end": _int(1),
        "lambda": _num(0),
        "M": _int(1),
        "noise": _bool,
        "sigma_schedule": _SCHEDULE,
    },
    required=("start", "end"),
)

_OPTIMIZER = _section(
    {
        "kind": _choice("cbo", "adam_cbo"),
        "lambda": _num(0),
        "gamma": _num(0),
        "sigma": _num(0, lo_open=False),
        "alpha": _num(0),
        "beta1": _num(0, 1),
        "beta2": _num(0, 1),
        "epsilon": _num(0),
        "N": _int(1),
        "M": _int(1),
        "t_N": _int(0),
        "noise": _choice(*NOISE_KINDS),
        "stop_tol": _num(0, nullable=True),
        "sigma_schedule": _SCHEDULE,
        "phases": _list_of(_PHASE, min_len=1),
    }
)

_ROW = _section(
    {
        "dim": _int(1),
        "optimizer": _choice("cbo", "adam_cbo"),
        "N": _int(1),
        "M": _int(1),
        "t_N": _int(0),
        "noise": _choice(*NOISE_KINDS),
        "alpha": _num(0),
        "init": _choice("uniform", "zeros"),
    },
    required=("dim",),
)

_NETWORK = {
    "width": _int(1),
    "depth": _int(2),
    "depth_convention": _choice("transforms", "layers"),
    "activation": _choice("sigmoid", "relu", "requ", "sqrtabs"),
    "init_scale": _num(0),
    "record_every": _int(0),
}

_PROBLEMS = {
    "rastrigin": _section({"kind": _string, "rows": _list_of(_ROW, min_len=1), "offset": _num()}),
    "fit": _section(
        {
            "kind": _string,
            "target": _choice("target1", "target2", "func3"),
            "k": _choice(2, 3, 4),
            "n_samples": _int(2),
            "n_plot": _int(2),
            **_NETWORK,
        }
    ),
    "pde": _section(
        {
            "kind": _string,
            "dim": _int(1, 8),
            "eta": _num(0),
            "n_interior": _int(1),
            "n_slice": _int(1),
            "n_boundary": _int(1),
            "grid_per_axis": _int(2),
            "n_profile": _int(2),
            **_NETWORK,
        }
    ),
    "stability": _section(
        {
            "kind": _string,
            "mu": _list_of(_num(0), min_len=1),
            "horizon": _num(0),
            "cbo_lambda": _list_of(_num(0), min_len=1),
        }
    ),
    "scaling": _section(
        {
            "kind": _string,
            "dims": _list_of(_int(1), min_len=1),
            "N": _int(1),
            "M": _int(1),
            "iterations": _int(1),
            "repeats": _int(1),
        }
    ),
    "builtin": _section(
        {
            "kind": _string,
            "function": _choice("rastrigin", "sphere"),
            "dim": _int(1),
            "shift": _num(),
            "offset": _num(),
            "init_low": _num(),
            "init_high": _num(),
            "trace_every": _int(0),
        }
    ),
}

_TRIALS = _section(
    {
        "count": _int(1),
        "success_radius": _num(0, 0.5),
        "init": _choice("uniform", "zeros"),
        "seed": _int(0, 2**64 - 1),
    }
)

_OUTPUT = _section({"dir": _string, "formats": _list_of(_choice(*FORMATS), min_len=1)})


def _problem(path, v):
    if not isinstance(v, dict):
        raise ConfigError(path, f"expected a mapping, got {v!r}")
    kind = v.get("kind")
    if kind not in _PROBLEMS:
        raise ConfigError(f"{path}.kind", f"must be one of {sorted(_PROBLEMS)}, got {kind!r}")
    return _PROBLEMS[kind](path, v)


_TOP = _section({"optimizer": _OPTIMIZER, "problem": _problem, "trials": _TRIALS, "output": _OUTPUT})


# -- defaults per subcommand ------------------------------------------------

_COMMON = {
    "trials": {"count": 100, "success_radius": 0.25, "init": "uniform", "seed": 0},
    "output": {"dir": "out", "formats": list(FORMATS)},
}

DEFAULTS = {
    "rastrigin-bench": {
        "optimizer": {"kind": "cbo", "noise": "gaussian"},
        "problem": {"kind": "rastrigin", "rows": [{"dim": 2}], "offset": 0.0},
    },
    "fit-function": {
        "optimizer": {
            "kind": "adam_cbo",
            "lambda": 0.2,
            "alpha": 1e5,
            "N": 500,
            "M": 5,
            "phases": [
                {"start": 0, "end": 5000, "M": 5, "noise": False},
                {"start": 5000, "end": 10000, "M": 10, "noise": False},
            ],
        },
        "problem": {
            "kind": "fit",
            "target": "target1",
            "n_samples": 51,
            "n_plot": 401,
            "width": 50,
            "depth": 3,
            "depth_convention": "transforms",
            "activation": "sigmoid",
            "init_scale": 1.0,
            "record_every": 100,
        },
    },
    "solve-pde": {
        "optimizer": {
            "kind": "adam_cbo",
            "lambda": 0.1,
            "alpha": 1e3,
            "N": 500,
            "M": 5,
            "phases": [
                {"start": 0, "end": 1000, "M": 5, "noise": False},
                {"start": 1000, "end": 2000, "M": 20, "noise": False},
                {"start": 2000, "end": 3000, "M": 100, "noise": False},
                {"start": 3000, "end": 4000, "M": 100, "lambda": 0.01, "noise": False},
            ],
        },
        "problem": {
            "kind": "pde",
            "dim": 2,
            "eta": 500.0,
            "n_interior": 512,
            "n_slice": 128,
            "n_boundary": 256,
            "grid_per_axis": 101,
            "n_profile": 201,
            "width": 20,
            "depth": 2,
            "depth_convention": "transforms",
            "activation": "sqrtabs",
            "init_scale": 1.0,
            "record_every": 100,
        },
    },
    "stability": {
        "optimizer": {"kind": "adam_cbo", "beta1": 0.9, "beta2": 0.99},
        "problem": {"kind": "stability", "mu": [1e3, 1e5, 1e7], "horizon": 200.0, "cbo_lambda": [0.1, 1.0]},
    },
    "scaling": {
        "optimizer": {"kind": "adam_cbo"},
        "problem": {"kind": "scaling", "dims": [125, 250, 500, 1000], "N": 1000, "M": 50, "iterations": 100, "repeats": 3},
    },
    "optimize": {
        "optimizer": {"kind": "adam_cbo", "N": 500, "M": 5, "t_N": 10000},
        "problem": {
            "kind": "builtin",
            "function": "rastrigin",
            "dim": 10,
            "shift": 0.0,
            "offset": 0.0,
            "init_low": -3.0,
            "init_high": 3.0,
            "trace_every": 100,
        },
    },
}

_KIND_OF = {
    "rastrigin-bench": "rastrigin",
    "fit-function": "fit",
    "solve-pde": "pde",
    "stability": "stability",
    "scaling": "scaling",
    "optimize": "builtin",
}


def _merge(base, over):
    """Recursive mapping merge; lists and scalars in ``over`` replace ``base``."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path):
    """Parse a YAML/JSON document into a mapping (empty file -> {})."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("", f"config {path} must be a mapping at the top level")
    return doc


def validate(doc):
    """Schema-check a full document; returns the cleaned copy."""
    return _TOP("", doc)


def resolve(command, user=None, seed=None, out=None):
    """Defaults for ``command`` overlaid with ``user`` and the CLI overrides."""
    if command not in DEFAULTS:
        raise ConfigError("", f"unknown command {command!r}")
    user = dict(user or {})
    # validate what the user wrote before merging, so paths point at their text
    _section({"optimizer": lambda p, v: v, "problem": lambda p, v: v, "trials": lambda p, v: v, "output": lambda p, v: v})("", user)
    problem = user.get("problem")
    if isinstance(problem, dict) and "kind" in problem and problem["kind"] != _KIND_OF[command]:
        raise ConfigError("problem.kind", f"{command} needs kind {_KIND_OF[command]!r}, got {problem['kind']!r}")
    optimizer = user.get("optimizer")
    if isinstance(optimizer, dict) and "kind" in optimizer and command != "rastrigin-bench":
        if command in ("fit-function", "solve-pde", "scaling", "stability") and optimizer["kind"] != "adam_cbo":
            raise ConfigError("optimizer.kind", f"{command} runs adam_cbo only, got {optimizer['kind']!r}")
        if command == "optimize" and optimizer["kind"] != DEFAULTS[command]["optimizer"]["kind"]:
            # switching optimizer family drops the other family's defaults
            base = _merge(_COMMON, {"optimizer": {"kind": optimizer["kind"]}, "problem": DEFAULTS[command]["problem"]})
            return _finish(base, user, seed, out)
    base = _merge(_COMMON, DEFAULTS[command])
    return _finish(base, user, seed, out)


def _finish(base, user, seed, out):
    doc = _merge(base, user)
    if seed is not None:
        doc["trials"]["seed"] = seed
    if out is not None:
        doc["output"]["dir"] = out
    return validate(doc)


def config_hash(doc):
    """SHA-256 of the canonical JSON of everything except the output section."""
    body = {k: v for k, v in doc.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
