"""Experiment configuration: schema validation, overrides, and hashing.

One JSON document describes one experiment. validate_config fills defaults,
rejects unknown keys at every level, and raises ConfigError with a message
naming the offending field by its dotted path, so the CLI can print schema
diagnostics without a traceback. The normalized form (defaults filled, keys
complete) is what gets hashed into the run manifest: two config files that
spell the same experiment differently hash identically.
"""

import copy
import hashlib
import json
from dataclasses import fields

from .costs import cost_terms_from_config
from .experiments import DEFAULT_SHAPE_PARAMS
from .ilqr import SolverOptions
from .levitation import TrapParams
from .plants import PLANTS
from .shapes import SHAPES, make_shape

__all__ = [
    "ConfigError",
    "EXPERIMENT_KINDS",
    "load_config",
    "parse_override_tokens",
    "apply_overrides",
    "validate_config",
    "config_hash",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


EXPERIMENT_KINDS = (
    "analyze",
    "fitts-sweep",
    "levitate",
    "lqg-reach",
    "mpc-perturb",
    "mpc-reach",
)

_REQUIRED = object()


def _fail(path, message):
    raise ConfigError(f"{path}: {message}")


def _number(value, path, minimum=None, exclusive_minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if value != value:
        _fail(path, "must not be NaN")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value:g}")
    if exclusive_minimum is not None and value <= exclusive_minimum:
        _fail(path, f"must be > {exclusive_minimum}, got {value:g}")
    if maximum is not None and value > maximum:
        _fail(path, f"must be <= {maximum}, got {value:g}")
    return value


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _string(value, path, choices=None):
    if not isinstance(value, str):
        _fail(path, f"expected a string, got {type(value).__name__}")
    if choices is not None and value not in choices:
        _fail(path, f"expected one of {', '.join(sorted(choices))}, got {value!r}")
    return value


def _number_list(value, path, exclusive_minimum=None, minimum=None):
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, "expected a non-empty list of numbers")
    return [
        _number(v, f"{path}[{i}]", minimum=minimum,
                exclusive_minimum=exclusive_minimum)
        for i, v in enumerate(value)
    ]


def _int_list(value, path, minimum=None):
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, "expected a non-empty list of integers")
    return [_integer(v, f"{path}[{i}]", minimum=minimum) for i, v in enumerate(value)]


def _object(value, path):
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    for key in value:
        if not isinstance(key, str):
            _fail(path, f"object keys must be strings, got {key!r}")
    return dict(value)


def _optional(check, **kwargs):
    def checker(value, path):
        if value is None:
            return None
        return check(value, path, **kwargs)

    return checker


def _with(check, **kwargs):
    def checker(value, path):
        return check(value, path, **kwargs)

    return checker


def _dataclass_overrides(cls, skip=()):
    """Checker for a dict of overrides for cls's fields. Unknown keys are
    named; value errors from the dataclass's own validation are re-raised
    under the config path."""
    allowed = {f.name for f in fields(cls)} - set(skip)

    def checker(value, path):
        value = _object(value, path)
        for key in value:
            if key in skip:
                _fail(f"{path}.{key}", "not settable here")
            if key not in allowed:
                _fail(f"{path}.{key}", f"unknown field for {cls.__name__}")
        for key, v in value.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                _fail(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
        try:
            cls(**value)
        except ValueError as exc:
            _fail(path, str(exc))
        return {k: float(v) for k, v in value.items()}

    return checker


def _noise_dict(value, path):
    value = _object(value, path)
    for key in value:
        if key != "signal_dependent_scale":
            _fail(f"{path}.{key}", "unknown field (only signal_dependent_scale)")
    out = {}
    if "signal_dependent_scale" in value:
        out["signal_dependent_scale"] = _number(
            value["signal_dependent_scale"], f"{path}.signal_dependent_scale",
            minimum=0.0,
        )
    return out


def _solver_dict(value, path):
    value = _object(value, path)
    allowed = {f.name for f in fields(SolverOptions)} - {"line_search_steps"}
    for key in value:
        if key not in allowed:
            _fail(f"{path}.{key}", "unknown solver option")
    try:
        SolverOptions(**value)
    except ValueError as exc:
        _fail(path, str(exc))
    return dict(value)


def _cost_list(value, path):
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, "expected a non-empty list of cost term objects")
    try:
        cost_terms_from_config(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return [dict(entry) for entry in value]


_PLANT_PARAM_CHECKS = {
    name: _dataclass_overrides(PLANTS[name], skip=("dt", "control_bounds", "max_torque"))
    for name in ("point-mass-1d", "two-link-arm")
}

_COMMON = {
    "seed": (0, _with(_integer, minimum=0)),
    "output_dir": (None, _optional(_string)),
}

_SCHEMAS = {
    "lqg-reach": {
        **_COMMON,
        "sigma_us": ([0.1, 0.2, 0.4], _with(_number_list, exclusive_minimum=0.0)),
        "n_trials": (10000, _with(_integer, minimum=1)),
        "distance": (0.15, _with(_number, exclusive_minimum=0.0)),
        "horizon": (80, _with(_integer, minimum=2)),
        "dt": (0.01, _with(_number, exclusive_minimum=0.0)),
    },
    "fitts-sweep": {
        **_COMMON,
        "mode": ("mpc", _with(_string, choices=("mpc", "lqg"))),
        "ids": (None, _optional(_number_list, exclusive_minimum=0.0)),
        "distance": (0.15, _with(_number, exclusive_minimum=0.0)),
        "distances": (None, _optional(_number_list, exclusive_minimum=0.0)),
        "widths": (None, _optional(_number_list, exclusive_minimum=0.0)),
        "n_trials": (20, _with(_integer, minimum=1)),
        "sigma_u": (0.2, _with(_number, exclusive_minimum=0.0)),
        "dt": (0.01, _with(_number, exclusive_minimum=0.0)),
        "max_wall_steps": (2000, _with(_integer, minimum=1)),
    },
    "mpc-reach": {
        **_COMMON,
        "plant": ("two-link-arm", _with(_string, choices=("point-mass-1d", "two-link-arm"))),
        "plant_params": ({}, None),
        "distance": (0.15, _with(_number, exclusive_minimum=0.0)),
        "dt": (0.01, _with(_number, exclusive_minimum=0.0)),
        "planning_horizon": (60, _with(_integer, minimum=1)),
        "apply_steps": (1, _with(_integer, minimum=1)),
        "target_radius": (0.01, _with(_number, exclusive_minimum=0.0)),
        "max_speed": (5.0, _with(_number, exclusive_minimum=0.0)),
        "max_wall_steps": (600, _with(_integer, minimum=1)),
        "noise": ({}, _noise_dict),
        "cost": (None, _optional(_cost_list)),
        "solver": ({}, _solver_dict),
    },
    "mpc-perturb": {
        **_COMMON,
        "n_runs": (10, _with(_integer, minimum=1)),
        "perturbation_size": (0.05, _with(_number, exclusive_minimum=0.0)),
        "dt": (0.01, _with(_number, exclusive_minimum=0.0)),
        "planning_horizon": (60, _with(_integer, minimum=1)),
        "target_radius": (0.01, _with(_number, exclusive_minimum=0.0)),
        "max_wall_steps": (600, _with(_integer, minimum=1)),
    },
    "levitate": {
        **_COMMON,
        "shape": (_REQUIRED, _with(_string, choices=tuple(SHAPES))),
        "shape_params": ({}, _object),
        "trap": ({}, _dataclass_overrides(TrapParams)),
        "n_grid": (1000, _with(_integer, minimum=16)),
        "output_rate": (10000.0, _with(_number, exclusive_minimum=0.0)),
        "safety_margin": (None, _optional(_number, minimum=0.0, maximum=0.5)),
        "cycles": (10, _with(_integer, minimum=1)),
        "warmup_cycles": (3, _with(_integer, minimum=0)),
    },
    "analyze": {
        **_COMMON,
        "operation": (
            _REQUIRED,
            _with(_string, choices=("fitts", "power-law", "velocity-profile")),
        ),
        "input": (_REQUIRED, _string),
        "position_columns": (None, _optional(_int_list, minimum=0)),
        "dt": (None, _optional(_number, exclusive_minimum=0.0)),
        "window": (5, _with(_integer, minimum=1)),
        "peak_threshold_fraction": (
            0.05,
            _with(_number, exclusive_minimum=0.0, maximum=1.0),
        ),
        "crossing_deadband_fraction": (
            0.05,
            _with(_number, exclusive_minimum=0.0, maximum=1.0),
        ),
    },
}


def _extra_fitts(cfg):
    has_grid = cfg["distances"] is not None or cfg["widths"] is not None
    if has_grid:
        if cfg["distances"] is None or cfg["widths"] is None:
            _fail("distances", "distances and widths must be given together")
        if cfg["ids"] is not None:
            _fail("ids", "ids cannot be combined with a distances/widths grid")
    elif cfg["ids"] is None:
        cfg["ids"] = [1.5, 2.2, 2.9, 3.6, 4.3, 5.0]


def _extra_mpc_reach(cfg):
    check = _PLANT_PARAM_CHECKS[cfg["plant"]]
    cfg["plant_params"] = check(cfg["plant_params"], "plant_params")
    if cfg["apply_steps"] > cfg["planning_horizon"]:
        _fail("apply_steps", "must not exceed planning_horizon")


def _extra_levitate(cfg):
    if cfg["warmup_cycles"] >= cfg["cycles"]:
        _fail("warmup_cycles", "must be smaller than cycles")
    for key, value in cfg["shape_params"].items():
        if isinstance(value, bool) or not isinstance(value, (int, float, list)):
            _fail(f"shape_params.{key}", "expected a number or a list")
    merged = dict(DEFAULT_SHAPE_PARAMS.get(cfg["shape"], {}))
    merged.update(cfg["shape_params"])
    try:
        make_shape(cfg["shape"], **merged)
    except (TypeError, ValueError) as exc:
        _fail("shape_params", str(exc))


def _extra_analyze(cfg):
    if cfg["operation"] in ("power-law", "velocity-profile"):
        if cfg["position_columns"] is None:
            _fail(
                "position_columns",
                f"required for operation {cfg['operation']!r} "
                "(which state columns hold positions)",
            )


_EXTRA_CHECKS = {
    "fitts-sweep": _extra_fitts,
    "mpc-reach": _extra_mpc_reach,
    "levitate": _extra_levitate,
    "analyze": _extra_analyze,
}


def load_config(path):
    """Parse a JSON config file into a raw dict; failures are ConfigError."""
    try:
        with open(path, "r") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file: top level must be a JSON object")
    return raw


def parse_override_tokens(tokens):
    """`--path value` and `--path=value` pairs into (dotted path, text)."""
    pairs = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or len(token) <= 2:
            raise ConfigError(f"overrides: expected --field value, got {token!r}")
        body = token[2:]
        if "=" in body:
            path, text = body.split("=", 1)
            i += 1
        else:
            path = body
            if i + 1 >= len(tokens):
                raise ConfigError(f"overrides: missing value for --{path}")
            text = tokens[i + 1]
            i += 2
        if not path:
            raise ConfigError(f"overrides: empty field name in {token!r}")
        pairs.append((path, text))
    return pairs


def apply_overrides(raw, pairs):
    """Set dotted-path fields on a raw config dict.

    Values parse as JSON when possible (numbers, booleans, lists) and fall
    back to plain strings, so `--shape circle` and `--trap.mass 1e-6` both
    do the obvious thing. Returns a new dict.
    """
    out = copy.deepcopy(raw)
    for path, text in pairs:
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        parts = path.split(".")
        node = out
        for j, part in enumerate(parts[:-1]):
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out


def validate_config(raw):
    """Normalize and validate a raw config dict.

    Returns the normalized config (all defaults filled). Unknown keys are
    rejected at every level; messages name the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    kind = raw.get("kind")
    if kind is None:
        raise ConfigError("kind: required")
    if kind not in _SCHEMAS:
        raise ConfigError(
            f"kind: expected one of {', '.join(EXPERIMENT_KINDS)}, got {kind!r}"
        )
    schema = _SCHEMAS[kind]
    for key in sorted(set(raw) - {"kind"} - set(schema)):
        raise ConfigError(f"{key}: unknown field for kind {kind!r}")
    cfg = {"kind": kind}
    for field, (default, check) in schema.items():
        if field in raw:
            value = raw[field]
            cfg[field] = check(value, field) if check is not None else value
        elif default is _REQUIRED:
            raise ConfigError(f"{field}: required for kind {kind!r}")
        else:
            cfg[field] = copy.deepcopy(default)
    extra = _EXTRA_CHECKS.get(kind)
    if extra is not None:
        extra(cfg)
    return cfg


def config_hash(cfg):
    """sha256 of the canonical JSON form of a normalized config."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
