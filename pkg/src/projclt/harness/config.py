"""Experiment configuration: one JSON document, validated against a versioned schema."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

import jsonschema

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised for schema violations, bad overrides and infeasible budgets."""


_POSITIVE_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "root_seed", "sources", "grid", "budgets", "checks"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "root_seed": {"type": "integer", "minimum": 0},
        "sources": {
            "type": "object", "minProperties": 1,
            "additionalProperties": {
                "type": "object", "required": ["kind"],
                "properties": {"kind": {"enum": ["iid-marginal", "sphere-uniform", "orthogonal-support",
                                                 "deterministic-point", "empirical-dataset"]}},
            },
        },
        "grid": {
            "type": "object", "additionalProperties": False, "required": ["n", "k", "t"],
            "properties": {"n": _INT_LIST, "k": _INT_LIST, "t": _NUM_LIST,
                           "epsilon": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                       "minItems": 1}},
        },
        "budgets": {
            "type": "object", "additionalProperties": False,
            "properties": {name: _POSITIVE_INT for name in
                           ("reps", "n_outer", "m_inner", "m_samples", "n_pairs", "n_samples", "var_reps",
                            "gkp_points", "logdev_samples")},
        },
        "constants": {
            "type": "object", "additionalProperties": False,
            "properties": {name: {"type": "number", "exclusiveMinimum": 0}
                           for name in ("thm1", "thm2", "thm5", "cor1")},
        },
        "checks": {
            "type": "array", "minItems": 1,
            "items": {"oneOf": [
                {"type": "string"},
                {"type": "object", "additionalProperties": False, "required": ["name"],
                 "properties": {"name": {"type": "string"},
                                "sources": {"type": "array", "items": {"type": "string"}, "minItems": 1}}},
            ]},
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {"estimates": {"type": "array", "items": {"enum": ["expected_w2", "expected_kl"]}}},
        },
        "runtime_ceiling_s": {"type": "number", "exclusiveMinimum": 0},
        "output": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
}

DEFAULT_BUDGETS = {"reps": 8, "n_outer": 2000, "m_inner": 2048, "m_samples": 20000, "n_pairs": 20000,
                   "n_samples": 20000, "var_reps": 64, "gkp_points": 10000, "logdev_samples": 100000}
DEFAULT_CONSTANTS = {"thm1": 40.0, "thm2": 3.0, "thm5": 10.0, "cor1": 40.0}


def default_config_path() -> Path:
    return Path(str(resources.files("projclt.harness").joinpath("default_config.json")))


def load_default() -> dict:
    return json.loads(default_config_path().read_text())


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(cfg: Mapping, overrides: Iterable[str]) -> dict:
    """Set dotted keys, e.g. ``constants.thm2=0.001`` or ``grid.n=[64,256]``."""
    out = copy.deepcopy(dict(cfg))
    for item in overrides or ():
        path, value = parse_override(item)
        node = out
        for part in path[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not an object")
            node = nxt
        node[path[-1]] = value
    return out


def validate(cfg: Mapping) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    from .checks import REGISTRY

    for entry in cfg["checks"]:
        name = entry if isinstance(entry, str) else entry["name"]
        if name not in REGISTRY:
            raise ConfigError(f"unknown check {name!r}; registered: {sorted(REGISTRY)}")
        if isinstance(entry, dict):
            for s in entry.get("sources", []):
                if s not in cfg["sources"]:
                    raise ConfigError(f"check {name!r} names unknown source {s!r}")
    full = copy.deepcopy(dict(cfg))
    full["budgets"] = {**DEFAULT_BUDGETS, **cfg.get("budgets", {})}
    full["constants"] = {**DEFAULT_CONSTANTS, **cfg.get("constants", {})}
    full["grid"].setdefault("epsilon", [1.0])
    return full


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
                seed: Optional[int] = None) -> dict:
    """Read (or take the bundled default), apply overrides and the seed, validate."""
    if path is None:
        raw = load_default()
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = apply_overrides(raw, overrides)
    if seed is not None:
        cfg["root_seed"] = int(seed)
    return validate(cfg)
