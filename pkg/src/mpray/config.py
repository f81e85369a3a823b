"""JSON run configuration: schema, defaults and system construction.

A minimal config is ``{"system": "SYS-E"}``. The full schema is :data:`SCHEMA`; unknown keys
are rejected everywhere.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import catalog
from .geometry import MPSystem


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` is the JSON pointer of the offending value."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


_num = {"type": "number"}
_expr = {"anyOf": [{"type": "string"}, _num]}
_vec = {"type": "array", "items": _expr, "minItems": 2, "maxItems": 3}
_mat = {"type": "array", "items": _vec, "minItems": 2, "maxItems": 3}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}
_tol = {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2}
_count = {"type": "integer", "minimum": 8}

_triple = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"h": _mat, "beta": _vec, "V": _expr},
}

_inline_system = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim"],
    "properties": {
        "name": {"type": "string"},
        "dim": {"enum": [2, 3]},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "metric": _mat,
        "conformal": _expr,
        "alpha": _vec,
        "potential": _expr,
        "energy": _num,
    },
    "not": {"required": ["metric", "conformal"]},
}

_catalog_ref = {
    "type": "object",
    "additionalProperties": False,
    "required": ["catalog"],
    "properties": {
        "catalog": {"enum": sorted(catalog.CATALOG)},
        "params": {"type": "object", "additionalProperties": _num},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["system"],
    "properties": {
        "system": {"oneOf": [{"enum": sorted(catalog.CATALOG)}, _catalog_ref, _inline_system]},
        "seed": {"type": "integer", "minimum": 0},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"rtol": _tol, "atol": _tol, "max_steps": {"type": "integer", "minimum": 100}},
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fan": {"type": "array", "items": _count, "minItems": 2, "maxItems": 2},
                "phase": {"type": "array", "items": _count, "minItems": 3, "maxItems": 3},
                "curvature_fan": {"type": "array", "items": _count, "minItems": 2, "maxItems": 2},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"quick": {"type": "boolean"}},
        },
        "integrate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x": _point,
                "v": _point,
                "boundary_angle": _num,
                "direction_angle": _num,
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "stop_at_exit": {"type": "boolean"},
            },
        },
        "transform": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "triples": {"type": "array", "items": _triple, "minItems": 1},
                "weight": {"enum": ["none", "sqrtP"]},
                "rays": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2,
                                                    "maxItems": 2}},
            },
        },
        "action": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "angles": {"type": "array", "items": _num},
                "min_separation": {"type": "number", "minimum": 0},
            },
        },
        "santalo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"integrand": _triple},
        },
        "curvature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_w": {"type": "integer", "minimum": 4}},
        },
    },
}

DEFAULTS = {
    "seed": 42,
    "integrator": {"rtol": 1e-10, "atol": 1e-12, "max_steps": 200000},
    "grids": {"fan": [8, 8], "phase": [32, 64, 32], "curvature_fan": [16, 16]},
    "verify": {"quick": False},
    "integrate": {"boundary_angle": 3.141592653589793, "direction_angle": 0.3, "stop_at_exit": True},
    "transform": {"triples": [{"V": 1}], "weight": "none"},
    "action": {"angles": [0.1 + k * 1.0471975511965976 for k in range(6)], "min_separation": 0.2},
    "santalo": {"integrand": {"V": 1}},
    "curvature": {"n_w": 16},
}


@dataclass
class RunConfig:
    raw: dict
    system: MPSystem
    seed: int
    sections: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> dict:
        return self.sections[key]

    def echo(self) -> dict:
        """The effective configuration (defaults filled in) for run records."""
        out = copy.deepcopy(self.sections)
        out["system"] = self.raw["system"]
        out["seed"] = self.seed
        return out


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def validate(doc: dict) -> None:
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        # oneOf failures are reported at the parent; descend to the most specific cause
        err = errors[0]
        while err.context:
            err = max(err.context, key=lambda e: len(e.absolute_path))
        raise ConfigError(err.message, _pointer(err.absolute_path))


def build_system(spec) -> MPSystem:
    if isinstance(spec, str):
        return catalog.get(spec)
    if "catalog" in spec:
        try:
            return catalog.get(spec["catalog"], **spec.get("params", {}))
        except TypeError as exc:
            raise ConfigError(str(exc), "/system/params") from None
    kw = {k: spec[k] for k in ("metric", "conformal", "alpha", "potential", "energy") if k in spec}
    return MPSystem.build(spec["dim"], spec.get("radius", 1.0), name=spec.get("name", "custom"), **kw)


def from_dict(doc: dict) -> RunConfig:
    """Validate ``doc``, fill defaults and build the system (expression errors propagate with offsets)."""
    validate(doc)
    sections = {}
    for key, default in DEFAULTS.items():
        if key == "seed":
            continue
        merged = copy.deepcopy(default)
        merged.update(doc.get(key, {}))
        sections[key] = merged
    return RunConfig(doc, build_system(doc["system"]), int(doc.get("seed", DEFAULTS["seed"])), sections)


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    return from_dict(doc)
