"""Scenario files: schema validation, numeric coercion, config digests.

A scenario is a single JSON document with six blocks (environment, mechanism,
synthesis, solver, simulation, output).  Numeric fields may be given as JSON
numbers or as decimal strings; both parse to binary floating point before
anything downstream sees them, and the config digest is taken over the
parsed, canonicalized structure so key order and number spelling do not
matter.
"""

import hashlib
import json
from dataclasses import dataclass, field

import jsonschema

from .errors import SchemaError

_NUM = {"type": ["number", "string"]}

_RULE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["poly", "tabular"]},
        "coeffs": {"type": "object", "additionalProperties": _NUM},
        "values": {"type": "array"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["environment"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "environment": {
            "type": "object",
            "required": ["horizon", "discount", "state_bounds", "allocation_ranges", "u0", "u1"],
            "additionalProperties": False,
            "properties": {
                "horizon": _NUM,
                "discount": _NUM,
                "state_bounds": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM},
                "grid_bounds": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["period", "lo", "hi"],
                        "properties": {"period": _NUM, "lo": _NUM, "hi": _NUM},
                        "additionalProperties": False,
                    },
                },
                "allocation_ranges": {"type": "array",
                                      "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                "items": _NUM}},
                "kernels": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["affine-uniform", "tabular"]},
                            "c1": _NUM, "c2": _NUM, "w": _NUM,
                            "prev_points": {"type": "array"},
                            "alloc_points": {"type": "array"},
                            "next_points": {"type": "array"},
                            "density": {"type": "array"},
                        },
                        "additionalProperties": False,
                    },
                },
                "u0": {"type": ["object", "array"]},
                "u1": {"type": ["object", "array"]},
                "initial_density": {
                    "type": "object",
                    "properties": {"kind": {"enum": ["uniform", "poly"]},
                                   "coeffs": {"type": "array", "items": _NUM}},
                    "additionalProperties": False,
                },
                "memory_final": {"type": "boolean"},
            },
        },
        "mechanism": {
            "type": "object",
            "required": ["alpha", "phi", "xi", "rho"],
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "array", "items": _RULE},
                "phi": {"type": "array", "items": _RULE},
                "xi": {"type": "array", "items": _RULE},
                "rho": {"type": "array", "items": _NUM},
            },
        },
        "synthesis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "anchors": {"type": ["string", "array"]},
                "eta": {"type": "array", "items": _NUM},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": _NUM,
                "tie_tol": _NUM,
                "ic_tolerance": _NUM,
                "strict_literal": {"type": "boolean"},
                "lipschitz_bound": _NUM,
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"paths": _NUM, "seed": _NUM},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"directory": {"type": "string"}, "format": {"enum": ["csv", "json"]}},
        },
    },
}


@dataclass
class ScenarioConfig:
    environment: dict
    mechanism: dict = None
    synthesis: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    name: str = ""
    raw: dict = field(default_factory=dict)


def _coerce(obj):
    """Recursively parse numeric strings to float; leave other values alone."""
    if isinstance(obj, dict):
        return {k: _coerce(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_coerce(v) for v in obj]
    if isinstance(obj, str):
        try:
            return float(obj)
        except ValueError:
            return obj
    return obj


def _cross_checks(cfg):
    env = cfg.environment
    T = int(env["horizon"])
    if len(env.get("kernels", [])) != max(T - 1, 0):
        raise SchemaError(f"expected {T - 1} kernels for horizon {T}")
    if len(env["allocation_ranges"]) != T:
        raise SchemaError("allocation_ranges must list one range per period")
    lo, hi = (float(v) for v in env["state_bounds"])
    if not lo < hi:
        raise SchemaError("state_bounds must satisfy lo < hi")
    for r in env["allocation_ranges"]:
        if not float(r[0]) < float(r[1]):
            raise SchemaError("allocation range must satisfy lo < hi")
    if cfg.mechanism:
        for key in ("alpha", "phi", "xi"):
            if len(cfg.mechanism[key]) != T:
                raise SchemaError(f"mechanism block {key} must list one rule per period")
        if len(cfg.mechanism["rho"]) != T:
            raise SchemaError("rho must have one entry per period")
        if float(cfg.mechanism["rho"][-1]) != 0.0:
            raise SchemaError("rho at the final period must be exactly 0")
    if cfg.synthesis.get("eta") is not None and len(cfg.synthesis["eta"]) not in (T, T - 1):
        raise SchemaError("synthesis eta must have T or T-1 entries")


def parse_scenario(doc, name=""):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"scenario failed schema validation: {exc.message}") from exc
    doc = _coerce(doc)
    cfg = ScenarioConfig(
        environment=doc["environment"],
        mechanism=doc.get("mechanism"),
        synthesis=doc.get("synthesis", {}),
        solver=doc.get("solver", {}),
        simulation=doc.get("simulation", {}),
        output=doc.get("output", {}),
        name=doc.get("name", name),
        raw=doc,
    )
    _cross_checks(cfg)
    return cfg


def load_scenario(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(doc, name=str(path))


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, list):
        return [_canonical(v) for v in obj]
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, float)):
        return float(obj)
    return obj


def config_digest(cfg):
    """sha256 over the canonical JSON form (sorted keys, numbers as floats)."""
    raw = cfg.raw if isinstance(cfg, ScenarioConfig) else cfg
    blob = json.dumps(_canonical(raw), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
