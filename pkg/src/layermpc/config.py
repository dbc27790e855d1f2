"""Project configuration: JSON schema, loading and object construction."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import jsonschema
import numpy as np

from .controllers import ControllerConfig, Flavor, LayeredMPC, TrackingMPC
from .exceptions import ConfigError
from .polytope import Polytope
from .reachability import LADDER_TOL, LinearSystem, SetLadder
from .simulator import Scenario
from .systems import PRESETS

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_SET = {
    "oneOf": [
        {"type": "object", "required": ["G", "h"], "properties": {"G": _MATRIX, "h": _VECTOR}},
        {"type": "object", "required": ["lb", "ub"], "properties": {"lb": _VECTOR, "ub": _VECTOR}},
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "layermpc project configuration",
    "type": "object",
    "required": ["system", "N", "controllers"],
    "properties": {
        "name": {"type": "string"},
        "system": {
            "type": "object",
            "required": ["A", "B", "X", "U"],
            "properties": {"A": _MATRIX, "B": _MATRIX, "X": _SET, "U": _SET},
        },
        "N": {"type": "integer", "minimum": 1},
        "max_rungs": {"type": "integer", "minimum": 1},
        "controllers": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "type": "object",
                "required": ["N", "Q", "R", "T"],
                "properties": {
                    "N": {"type": "integer", "minimum": 1},
                    "Q": _MATRIX,
                    "R": _MATRIX,
                    "T": _MATRIX,
                    "flavor": {"enum": ["layered", "tracking"]},
                },
            },
        },
        "scenarios": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "x0", "schedule", "T_sim"],
                "properties": {
                    "name": {"type": "string"},
                    "x0": _VECTOR,
                    "schedule": {"type": "array", "minItems": 1,
                                 "items": {"type": "array", "prefixItems": [{"type": "integer"}, _VECTOR]}},
                    "T_sim": {"type": "integer", "minimum": 1},
                    "controllers": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "compare": {
            "type": "object",
            "required": ["controllers"],
            "properties": {
                "controllers": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "points": {"type": "integer", "minimum": 0},
                "setpoint": _VECTOR,
                "T_sim": {"type": "integer", "minimum": 1},
            },
        },
        "tolerances": {"type": "object", "properties": {"ladder": {"type": "number", "exclusiveMinimum": 0}}},
        "output": {"type": "string"},
    },
}


def _set(data) -> Polytope:
    if "lb" in data:
        return Polytope.from_box(data["lb"], data["ub"])
    return Polytope(data["G"], data["h"])


@dataclass
class ProjectConfig:
    raw: dict
    system: LinearSystem
    N: int
    max_rungs: int
    ladder_tol: float
    controllers: dict
    scenarios: dict

    @classmethod
    def from_dict(cls, data: dict, tol_override=None) -> "ProjectConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config does not match schema: {exc.message}") from None
        try:
            s = data["system"]
            system = LinearSystem(np.array(s["A"], dtype=float), np.array(s["B"], dtype=float),
                                  _set(s["X"]), _set(s["U"]))
            controllers = {k: ControllerConfig.from_dict(v) for k, v in data["controllers"].items()}
            scenarios = {sc["name"]: Scenario.from_dict(sc) for sc in data.get("scenarios", [])}
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        for sc in scenarios.values():
            if sc.x0.shape[0] != system.n:
                raise ConfigError(f"scenario {sc.name}: x0 has the wrong dimension")
            for name in sc.controllers:
                if name not in controllers:
                    raise ConfigError(f"scenario {sc.name} names unknown controller {name!r}")
        for name in data.get("compare", {}).get("controllers", []):
            if name not in controllers:
                raise ConfigError(f"compare names unknown controller {name!r}")
        tol = tol_override if tol_override is not None else data.get("tolerances", {}).get("ladder", LADDER_TOL)
        return cls(data, system, int(data["N"]), int(data.get("max_rungs", 50)), float(tol), controllers, scenarios)

    @classmethod
    def load(cls, source: str, tol_override=None) -> "ProjectConfig":
        """Load from a JSON file path or a preset name."""
        if source in PRESETS:
            return cls.from_dict(PRESETS[source](), tol_override)
        if not os.path.exists(source):
            raise ConfigError(f"no config file or preset named {source!r}")
        try:
            with open(source) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data, tol_override)

    def ladder_key(self) -> str:
        blob = json.dumps({"system": self.system.to_dict(), "N": self.N, "tol": self.ladder_tol,
                           "max_rungs": self.max_rungs}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def estimator(self, name: str, ladder: SetLadder):
        cfg = self.controllers[name]
        kw = dict(N=cfg.N, Q=cfg.Q, R=cfg.R, T=cfg.T, ladder=ladder)
        if cfg.flavor is Flavor.LAYERED:
            if cfg.N != ladder.N:
                raise ConfigError(f"controller {name} uses N={cfg.N} but the ladder was built for N={ladder.N}")
            return LayeredMPC(**kw).fit(self.system)
        return TrackingMPC(**kw).fit(self.system)
