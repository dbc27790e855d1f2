"""The two example systems and their standard scenarios/controller settings."""
from __future__ import annotations

import numpy as np

from .polytope import Polytope
from .reachability import LinearSystem


def double_integrator() -> LinearSystem:
    """Sampled double integrator with two inputs, ``|x1| <= 5``, ``|x2| <= 1``, ``|u|_inf <= 0.05``."""
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.array([[0.0, 0.5], [1.0, 0.5]])
    X = Polytope.from_box([-5.0, -1.0], [5.0, 1.0])
    U = Polytope.from_box([-0.05, -0.05], [0.05, 0.05])
    return LinearSystem(A, B, X, U)


def unstable_oscillator() -> LinearSystem:
    """Second-order open-loop unstable system, ``|x|_inf <= 5``, ``|u| <= 1`` (closed bound)."""
    A = np.array([[1.2775, -1.3499], [1.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    X = Polytope.from_box([-5.0, -5.0], [5.0, 5.0])
    U = Polytope.from_box([-1.0], [1.0])
    return LinearSystem(A, B, X, U)


def _box(lb, ub):
    return {"lb": lb, "ub": ub}


def double_integrator_config() -> dict:
    sys = double_integrator()
    weights = {"Q": (0.5 * np.eye(2)).tolist(), "R": (2.0 * np.eye(2)).tolist(), "T": (100.0 * np.eye(2)).tolist()}
    return {
        "name": "double-integrator",
        "system": {"A": sys.A.tolist(), "B": sys.B.tolist(),
                   "X": _box([-5.0, -1.0], [5.0, 1.0]), "U": _box([-0.05, -0.05], [0.05, 0.05])},
        "N": 3,
        "max_rungs": 50,
        "controllers": {
            "layered": {"N": 3, **weights, "flavor": "layered"},
            "mpct_n18": {"N": 18, **weights, "flavor": "tracking"},
            "mpct_n3": {"N": 3, **weights, "flavor": "tracking"},
        },
        "scenarios": [
            {"name": "setpoint-switch", "x0": [-4.9, 0.96],
             "schedule": [[0, [-4.0, 0.0]], [70, [3.5, 0.0]]], "T_sim": 140, "controllers": ["layered"]},
        ],
        "compare": {"controllers": ["layered", "mpct_n18"], "points": 50, "setpoint": [0.0, 0.0], "T_sim": 140},
    }


def unstable_oscillator_config() -> dict:
    sys = unstable_oscillator()
    weights = {"Q": np.eye(2).tolist(), "R": [[10.0]], "T": (100.0 * np.eye(2)).tolist()}
    return {
        "name": "unstable-oscillator",
        "system": {"A": sys.A.tolist(), "B": sys.B.tolist(),
                   "X": _box([-5.0, -5.0], [5.0, 5.0]), "U": _box([-1.0], [1.0])},
        "N": 5,
        "max_rungs": 50,
        "controllers": {
            "layered": {"N": 5, **weights, "flavor": "layered"},
            "mpct_n5": {"N": 5, **weights, "flavor": "tracking"},
            # S_21(Xs, U) is already the whole controllable set, so this baseline has the same domain
            "mpct_n21": {"N": 21, **weights, "flavor": "tracking"},
        },
        "scenarios": [
            {"name": "regulate", "x0": [-4.17, -2.0], "schedule": [[0, [0.0, 0.0]]], "T_sim": 100,
             "controllers": ["layered"]},
        ],
        "compare": {"controllers": ["layered", "mpct_n21"], "points": 50, "setpoint": [0.0, 0.0], "T_sim": 100},
    }


PRESETS = {
    "double-integrator": double_integrator_config,
    "unstable-oscillator": unstable_oscillator_config,
}
