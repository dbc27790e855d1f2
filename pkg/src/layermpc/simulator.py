"""Closed-loop simulation, the performance index and controller comparison.

``simulate`` applies a fitted controller in receding horizon on the nominal
model and, unless told otherwise, checks at every step the properties the
layered controller is supposed to have: admissibility, non-increasing layer
index, the within-layer cost decrease bound and, in layer mode, that the
artificial set point sits on the target.
"""
from __future__ import annotations

import copy
import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .controllers import ControlStep, Flavor, build_layered_qp, distance_to_set
from .exceptions import ControllerFailure, LayerMPCError, NumericalFailure, OutsideDomain, SamplingStalled
from .polytope import SET_TOL
from .qp import QP_TOL, solve_qp
from .reachability import LinearSystem, Mode, SetLadder, layer_of

logger = logging.getLogger(__name__)

DECREASE_SLACK = 10 * QP_TOL

TRAJECTORY_FIELDS = ["step", "x1", "x2", "u1", "u2", "mode", "layer", "cost", "dQ", "setpoint1", "setpoint2"]
COMPARISON_FIELDS = ["point_id", "x0_1", "x0_2", "controller", "phi", "status"]


class InvariantViolation(LayerMPCError, AssertionError):
    pass


@dataclass
class Scenario:
    """Initial state, set-point schedule ``[(time, x*), ...]`` and horizon length."""

    name: str
    x0: np.ndarray
    schedule: list
    T_sim: int
    system: str = ""
    controllers: list = field(default_factory=list)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.schedule = [(int(t), np.asarray(sp, dtype=float)) for t, sp in self.schedule]
        times = [t for t, _ in self.schedule]
        if not times or times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule times must start at 0 and be strictly increasing")
        if self.T_sim < 1:
            raise ValueError("T_sim must be positive")

    def setpoint(self, i: int) -> np.ndarray:
        active = self.schedule[0][1]
        for t, sp in self.schedule:
            if t <= i:
                active = sp
        return active

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "system": self.system,
            "x0": self.x0.tolist(),
            "schedule": [[t, sp.tolist()] for t, sp in self.schedule],
            "T_sim": self.T_sim,
            "controllers": list(self.controllers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            name=data["name"],
            x0=data["x0"],
            schedule=data["schedule"],
            T_sim=int(data["T_sim"]),
            system=data.get("system", ""),
            controllers=data.get("controllers", []),
        )


@dataclass
class StepRecord:
    step: int
    x: np.ndarray
    u: np.ndarray
    mode: str
    layer: int
    cost: float
    dQ: float
    setpoint: np.ndarray
    qp_status: str


@dataclass
class Trajectory:
    records: list
    feasible: bool
    failure_step: Optional[int] = None
    failure: str = ""

    @property
    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def inputs(self) -> np.ndarray:
        return np.array([r.u for r in self.records])

    @property
    def layers(self) -> list:
        return [r.layer for r in self.records]

    def final_error(self) -> float:
        if not self.records:
            return np.nan
        last = self.records[-1]
        return float(np.linalg.norm(last.x - last.setpoint))

    def steps_to_tracking(self) -> Optional[int]:
        for r in self.records:
            if r.layer == 0:
                return r.step
        return None

    def steps_per_layer(self) -> dict:
        out: dict = {}
        for r in self.records:
            out[r.layer] = out.get(r.layer, 0) + 1
        return out

    def summary(self) -> dict:
        return {
            "feasible": self.feasible,
            "failure_step": self.failure_step,
            "failure": self.failure,
            "steps": len(self.records),
            "steps_to_tracking": self.steps_to_tracking(),
            "steps_per_layer": {str(k): v for k, v in sorted(self.steps_per_layer().items())},
            "final_error": self.final_error(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_FIELDS)
        for r in self.records:
            u = [repr(float(v)) for v in r.u] + [""] * (2 - r.u.size)
            w.writerow(
                [r.step, repr(float(r.x[0])), repr(float(r.x[1])), *u[:2], r.mode, r.layer,
                 repr(float(r.cost)), repr(float(r.dQ)), repr(float(r.setpoint[0])), repr(float(r.setpoint[1]))]
            )
        return buf.getvalue()


def read_trajectory_csv(text: str) -> list:
    """Parse a trajectory CSV back into dicts with typed fields."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        if list(row.keys()) != TRAJECTORY_FIELDS:
            raise ValueError("unexpected trajectory columns")
        parsed = {}
        for k, v in row.items():
            if k in ("step", "layer"):
                parsed[k] = int(v)
            elif k == "mode":
                parsed[k] = v
            else:
                parsed[k] = float(v) if v != "" else np.nan
        out.append(parsed)
    return out


def _violate(msg, strict):
    if strict:
        raise InvariantViolation(msg)
    warnings.warn(msg, RuntimeWarning)


def _target_distance(step: ControlStep, x, ladder: SetLadder, Q) -> float:
    if step.mode.tracking:
        d = x - step.artificial_setpoint
        return float(d @ Q @ d)
    return distance_to_set(x, ladder.rungs[step.mode.layer], Q)


def simulate(controller, scenario: Scenario, check_invariants: bool = True, strict: bool = True) -> Trajectory:
    """Run ``controller`` (a fitted ``LayeredMPC`` or ``TrackingMPC``) on ``scenario``.

    Records ``T_sim + 1`` steps (the input at the final state is computed so
    the performance index can use it). A baseline controller that becomes
    infeasible ends the run with ``feasible=False``; the layered controller
    raises :class:`ControllerFailure` instead, since infeasibility there is a
    bug. ``strict=False`` turns invariant violations into warnings.
    """
    ladder: SetLadder = controller.ladder_
    sys: LinearSystem = ladder.system
    cfg = controller.config_
    layered = cfg.flavor is Flavor.LAYERED
    x = scenario.x0.copy()
    if layered:
        layer_of(x, ladder)  # raises OutsideDomain
    controller.reset()
    records = []
    prev = None
    for i in range(scenario.T_sim + 1):
        sp = scenario.setpoint(i)
        try:
            step = controller.step(x, sp)
        except NumericalFailure as exc:
            if layered:
                raise ControllerFailure(i, str(exc)) from exc
            return Trajectory(records, False, i, str(exc))
        except OutsideDomain as exc:
            if layered or i == 0:
                raise
            return Trajectory(records, False, i, str(exc))
        if not step.solution.optimal:
            if layered:
                raise ControllerFailure(i, "QP infeasible")
            return Trajectory(records, False, i, "QP infeasible")
        dq = _target_distance(step, x, ladder, cfg.Q)
        rec = StepRecord(i, x.copy(), step.u0.copy(), str(step.mode), step.mode.layer,
                         step.optimal_cost, dq, sp.copy(), step.qp_status.value)
        if check_invariants:
            _check_step(rec, step, prev, sys, ladder, cfg, layered, strict)
        records.append(rec)
        prev = (rec, step)
        if i < scenario.T_sim:
            x = sys.step(x, step.u0)
    return Trajectory(records, True)


def _check_step(rec, step, prev, sys, ladder, cfg, layered, strict):
    i = rec.step
    if not sys.X.contains(rec.x, SET_TOL):
        _violate(f"step {i}: state {rec.x} leaves X", strict)
    if not sys.U.contains(rec.u, SET_TOL):
        _violate(f"step {i}: input {rec.u} leaves U", strict)
    if step.solution.kkt_residual > QP_TOL:
        _violate(f"step {i}: KKT residual {step.solution.kkt_residual:.2e}", strict)
    if not layered:
        return
    if not step.mode.tracking and np.linalg.norm(step.artificial_setpoint - rec.setpoint) > 1e-6:
        _violate(f"step {i}: artificial set point off target in {rec.mode}", strict)
    if prev is None:
        return
    prec, pstep = prev
    if rec.layer > prec.layer:
        _violate(f"step {i}: layer index rose from {prec.layer} to {rec.layer}", strict)
    if prec.layer > 0:
        value = layer_value(rec.x, prec, ladder, cfg)
        bound = -prec.dQ + DECREASE_SLACK
        if value - prec.cost > bound:
            _violate(f"step {i}: cost change {value - prec.cost:.3e} exceeds {bound:.3e}", strict)


def layer_value(x, prev: StepRecord, ladder: SetLadder, cfg) -> float:
    """Optimal cost at ``x`` of the problem solved at ``prev`` (same layer, same set point).

    The successor may already sit in a lower layer, where the controller solves
    a different problem; the decrease bound concerns the layer of ``prev``.
    """
    p = build_layered_qp(x, prev.setpoint, ladder, cfg, Mode(prev.layer))
    sol = solve_qp(p)
    if not sol.optimal:
        raise NumericalFailure(f"layer {prev.layer} problem infeasible at its own successor {x}")
    return sol.value


def steady_input(sys: LinearSystem, x_star) -> np.ndarray:
    """Input holding ``x_star`` at rest (least-squares solution of ``B u = (I - A) x*``)."""
    x_star = np.asarray(x_star, dtype=float)
    return np.linalg.lstsq(sys.B, (np.eye(sys.n) - sys.A) @ x_star, rcond=None)[0]


def performance_index(traj: Trajectory, x_star=None, u_star=None, sys: Optional[LinearSystem] = None) -> float:
    """Time-averaged ``|x(k) - x*|_inf + |u(k) - u*|_inf`` over ``k = 1..T_sim``.

    ``x_star`` defaults to each step's active set point and ``u_star`` to the
    matching steady input (needs ``sys``).
    """
    recs = traj.records[1:]
    if not recs:
        return 0.0
    total = 0.0
    for r in recs:
        xs = r.setpoint if x_star is None else np.asarray(x_star, dtype=float)
        if u_star is None:
            if sys is None:
                raise ValueError("pass u_star or sys")
            us = steady_input(sys, xs)
        else:
            us = np.asarray(u_star, dtype=float)
        total += np.max(np.abs(r.x - xs)) + np.max(np.abs(r.u - us))
    return float(total / len(recs))


def sample_domain(ladder: SetLadder, count: int, seed: int = 0, max_draws: Optional[int] = None) -> np.ndarray:
    """``count`` points drawn uniformly from the ladder's outer set by rejection sampling."""
    n = ladder.system.n
    if count <= 0:
        return np.zeros((0, n))
    P = ladder.domain
    lb, ub = P.bounding_box()
    rng = np.random.default_rng(seed)
    accepted = []
    drawn = 0
    max_draws = max_draws or max(100_000, 2000 * count)
    batch = max(64, 4 * count)
    while len(accepted) < count:
        Z = rng.uniform(lb, ub, size=(batch, n))
        drawn += batch
        accepted.extend(Z[P.contains_many(Z, 0.0)])
        if drawn >= 1000 and len(accepted) < 1e-3 * drawn:
            raise SamplingStalled(f"acceptance rate {len(accepted) / drawn:.2e} below 0.1%")
        if drawn > max_draws:
            raise SamplingStalled("draw budget exhausted")
    return np.array(accepted[:count])


@dataclass
class ComparisonTable:
    names: list
    points: np.ndarray
    phi: dict  # name -> array (NaN where the controller failed)
    status: dict  # name -> list of "ok" / "N/A" / "failed"
    seed: Optional[int] = None

    def mean(self, name) -> float:
        vals = self.phi[name][~np.isnan(self.phi[name])]
        return float(vals.mean()) if vals.size else np.nan

    def failures(self, name) -> int:
        return sum(s != "ok" for s in self.status[name])

    def means(self) -> dict:
        return {
            "seed": self.seed,
            "points": int(len(self.points)),
            "controllers": {
                n: {"mean_phi": self.mean(n), "failures": self.failures(n)} for n in self.names
            },
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARISON_FIELDS)
        for k, p in enumerate(self.points):
            for n in self.names:
                val = self.phi[n][k]
                w.writerow([k, repr(float(p[0])), repr(float(p[1])), n,
                            "N/A" if np.isnan(val) else repr(float(val)), self.status[n][k]])
        return buf.getvalue()


def read_comparison_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        if list(row.keys()) != COMPARISON_FIELDS:
            raise ValueError("unexpected comparison columns")
        row["point_id"] = int(row["point_id"])
        row["x0_1"] = float(row["x0_1"])
        row["x0_2"] = float(row["x0_2"])
        row["phi"] = np.nan if row["phi"] == "N/A" else float(row["phi"])
    return rows


def _run_point(controller, x0, x_star, T_sim, check_invariants):
    ctl = copy.deepcopy(controller)
    sc = Scenario("point", x0, [(0, x_star)], T_sim)
    try:
        traj = simulate(ctl, sc, check_invariants=check_invariants)
    except OutsideDomain:
        return np.nan, "N/A"
    if not traj.feasible:
        return np.nan, "N/A" if traj.failure_step == 0 else "failed"
    return performance_index(traj, sys=ctl.ladder_.system), "ok"


def compare(points: Sequence, controllers: dict, x_star, T_sim: int, seed=None,
            check_invariants: bool = True, n_jobs: int = 1) -> ComparisonTable:
    """Index of every controller from every initial point, steering to ``x_star``.

    Points a controller cannot handle at step 0 are recorded as ``N/A``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    names = list(controllers)
    phi, status = {}, {}
    for name in names:
        res = Parallel(n_jobs=n_jobs)(
            delayed(_run_point)(controllers[name], p, x_star, T_sim, check_invariants) for p in points
        )
        phi[name] = np.array([r[0] for r in res], dtype=float)
        status[name] = [r[1] for r in res]
    return ComparisonTable(names, points, phi, status, seed)
