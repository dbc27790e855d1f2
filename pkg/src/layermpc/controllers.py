"""Layered tracking MPC and the terminal-equality MPC-for-tracking baseline.

Both controllers share the cost

    sum_j |x_j - xa_j|_Q^2 + |u_j - ua_j|_R^2 + |x_s - x*|_T^2

and differ in their constraints. The layered controller picks its target set
from the ladder: inside ``S_N`` the target collapses to the artificial steady
state (and the problem *is* the baseline); in layer ``k`` the terminal state
and the auxiliary sequences are bound to rung ``S_kN`` and its input set.

QPs are condensed: predicted states are affine in the input sequence.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptySet, NumericalFailure, OutsideDomain, SetpointNotEquilibrium
from .polytope import SET_TOL, Polytope
from .qp import QpProblem, QpSolution, QpStatus, solve_qp
from .reachability import (
    LADDER_TOL,
    TRACKING,
    LinearSystem,
    Mode,
    SetLadder,
    build_ladder,
    equilibrium_set,
    layer_of,
)
from .validation import check_spd, check_state, check_states


class Flavor(str, enum.Enum):
    LAYERED = "layered"
    TRACKING = "tracking"


@dataclass
class ControllerConfig:
    N: int
    Q: np.ndarray
    R: np.ndarray
    T: np.ndarray
    flavor: Flavor = Flavor.LAYERED

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("horizon N must be at least 1")
        self.N = int(self.N)
        self.Q = check_spd(self.Q, "Q")
        self.R = check_spd(self.R, "R")
        self.T = check_spd(self.T, "T")
        self.flavor = Flavor(self.flavor)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "T": self.T.tolist(),
            "flavor": self.flavor.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerConfig":
        return cls(data["N"], data["Q"], data["R"], data["T"], data.get("flavor", "layered"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class ControlStep:
    u0: np.ndarray
    mode: Mode
    optimal_cost: float
    artificial_setpoint: np.ndarray
    predicted_states: np.ndarray
    aux_states: np.ndarray
    aux_inputs: np.ndarray
    qp_status: QpStatus
    qp: Optional[QpProblem] = field(default=None, repr=False)
    solution: Optional[QpSolution] = field(default=None, repr=False)


def prediction_matrices(A, B, N):
    """``x_j = Phi[j] x + Gam[j] u`` for ``j = 0..N`` with ``u`` the stacked inputs."""
    n, m = B.shape
    Phi = np.zeros((N + 1, n, n))
    Gam = np.zeros((N + 1, n, N * m))
    Phi[0] = np.eye(n)
    for j in range(1, N + 1):
        Phi[j] = A @ Phi[j - 1]
        Gam[j] = A @ Gam[j - 1]
        Gam[j][:, (j - 1) * m : j * m] = B
    return Phi, Gam


class _CostBuilder:
    """Accumulates ``sum_k |M_k z + c_k|_{W_k}^2`` into ``1/2 z'Hz + g'z + const``."""

    def __init__(self, nz):
        self.H = np.zeros((nz, nz))
        self.g = np.zeros(nz)
        self.const = 0.0

    def add(self, M, c, W):
        WM = W @ M
        self.H += 2.0 * M.T @ WM
        self.g += 2.0 * WM.T @ c
        self.const += float(c @ W @ c)


def _selector(nz, sl):
    S = np.zeros((sl.stop - sl.start, nz))
    S[:, sl] = np.eye(sl.stop - sl.start)
    return S


class _Rows:
    def __init__(self, nz):
        self.nz = nz
        self.G, self.h, self.E, self.f = [], [], [], []

    def ineq(self, G, h):
        G = np.atleast_2d(G)
        norms = np.linalg.norm(G, axis=1)
        live = norms > 1e-14
        if np.any(~live) and np.any(np.asarray(h)[~live] < -SET_TOL):
            raise OutsideDomain("constant constraint violated by the current state")
        self.G.append(G[live])
        self.h.append(np.asarray(h, dtype=float)[live])

    def eq(self, E, f):
        E = np.atleast_2d(E)
        live = np.linalg.norm(E, axis=1) > 1e-14
        self.E.append(E[live])
        self.f.append(np.asarray(f, dtype=float)[live])

    def arrays(self):
        nz = self.nz
        G = np.vstack(self.G) if self.G else np.zeros((0, nz))
        h = np.concatenate(self.h) if self.h else np.zeros(0)
        E = np.vstack(self.E) if self.E else np.zeros((0, nz))
        f = np.concatenate(self.f) if self.f else np.zeros(0)
        return G, h, E, f


def _check_setpoint(x_star, Xs: Polytope, tol=SET_TOL):
    x_star = check_state(x_star, Xs.dim, "x_star")
    if not Xs.contains(x_star, tol):
        raise SetpointNotEquilibrium(f"setpoint {x_star} is not an admissible steady state")
    return x_star


def _steady_input_rows(sys: LinearSystem):
    return np.hstack([sys.A - np.eye(sys.n), sys.B])


def build_tracking_qp(x, x_star, sys: LinearSystem, cfg: ControllerConfig) -> QpProblem:
    """Terminal-equality MPC for tracking: decision vector ``(u, x_s, u_s)``."""
    n, m, N = sys.n, sys.m, cfg.N
    x = check_state(x, n)
    x_star = check_state(x_star, n, "x_star")
    nu = N * m
    lay = {"u": slice(0, nu), "x_s": slice(nu, nu + n), "u_s": slice(nu + n, nu + n + m)}
    nz = nu + n + m
    Phi, Gam = prediction_matrices(sys.A, sys.B, N)
    Sxs = _selector(nz, lay["x_s"])
    Sus = _selector(nz, lay["u_s"])
    Su = _selector(nz, lay["u"])

    cost = _CostBuilder(nz)
    rows = _Rows(nz)
    for j in range(N):
        Mx = Gam[j] @ Su - Sxs
        cost.add(Mx, Phi[j] @ x, cfg.Q)
        Muj = Su[j * m : (j + 1) * m] - Sus
        cost.add(Muj, np.zeros(m), cfg.R)
        rows.ineq(sys.X.G @ Gam[j] @ Su, sys.X.h - sys.X.G @ Phi[j] @ x)
        rows.ineq(sys.U.G @ Su[j * m : (j + 1) * m], sys.U.h)
    cost.add(Sxs, -x_star, cfg.T)
    # (x_s, u_s) admissible steady pair
    rows.ineq(sys.X.G @ Sxs, sys.X.h)
    rows.ineq(sys.U.G @ Sus, sys.U.h)
    rows.eq(_steady_input_rows(sys) @ np.vstack([Sxs, Sus]), np.zeros(n))
    # terminal equality x_N = x_s
    rows.eq(Gam[N] @ Su - Sxs, -Phi[N] @ x)
    G, h, E, f = rows.arrays()
    return QpProblem(cost.H, cost.g, G, h, E, f, const=cost.const, layout=lay)


def build_layered_qp(x, x_star, ladder: SetLadder, cfg: ControllerConfig, mode: Optional[Mode] = None) -> QpProblem:
    """Layered MPC problem: decision vector ``(u, x^a, u^a, x_s)``.

    In tracking mode the target set is ``{x_s}``: ``x^a_j = x_s``, every
    ``u^a_j`` equals ``u^a_0`` and ``(x_s, u^a_0)`` is an admissible steady
    pair, and ``x_N = x_s``. In layer ``k`` the rows of ``S_kN`` bind
    ``x^a_j`` and ``x_N``, and the rows of its input set bind ``u^a_j``.
    """
    sys = ladder.system
    n, m, N = sys.n, sys.m, cfg.N
    x = check_state(x, n)
    x_star = _check_setpoint(x_star, ladder.Xs)
    if mode is None:
        mode = layer_of(x, ladder)
    nu, nxa = N * m, N * n
    lay = {
        "u": slice(0, nu),
        "x_a": slice(nu, nu + nxa),
        "u_a": slice(nu + nxa, 2 * nu + nxa),
        "x_s": slice(2 * nu + nxa, 2 * nu + nxa + n),
    }
    nz = 2 * nu + nxa + n
    Phi, Gam = prediction_matrices(sys.A, sys.B, N)
    Su = _selector(nz, lay["u"])
    Sxa = _selector(nz, lay["x_a"])
    Sua = _selector(nz, lay["u_a"])
    Sxs = _selector(nz, lay["x_s"])

    cost = _CostBuilder(nz)
    rows = _Rows(nz)
    for j in range(N):
        xa_j = Sxa[j * n : (j + 1) * n]
        ua_j = Sua[j * m : (j + 1) * m]
        u_j = Su[j * m : (j + 1) * m]
        cost.add(Gam[j] @ Su - xa_j, Phi[j] @ x, cfg.Q)
        cost.add(u_j - ua_j, np.zeros(m), cfg.R)
        rows.ineq(sys.X.G @ Gam[j] @ Su, sys.X.h - sys.X.G @ Phi[j] @ x)
        rows.ineq(sys.U.G @ u_j, sys.U.h)
    cost.add(Sxs, -x_star, cfg.T)

    if mode.tracking:
        ua_0 = Sua[:m]
        for j in range(N):
            rows.eq(Sxa[j * n : (j + 1) * n] - Sxs, np.zeros(n))
            if j:
                rows.eq(Sua[j * m : (j + 1) * m] - ua_0, np.zeros(m))
        rows.ineq(sys.X.G @ Sxs, sys.X.h)
        rows.ineq(sys.U.G @ ua_0, sys.U.h)
        rows.eq(_steady_input_rows(sys) @ np.vstack([Sxs, ua_0]), np.zeros(n))
        rows.eq(Gam[N] @ Su - Sxs, -Phi[N] @ x)
    else:
        target = ladder.rungs[mode.layer]
        psi = ladder.psi[mode.layer]
        for j in range(N):
            rows.ineq(target.G @ Sxa[j * n : (j + 1) * n], target.h)
            rows.ineq(psi.G @ Sua[j * m : (j + 1) * m], psi.h)
        rows.ineq(target.G @ Gam[N] @ Su, target.h - target.G @ Phi[N] @ x)
        rows.ineq(ladder.Xs.G @ Sxs, ladder.Xs.h)
    G, h, E, f = rows.arrays()
    return QpProblem(cost.H, cost.g, G, h, E, f, const=cost.const, layout=lay)


def _unpack(p: QpProblem, sol: QpSolution, x, sys: LinearSystem, N: int, mode: Mode, layered: bool) -> ControlStep:
    n, m = sys.n, sys.m
    u = sol.z[p.layout["u"]].reshape(N, m)
    Phi, Gam = prediction_matrices(sys.A, sys.B, N)
    states = np.array([Phi[j] @ x + Gam[j] @ sol.z[p.layout["u"]] for j in range(N + 1)])
    x_s = sol.z[p.layout["x_s"]]
    if layered:
        xa = sol.z[p.layout["x_a"]].reshape(N, n)
        ua = sol.z[p.layout["u_a"]].reshape(N, m)
    else:
        xa = np.tile(x_s, (N, 1))
        ua = np.tile(sol.z[p.layout["u_s"]], (N, 1))
    return ControlStep(
        u0=u[0].copy(),
        mode=mode,
        optimal_cost=sol.value,
        artificial_setpoint=x_s.copy(),
        predicted_states=states,
        aux_states=xa,
        aux_inputs=ua,
        qp_status=sol.status,
        qp=p,
        solution=sol,
    )


def kappa_mpc(x, x_star, ladder: SetLadder, cfg: ControllerConfig, warm_start=None) -> ControlStep:
    """Solve the configured controller's QP at ``x`` and return the first input with diagnostics.

    For the baseline flavor an infeasible QP is reported through
    ``qp_status`` with ``u0`` set to NaN.
    """
    sys = ladder.system
    x = check_state(x, sys.n)
    if cfg.flavor is Flavor.LAYERED:
        mode = layer_of(x, ladder)
        p = build_layered_qp(x, x_star, ladder, cfg, mode)
    else:
        mode = TRACKING
        _check_setpoint(x_star, ladder.Xs)
        if not sys.X.contains(x):
            raise OutsideDomain(f"state {x} violates the state constraints")
        p = build_tracking_qp(x, x_star, sys, cfg)
    sol = solve_qp(p, warm_start=warm_start)
    if not sol.optimal:
        if cfg.flavor is Flavor.LAYERED:
            raise NumericalFailure(f"layered QP infeasible at {x} in mode {mode}")
        nan = np.full(sys.m, np.nan)
        return ControlStep(nan, mode, np.nan, np.full(sys.n, np.nan), np.empty((0, sys.n)),
                           np.empty((0, sys.n)), np.empty((0, sys.m)), sol.status, p, sol)
    return _unpack(p, sol, x, sys, cfg.N, mode, cfg.flavor is Flavor.LAYERED)


def distance_to_set(x, P: Polytope, Q=None) -> float:
    """Squared ``Q``-weighted distance from ``x`` to ``P``."""
    x = check_state(x, P.dim)
    Q = np.eye(P.dim) if Q is None else check_spd(Q, "Q")
    if P.is_empty:
        raise EmptySet("distance to an empty set")
    if P.contains(x, 0.0):
        return 0.0
    p = QpProblem(2 * Q, -2 * Q @ x, P.G, P.h, np.zeros((0, P.dim)), np.zeros(0), const=float(x @ Q @ x))
    sol = solve_qp(p)
    if not sol.optimal:
        raise EmptySet("distance to an empty set")
    return max(sol.value, 0.0)


# ---------------------------------------------------------------- estimators
class _MPCBase(BaseEstimator):
    flavor: Flavor

    def _config(self, sys: LinearSystem) -> ControllerConfig:
        n, m = sys.n, sys.m
        Q = np.eye(n) if self.Q is None else self.Q
        R = np.eye(m) if self.R is None else self.R
        T = 100 * np.eye(n) if self.T is None else self.T
        return ControllerConfig(self.N, np.atleast_2d(Q), np.atleast_2d(R), np.atleast_2d(T), self.flavor)

    def reset(self):
        """Forget the warm-start active set (call between independent closed loops)."""
        self._active = None
        return self

    def step(self, x, setpoint) -> ControlStep:
        check_is_fitted(self, "config_")
        ws = getattr(self, "_active", None) if self.warm_start else None
        out = kappa_mpc(x, setpoint, self.ladder_, self.config_, warm_start=ws)
        self._active = out.solution.active if out.solution is not None and out.solution.optimal else None
        return out

    def predict(self, X, setpoint):
        """First optimal input for each state (rows of ``X``); NaN rows where infeasible."""
        X = check_states(X, self.ladder_.system.n)
        self.reset()
        return np.array([self.step(x, setpoint).u0 for x in X])


class LayeredMPC(_MPCBase):
    """Tracking MPC whose domain of attraction is the whole controllable set.

    ``fit(system)`` builds the controllable-set ladder for horizon ``N``
    (unless a prebuilt ``ladder`` is passed); ``predict(X, setpoint)`` returns
    the receding-horizon input for each state.
    """

    flavor = Flavor.LAYERED

    def __init__(self, N=3, Q=None, R=None, T=None, ladder=None, max_rungs=50, ladder_tol=LADDER_TOL, warm_start=True):
        self.N = N
        self.Q = Q
        self.R = R
        self.T = T
        self.ladder = ladder
        self.max_rungs = max_rungs
        self.ladder_tol = ladder_tol
        self.warm_start = warm_start

    def fit(self, system: LinearSystem, y=None):
        if self.ladder is not None:
            if self.ladder.N != self.N:
                raise ValueError(f"ladder was built for N={self.ladder.N}, controller uses N={self.N}")
            self.ladder_ = self.ladder
        else:
            self.ladder_ = build_ladder(system, self.N, self.max_rungs, self.ladder_tol)
        self.config_ = self._config(self.ladder_.system)
        self._active = None
        return self

    def mode(self, X):
        check_is_fitted(self, "ladder_")
        X = check_states(X, self.ladder_.system.n)
        return [layer_of(x, self.ladder_) for x in X]


class TrackingMPC(_MPCBase):
    """Terminal-equality MPC for tracking; its domain is ``S_N(Xs, U)``.

    ``ladder`` may be any ladder of the same system (only its equilibrium sets
    are used); otherwise ``fit`` computes the equilibrium sets itself.
    """

    flavor = Flavor.TRACKING

    def __init__(self, N=3, Q=None, R=None, T=None, ladder=None, warm_start=True):
        self.N = N
        self.Q = Q
        self.R = R
        self.T = T
        self.ladder = ladder
        self.warm_start = warm_start

    def fit(self, system: LinearSystem, y=None):
        if self.ladder is not None:
            self.ladder_ = self.ladder
        else:
            Zs, Xs, Us = equilibrium_set(system)
            self.ladder_ = SetLadder(N=self.N, rungs=[Xs], psi=[Us], converged=False, system=system, Zs=Zs)
        self.config_ = self._config(self.ladder_.system)
        self._active = None
        return self
