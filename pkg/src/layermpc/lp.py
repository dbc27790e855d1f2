"""Linear programming front end.

All set operations reduce to small dense LPs (support functions, feasibility,
Chebyshev centres, redundancy checks). They are solved with HiGHS through
:func:`scipy.optimize.linprog`; this module wraps it with explicit statuses
and a dual certificate check.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .exceptions import NumericalFailure

FEAS_TOL = 1e-9

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpProblem:
    """``min c.z`` subject to ``G z <= h`` and ``E z = f``; variables are free."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    E: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return int(np.asarray(self.c).shape[0])


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    z: Optional[np.ndarray] = None
    value: float = np.nan
    # multipliers of G z <= h (nonnegative) and of E z = f
    dual_ineq: Optional[np.ndarray] = None
    dual_eq: Optional[np.ndarray] = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _as_system(A, b, d):
    if A is None or np.size(A) == 0:
        return np.zeros((0, d)), np.zeros(0)
    return np.atleast_2d(np.asarray(A, dtype=float)), np.asarray(b, dtype=float).ravel()


def solve_lp(p: LpProblem, feas_tol: float = FEAS_TOL) -> LpSolution:
    """Solve ``p`` and return a status-tagged solution.

    On ``Optimal`` the minimizer is checked for primal feasibility and
    complementary slackness against the returned duals; a solution that fails
    either check raises :class:`NumericalFailure`.
    """
    c = np.asarray(p.c, dtype=float).ravel()
    d = c.shape[0]
    if d < 1:
        raise ValueError("LP needs at least one variable")
    G, h = _as_system(p.G, p.h, d)
    E, f = _as_system(p.E, p.f, d)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise ValueError("LP coefficients must be finite")

    res = linprog(
        c,
        A_ub=G if G.shape[0] else None,
        b_ub=h if G.shape[0] else None,
        A_eq=E if E.shape[0] else None,
        b_eq=f if E.shape[0] else None,
        bounds=(None, None),
        method="highs",
        options=_HIGHS_OPTIONS,
    )
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED)
    if res.status != 0:
        raise NumericalFailure(f"LP solver stopped: {res.message}")

    z = np.asarray(res.x, dtype=float)
    lam = -np.asarray(res.ineqlin.marginals) if G.shape[0] else np.zeros(0)
    nu = -np.asarray(res.eqlin.marginals) if E.shape[0] else np.zeros(0)
    scale = 1.0 + np.max(np.abs(z), initial=0.0)
    if G.shape[0]:
        viol = np.max(G @ z - h)
        if viol > feas_tol * scale * 100:
            raise NumericalFailure(f"LP minimizer violates constraints by {viol:.3e}")
        slack = h - G @ z
        cs = np.max(np.abs(np.clip(lam, 0, None) * slack), initial=0.0)
        if cs > 1e-6 * (1.0 + np.max(np.abs(lam), initial=0.0)) * scale:
            raise NumericalFailure(f"complementary slackness residual {cs:.3e}")
    return LpSolution(LpStatus.OPTIMAL, z, float(res.fun), lam, nu)


def support(G, h, direction, E=None, f=None) -> float:
    """``max direction.z`` over ``{G z <= h, E z = f}``; ``inf`` if unbounded, ``-inf`` if empty."""
    direction = np.asarray(direction, dtype=float)
    sol = solve_lp(LpProblem(-direction, G, h, E, f))
    if sol.status is LpStatus.INFEASIBLE:
        return -np.inf
    if sol.status is LpStatus.UNBOUNDED:
        return np.inf
    return -sol.value


def is_feasible(G, h, E=None, f=None) -> bool:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    sol = solve_lp(LpProblem(np.zeros(G.shape[1]), G, h, E, f))
    return sol.optimal
