"""Dense convex QP solver (primal active-set, null-space steps).

Solves ``min 1/2 z'Hz + g'z + const`` subject to ``G z <= h`` and ``E z = f``
with ``H`` positive semidefinite. Singular ``H`` is handled exactly: when the
reduced Hessian has a null direction along which the objective decreases, the
solver moves along it until a constraint blocks, so the feasible set only
needs to be bounded in those directions.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from .exceptions import MaxIterations, NumericalFailure
from .lp import LpProblem, LpStatus, solve_lp

QP_TOL = 1e-7
# phase-1 infeasibility below this is absorbed by relaxing every row uniformly
RELAX_TOL = 1e-7
_PSD_FLOOR = -1e-10


class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray
    f: np.ndarray
    const: float = 0.0
    # named slices of the decision vector, e.g. {"u": slice(0, 6)}
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        nz = H.shape[0]
        g = np.asarray(self.g, dtype=float).ravel()
        G = np.asarray(self.G, dtype=float).reshape(-1, nz)
        h = np.asarray(self.h, dtype=float).ravel()
        E = np.asarray(self.E, dtype=float).reshape(-1, nz)
        f = np.asarray(self.f, dtype=float).ravel()
        if H.shape != (nz, nz) or g.shape[0] != nz:
            raise ValueError("inconsistent cost dimensions")
        if G.shape[0] != h.shape[0] or E.shape[0] != f.shape[0]:
            raise ValueError("inconsistent constraint dimensions")
        H = 0.5 * (H + H.T)
        if nz and np.linalg.eigvalsh(H).min() < _PSD_FLOOR * max(1.0, np.abs(H).max()):
            raise ValueError("H is not positive semidefinite")
        for name, val in (("H", H), ("g", g), ("G", G), ("h", h), ("E", E), ("f", f)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.H.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z + self.const)

    def block(self, z, name) -> np.ndarray:
        return np.asarray(z)[self.layout[name]]

    def to_json(self) -> str:
        """Debug dump for reproducing a solve."""
        data = {k: getattr(self, k).tolist() for k in ("H", "g", "G", "h", "E", "f")}
        data["const"] = self.const
        data["layout"] = {k: [s.start, s.stop] for k, s in self.layout.items()}
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "QpProblem":
        data = json.loads(text)
        layout = {k: slice(a, b) for k, (a, b) in data.pop("layout").items()}
        nz = len(data["g"])
        return cls(
            np.array(data["H"]).reshape(nz, nz),
            np.array(data["g"]),
            np.array(data["G"]).reshape(-1, nz),
            np.array(data["h"]),
            np.array(data["E"]).reshape(-1, nz),
            np.array(data["f"]),
            const=data["const"],
            layout=layout,
        )


@dataclass
class QpSolution:
    status: QpStatus
    z: Optional[np.ndarray] = None
    value: float = np.nan
    lam: Optional[np.ndarray] = None  # inequality multipliers (>= 0)
    nu: Optional[np.ndarray] = None  # equality multipliers
    active: tuple = ()
    iterations: int = 0
    relaxation: float = 0.0
    kkt_residual: float = np.nan
    certificate: Optional[np.ndarray] = None

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


@dataclass
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def verify_kkt(p: QpProblem, sol: QpSolution) -> KktReport:
    """Residual of each KKT block at ``sol`` (stationarity, primal, dual, complementarity)."""
    z = sol.z
    lam = sol.lam if sol.lam is not None else np.zeros(p.G.shape[0])
    nu = sol.nu if sol.nu is not None else np.zeros(p.E.shape[0])
    grad = p.H @ z + p.g + p.G.T @ lam + p.E.T @ nu
    slack = p.h - p.G @ z
    primal = max(np.max(-slack, initial=0.0), np.max(np.abs(p.E @ z - p.f), initial=0.0))
    return KktReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal=float(max(primal - sol.relaxation, 0.0)),
        dual=float(np.max(-lam, initial=0.0)),
        complementarity=float(np.max(np.abs(lam * (slack + sol.relaxation)), initial=0.0)),
    )


def _phase1(p: QpProblem):
    """Most-interior feasible point: ``min t`` s.t. ``G z - t <= h``, ``E z = f``."""
    nz = p.n_vars
    m = p.G.shape[0]
    c = np.r_[np.zeros(nz), 1.0]
    G = np.hstack([p.G, -np.ones((m, 1))])
    G = np.vstack([G, np.r_[np.zeros(nz), -1.0]])
    h = np.r_[p.h, 1.0]
    E = np.hstack([p.E, np.zeros((p.E.shape[0], 1))]) if p.E.shape[0] else None
    sol = solve_lp(LpProblem(c, G, h, E, p.f if p.E.shape[0] else None))
    if sol.status is LpStatus.INFEASIBLE:
        # equalities alone are inconsistent
        return None, np.inf, None
    if sol.status is not LpStatus.OPTIMAL:
        raise NumericalFailure("phase-1 LP unbounded")
    return sol.z[:nz], sol.z[nz], sol.dual_ineq[:m]


def _eqp_step(H, grad, Aw):
    """Minimize ``1/2 p'Hp + grad'p`` on ``Aw p = 0``.

    Returns ``(p, newton)``; ``newton`` is False for a zero-curvature descent
    direction, whose step length is limited only by constraints.
    """
    nz = H.shape[0]
    Z = null_space(Aw, rcond=1e-11) if Aw.shape[0] else np.eye(nz)
    if Z.shape[1] == 0:
        return np.zeros(nz), True
    Hr = Z.T @ H @ Z
    gr = Z.T @ grad
    lam, V = np.linalg.eigh(0.5 * (Hr + Hr.T))
    floor = 1e-10 * max(1.0, lam.max(initial=0.0))
    flat = lam <= floor
    gscale = 1e-11 * max(1.0, np.max(np.abs(grad), initial=0.0))
    if np.any(flat):
        gn = V[:, flat].T @ gr
        if np.max(np.abs(gn)) > gscale:
            return -Z @ (V[:, flat] @ gn), False
    y = V[:, ~flat] @ ((V[:, ~flat].T @ gr) / lam[~flat])
    return -Z @ y, True


def _independent(Arows, row, tol=1e-9) -> bool:
    if Arows.shape[0] == 0:
        return np.linalg.norm(row) > tol
    r = np.linalg.lstsq(Arows.T, row, rcond=None)[0]
    return np.linalg.norm(Arows.T @ r - row) > tol * max(1.0, np.linalg.norm(row))


def _solve_on_working_set(p: QpProblem, h, W):
    """Minimizer of the objective with ``E`` and the rows ``W`` held as equalities, or None."""
    nz = p.n_vars
    Aw = np.vstack([p.E, p.G[W]]) if W else p.E
    bw = np.r_[p.f, h[W]] if W else p.f
    k = Aw.shape[0]
    K = np.block([[p.H, Aw.T], [Aw, np.zeros((k, k))]])
    rhs = np.r_[-p.g, bw]
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)) or np.linalg.norm(K @ sol - rhs) > 1e-9 * (1 + np.linalg.norm(rhs)):
        return None
    return sol[:nz]


def solve_qp(
    p: QpProblem,
    warm_start: Optional[tuple] = None,
    max_iter: Optional[int] = None,
    tol: float = QP_TOL,
) -> QpSolution:
    """Solve ``p`` with a primal active-set method.

    ``warm_start`` is a previous active set (row indices of ``G``); when the
    equality-constrained minimizer on that set is feasible it replaces the
    phase-1 start. Returns ``Infeasible`` (with the phase-1 dual ray as
    certificate) when no point satisfies the constraints within ``RELAX_TOL``.
    """
    nz = p.n_vars
    m = p.G.shape[0]
    max_iter = max_iter or 20 * (nz + m) + 100
    h = p.h.copy()
    relax = 0.0

    z = None
    W: list = []
    if warm_start:
        W0 = [i for i in sorted(set(warm_start)) if i < m]
        W0 = _independent_subset(p, W0)
        cand = _solve_on_working_set(p, h, W0)
        if cand is not None and np.max(p.G @ cand - h, initial=-np.inf) <= 1e-10 * (1 + np.abs(cand).max()):
            z, W = cand, W0
    if z is None:
        z, t, dual = _phase1(p)
        if z is None or t > RELAX_TOL:
            return QpSolution(QpStatus.INFEASIBLE, certificate=dual)
        if t > 0:
            relax = t + 1e-12
            h = h + relax
        W = []

    seen = set()
    bland = False
    for it in range(1, max_iter + 1):
        Aw = np.vstack([p.E, p.G[W]]) if W else p.E
        grad = p.H @ z + p.g
        step, newton = _eqp_step(p.H, grad, Aw)
        if np.max(np.abs(step), initial=0.0) <= 1e-13 * (1.0 + np.max(np.abs(z), initial=0.0)):
            mult = np.linalg.lstsq(Aw.T, -grad, rcond=None)[0] if Aw.shape[0] else np.zeros(0)
            ne = p.E.shape[0]
            lam_w = mult[ne:]
            if not W or lam_w.min() >= -tol * 1e-2:
                lam = np.zeros(m)
                lam[W] = np.clip(lam_w, 0.0, None)
                sol = QpSolution(
                    QpStatus.OPTIMAL,
                    z=z,
                    value=p.objective(z),
                    lam=lam,
                    nu=mult[:ne],
                    active=tuple(sorted(W)),
                    iterations=it,
                    relaxation=relax,
                )
                sol.kkt_residual = verify_kkt(p, sol).max
                return sol
            key = frozenset(W)
            if key in seen:
                bland = True
            seen.add(key)
            if bland:
                neg = [k for k in range(len(W)) if lam_w[k] < -tol * 1e-2]
                drop = min(neg, key=lambda k: W[k])
            else:
                drop = int(np.argmin(lam_w))
            W.pop(drop)
            continue
        Gp = p.G @ step
        slack = h - p.G @ z
        alpha = 1.0 if newton else np.inf
        block = None
        cand = [i for i in range(m) if i not in W and Gp[i] > 1e-12 * (1 + np.abs(step).max())]
        if cand:
            ratios = np.maximum(slack[cand], 0.0) / Gp[cand]
            rmin = ratios.min()
            if rmin < alpha:
                alpha = rmin
                ties = [cand[k] for k in np.where(ratios <= rmin + 1e-15)[0]]
                block = min(ties) if bland else ties[int(np.argmax(Gp[ties]))]
        if not np.isfinite(alpha):
            raise NumericalFailure("objective unbounded below on the feasible set")
        z = z + alpha * step
        if block is not None:
            W.append(block)
    raise MaxIterations(f"active-set QP did not converge in {max_iter} iterations")


def _independent_subset(p: QpProblem, W):
    keep = []
    rows = p.E.copy()
    for i in W:
        if _independent(rows, p.G[i]):
            keep.append(i)
            rows = np.vstack([rows, p.G[i]])
    return keep
