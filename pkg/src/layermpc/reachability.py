"""Equilibrium sets, controllable sets and the layer decomposition of the domain.

The controllable-set ladder is ``S_0 = Xs``, ``S_N``, ``S_2N``, ... where
``S_(k+1)N`` holds every admissible state that can be driven into ``S_kN`` in
``N`` admissible steps. Consecutive rungs differ by a *layer*; the outermost
rung (the fixed point) is the largest domain of attraction any controller can
have for set points in ``Xs``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, EmptySet, OutsideDomain
from .polytope import SET_TOL, Polytope

logger = logging.getLogger(__name__)

EQ_TOL = 1e-9
LADDER_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``x+ = A x + B u`` with ``x`` in ``X`` and ``u`` in ``U``."""

    A: np.ndarray
    B: np.ndarray
    X: Polytope
    U: Polytope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        if B.shape[0] != n:
            raise DimensionMismatch("B must have as many rows as A")
        if self.X.dim != n or self.U.dim != B.shape[1]:
            raise DimensionMismatch("constraint sets do not match the system dimensions")
        ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise ValueError("(A, B) is not controllable")
        for name, P in (("X", self.X), ("U", self.U)):
            if P.is_empty:
                raise EmptySet(f"{name} is empty")
            P.assert_bounded()
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "X": self.X.to_dict(),
            "U": self.U.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearSystem":
        return cls(
            np.asarray(data["A"], dtype=float),
            np.asarray(data["B"], dtype=float),
            Polytope.from_dict(data["X"]),
            Polytope.from_dict(data["U"]),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Mode:
    """Controller mode: ``layer == 0`` is tracking (state in ``S_N``), otherwise the layer index."""

    layer: int

    @property
    def tracking(self) -> bool:
        return self.layer == 0

    @classmethod
    def parse(cls, text: str) -> "Mode":
        if text == "tracking":
            return cls(0)
        if text.startswith("layer"):
            return cls(int(text[5:]))
        raise ValueError(f"unknown mode {text!r}")

    def __str__(self):
        return "tracking" if self.tracking else f"layer{self.layer}"


TRACKING = Mode(0)


def equilibrium_set(sys: LinearSystem, eq_tol: float = EQ_TOL):
    """Return ``(Zs, Xs, Us)``: admissible steady pairs and their projections.

    The steady-state equation ``(A - I) x + B u = 0`` enters as two inequality
    rows per equation relaxed by ``eq_tol``.
    """
    n, m = sys.n, sys.m
    M = np.hstack([sys.A - np.eye(n), sys.B])
    keep = np.linalg.norm(M, axis=1) > 0
    M = M[keep]
    G = np.vstack(
        [
            np.hstack([sys.X.G, np.zeros((sys.X.n_constraints, m))]),
            np.hstack([np.zeros((sys.U.n_constraints, n)), sys.U.G]),
            M,
            -M,
        ]
    )
    h = np.r_[sys.X.h, sys.U.h, np.full(2 * M.shape[0], eq_tol)]
    Zs = Polytope(G, h)
    if Zs.is_empty:
        raise EmptySet("no admissible steady state")
    Zs = Zs.remove_redundancy()
    Xs = Zs.project(range(n))
    Us = Zs.project(range(n, n + m))
    return Zs, Xs, Us


def _lifted(Omega: Polytope, Psi: Polytope, sys: LinearSystem, state_set: Polytope) -> Polytope:
    """``{(x, u) : x in state_set, u in Psi, A x + B u in Omega}``."""
    n, m = sys.n, sys.m
    G = np.vstack(
        [
            np.hstack([state_set.G, np.zeros((state_set.n_constraints, m))]),
            np.hstack([np.zeros((Psi.n_constraints, n)), Psi.G]),
            np.hstack([Omega.G @ sys.A, Omega.G @ sys.B]),
        ]
    )
    h = np.r_[state_set.h, Psi.h, Omega.h]
    return Polytope(G, h)


def input_set(Omega: Polytope, sys: LinearSystem) -> Polytope:
    """Inputs in ``U`` that keep some state of ``Omega`` inside ``Omega``."""
    if Omega.dim != sys.n:
        raise DimensionMismatch("Omega must live in the state space")
    lifted = _lifted(Omega, sys.U, sys, Omega)
    if lifted.is_empty:
        raise EmptySet("no admissible state/input pair stays in Omega")
    return lifted.project(range(sys.n, sys.n + sys.m))


def one_step_set(Omega: Polytope, Psi: Polytope, sys: LinearSystem) -> Polytope:
    """States of ``X`` that one input from ``Psi`` moves into ``Omega``.

    An empty ``Omega`` (or an empty result) is returned as an empty polytope.
    """
    if Omega.dim != sys.n or Psi.dim != sys.m:
        raise DimensionMismatch("Omega/Psi dimensions do not match the system")
    if Omega.is_empty:
        return Polytope.empty(sys.n)
    lifted = _lifted(Omega, Psi, sys, sys.X)
    if lifted.is_empty:
        return Polytope.empty(sys.n)
    return lifted.project(range(sys.n))


def controllable_set(Omega: Polytope, Psi: Polytope, sys: LinearSystem, steps: int) -> Polytope:
    S = Omega
    for _ in range(steps):
        S = one_step_set(S, Psi, sys)
    return S


@dataclass
class SetLadder:
    """Nested controllable sets ``S_0 = Xs``, ``S_N``, ..., ``S_(k*)N``.

    ``psi[k]`` caches the input set of ``rungs[k]``. When ``converged`` the last
    rung is the fixed point and serves as the controller's domain.
    """

    N: int
    rungs: list
    psi: list
    converged: bool
    system: LinearSystem
    Zs: Polytope
    tol: float = LADDER_TOL

    @property
    def k_star(self) -> Optional[int]:
        return len(self.rungs) - 1 if self.converged else None

    @property
    def Xs(self) -> Polytope:
        return self.rungs[0]

    @property
    def Us(self) -> Polytope:
        return self.psi[0]

    @property
    def domain(self) -> Polytope:
        return self.rungs[-1]

    @property
    def S_N(self) -> Polytope:
        # a ladder converged at S_0 has S_N = S_0
        return self.rungs[min(1, len(self.rungs) - 1)]

    def rung(self, k: int) -> Polytope:
        return self.rungs[k]

    def to_dict(self) -> dict:
        return {
            "system": self.system.to_dict(),
            "system_hash": self.system.digest(),
            "N": self.N,
            "tol": self.tol,
            "converged": self.converged,
            "k_star": self.k_star,
            "Zs": self.Zs.to_dict(),
            "rungs": [P.to_dict() for P in self.rungs],
            "psi_cache": [P.to_dict() for P in self.psi],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SetLadder":
        sys = LinearSystem.from_dict(data["system"])
        rungs = [_trusted(P) for P in data["rungs"]]
        psi = [_trusted(P) for P in data["psi_cache"]]
        return cls(
            N=int(data["N"]),
            rungs=rungs,
            psi=psi,
            converged=bool(data["converged"]),
            system=sys,
            Zs=Polytope.from_dict(data["Zs"]),
            tol=float(data.get("tol", LADDER_TOL)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SetLadder":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _trusted(data: dict) -> Polytope:
    # stored rungs were pruned before saving
    P = Polytope.from_dict(data)
    P._empty = False
    P._irredundant = True
    return P


def build_ladder(sys: LinearSystem, N: int, max_rungs: int = 50, tol: float = LADDER_TOL) -> SetLadder:
    """Grow ``S_kN(Xs, U)`` until two consecutive rungs agree within ``tol``.

    Non-convergence within ``max_rungs`` rungs past ``S_0`` is reported through
    ``converged=False``, never raised.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    Zs, Xs, Us = equilibrium_set(sys)
    rungs = [Xs]
    psi = [Us]
    converged = False
    while len(rungs) - 1 < max_rungs:
        nxt = controllable_set(rungs[-1], sys.U, sys, N)
        logger.debug("rung %d: %d facets", len(rungs), nxt.n_constraints)
        if nxt.is_subset(rungs[-1], tol):
            converged = True
            break
        rungs.append(nxt)
        psi.append(input_set(nxt, sys))
    else:
        # confirm a fixed point reached exactly at the cap
        nxt = controllable_set(rungs[-1], sys.U, sys, N)
        converged = nxt.is_subset(rungs[-1], tol)
    return SetLadder(N=N, rungs=rungs, psi=psi, converged=converged, system=sys, Zs=Zs, tol=tol)


def layer_of(x, ladder: SetLadder, tol: float = SET_TOL) -> Mode:
    """Mode of state ``x``: tracking inside ``S_N``, otherwise the index of its layer.

    Inner rungs are tested first, so points on a shared boundary get the
    smaller index.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not ladder.domain.contains(x, tol):
        raise OutsideDomain(f"state {x} lies outside the controllable domain")
    if len(ladder.rungs) == 1:
        return TRACKING
    for k in range(1, len(ladder.rungs)):
        if ladder.rungs[k].contains(x, tol):
            return Mode(k - 1)
    raise OutsideDomain(f"state {x} lies outside the controllable domain")


@dataclass
class ContractivityReport:
    passed: bool
    eps: float
    margin: float
    n_checked: int
    n_shared: int
    failing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "eps": self.eps,
            "margin": self.margin,
            "n_checked": self.n_checked,
            "n_shared": self.n_shared,
            "failing": self.failing,
            # only a sufficient condition is tested
            "verdict": "passed" if self.passed else "inconclusive-negative",
        }


def check_contractive(ladder: SetLadder, eps: float = 1e-6, tol: float = SET_TOL) -> ContractivityReport:
    """Test ``S_N`` lies in the interior of ``S_(N+1)`` relative to the domain.

    Facets of ``S_(N+1)`` that coincide with facets of the outer set are
    exempt; every other facet must clear ``S_N`` by at least ``eps``.
    ``margin`` is the smallest clearance observed over the checked facets.
    """
    sys = ladder.system
    S_N = ladder.S_N
    S_N1 = one_step_set(S_N, sys.U, sys)
    outer = ladder.domain
    failing = []
    margin = np.inf
    checked = shared = 0
    for g, beta in zip(S_N1.G, S_N1.h):
        if outer.has_facet(g, beta, tol):
            shared += 1
            continue
        checked += 1
        gap = beta - S_N.support(g)
        margin = min(margin, gap)
        if gap < eps:
            failing.append({"g": g.tolist(), "h": float(beta), "clearance": float(gap)})
    return ContractivityReport(
        passed=not failing,
        eps=eps,
        margin=float(margin),
        n_checked=checked,
        n_shared=shared,
        failing=failing,
    )
