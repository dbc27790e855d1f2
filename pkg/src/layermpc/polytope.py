"""H-representation polytopes ``{z : G z <= h}``.

Every set the controller touches (state and input constraints, equilibrium
sets, controllable sets and their input sets) is stored this way. Rows are
normalized to unit Euclidean norm on construction, so ``h_i`` is the signed
distance of facet ``i`` from the origin and tolerances are geometric.
"""
from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DimensionMismatch, EmptySet
from .lp import LpProblem, LpStatus, solve_lp

SET_TOL = 1e-7
# rows whose support exceeds their offset by less than this are dropped
REDUNDANCY_TOL = 1e-9
_ZERO_ROW = 1e-12


class Polytope:
    """Convex polytope in H-representation.

    Parameters
    ----------
    G : array_like, shape (m, d)
        Facet normals, one per row.
    h : array_like, shape (m,)
        Offsets.
    normalize : bool
        Scale each row to unit norm. Zero rows are rejected.

    Instances are immutable; operations return new polytopes.
    """

    __slots__ = ("_G", "_h", "_empty", "_irredundant")

    def __init__(self, G, h, normalize: bool = True):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.asarray(h, dtype=float).ravel()
        if G.shape[0] != h.shape[0]:
            raise DimensionMismatch(f"G has {G.shape[0]} rows but h has {h.shape[0]}")
        if G.shape[1] < 1:
            raise DimensionMismatch("polytope dimension must be at least 1")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
            raise ValueError("polytope data must be finite")
        if normalize and G.shape[0]:
            norms = np.linalg.norm(G, axis=1)
            if np.any(norms < _ZERO_ROW):
                raise ValueError("zero row in constraint matrix")
            G = G / norms[:, None]
            h = h / norms
        G.setflags(write=False)
        h.setflags(write=False)
        self._G = G
        self._h = h
        self._empty = None
        self._irredundant = False

    # ------------------------------------------------------------------ basics
    @property
    def G(self) -> np.ndarray:
        return self._G

    @property
    def h(self) -> np.ndarray:
        return self._h

    @property
    def dim(self) -> int:
        return self._G.shape[1]

    @property
    def n_constraints(self) -> int:
        return self._G.shape[0]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, n_constraints={self.n_constraints})"

    @classmethod
    def from_box(cls, lb, ub) -> "Polytope":
        lb = np.asarray(lb, dtype=float).ravel()
        ub = np.asarray(ub, dtype=float).ravel()
        if lb.shape != ub.shape:
            raise DimensionMismatch("box bounds differ in length")
        d = lb.shape[0]
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([ub, -lb]))

    @classmethod
    def empty(cls, dim: int) -> "Polytope":
        G = np.zeros((2, dim))
        G[0, 0], G[1, 0] = 1.0, -1.0
        P = cls(G, [-1.0, -1.0])
        P._empty = True
        return P

    @classmethod
    def point(cls, z) -> "Polytope":
        z = np.asarray(z, dtype=float).ravel()
        return cls.from_box(z, z)

    def _check_point(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).ravel()
        if z.shape[0] != self.dim:
            raise DimensionMismatch(f"point of dimension {z.shape[0]} vs polytope of dimension {self.dim}")
        return z

    # ------------------------------------------------------------- predicates
    def violation(self, z) -> float:
        """Largest constraint violation ``max_i (G_i z - h_i)``."""
        z = self._check_point(z)
        if self.n_constraints == 0:
            return -np.inf
        return float(np.max(self._G @ z - self._h))

    def contains(self, z, tol: float = SET_TOL) -> bool:
        return self.violation(z) <= tol

    def contains_many(self, Z, tol: float = SET_TOL) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.dim:
            raise DimensionMismatch("points have the wrong dimension")
        if self.n_constraints == 0:
            return np.ones(Z.shape[0], dtype=bool)
        return np.max(Z @ self._G.T - self._h, axis=1) <= tol

    @property
    def is_empty(self) -> bool:
        if self._empty is None:
            sol = solve_lp(LpProblem(np.zeros(self.dim), self._G, self._h))
            self._empty = sol.status is LpStatus.INFEASIBLE
        return self._empty

    def support(self, direction) -> float:
        """``max direction.z`` over the set; ``inf`` when unbounded, ``-inf`` when empty."""
        direction = np.asarray(direction, dtype=float).ravel()
        if direction.shape[0] != self.dim:
            raise DimensionMismatch("direction has the wrong dimension")
        sol = solve_lp(LpProblem(-direction, self._G, self._h))
        if sol.status is LpStatus.INFEASIBLE:
            return -np.inf
        if sol.status is LpStatus.UNBOUNDED:
            return np.inf
        return -sol.value

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(self.dim)
        ub = np.array([self.support(e) for e in eye])
        lb = np.array([-self.support(-e) for e in eye])
        return lb, ub

    def assert_bounded(self) -> "Polytope":
        lb, ub = self.bounding_box()
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("polytope is unbounded")
        return self

    def is_subset(self, other: "Polytope", tol: float = SET_TOL) -> bool:
        """True iff every facet of ``other`` bounds the support of ``self``."""
        if other.dim != self.dim:
            raise DimensionMismatch("polytopes live in different dimensions")
        for g, beta in zip(other.G, other.h):
            if self.support(g) > beta + tol:
                return False
        return True

    def equals(self, other: "Polytope", tol: float = SET_TOL) -> bool:
        return self.is_subset(other, tol) and other.is_subset(self, tol)

    def has_facet(self, g, beta, tol: float = SET_TOL) -> bool:
        """Whether a row matching ``(g, beta)`` within ``tol`` is present (rows are unit norm)."""
        g = np.asarray(g, dtype=float)
        g = g / np.linalg.norm(g)
        close = (np.max(np.abs(self._G - g), axis=1) <= tol) & (np.abs(self._h - beta) <= tol)
        return bool(np.any(close))

    # ------------------------------------------------------------ geometry
    def chebyshev_center(self) -> tuple[np.ndarray, float]:
        """Centre and radius of the largest inscribed ball.

        Raises :class:`EmptySet` when the set is empty. The radius is capped at
        1e6 so unbounded sets still return a point.
        """
        d = self.dim
        c = np.zeros(d + 1)
        c[-1] = -1.0
        norms = np.linalg.norm(self._G, axis=1)
        G = np.hstack([self._G, norms[:, None]])
        G = np.vstack([G, np.r_[np.zeros(d), -1.0], np.r_[np.zeros(d), 1.0]])
        h = np.r_[self._h, 0.0, 1e6]
        sol = solve_lp(LpProblem(c, G, h))
        if sol.status is not LpStatus.OPTIMAL:
            raise EmptySet("Chebyshev LP infeasible: polytope is empty")
        return sol.z[:d], float(max(sol.z[d], 0.0))

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise DimensionMismatch("polytopes live in different dimensions")
        return Polytope(np.vstack([self._G, other.G]), np.r_[self._h, other.h], normalize=False)

    def remove_redundancy(self, tol: float = REDUNDANCY_TOL) -> "Polytope":
        """Return the same set with every redundant row dropped.

        Duplicates are merged first, then each remaining row is tested by an
        LP that maximizes it against all surviving rows.
        """
        if self._irredundant:
            return self
        if self.is_empty:
            raise EmptySet("cannot prune an empty polytope")
        G, h = _dedupe(self._G, self._h)
        keep = np.ones(G.shape[0], dtype=bool)
        for i in range(G.shape[0]):
            others = keep.copy()
            others[i] = False
            # cap the tested row so the LP stays bounded
            Gi = np.vstack([G[others], G[i]])
            hi = np.r_[h[others], h[i] + 1.0]
            sol = solve_lp(LpProblem(-G[i], Gi, hi))
            if sol.status is LpStatus.INFEASIBLE:
                raise EmptySet("polytope became empty during pruning")
            if sol.status is LpStatus.OPTIMAL and -sol.value <= h[i] + tol:
                keep[i] = False
        out = Polytope(G[keep], h[keep], normalize=False)
        out._empty = False
        out._irredundant = True
        return out

    def project(self, keep: Sequence[int]) -> "Polytope":
        """Orthogonal projection onto the coordinates ``keep`` (in the given order).

        Dropped coordinates are removed by Fourier-Motzkin elimination, pruning
        redundant rows after every step.
        """
        keep = [int(k) for k in keep]
        if not keep:
            raise ValueError("keep must be nonempty")
        if len(set(keep)) != len(keep) or min(keep) < 0 or max(keep) >= self.dim:
            raise ValueError(f"invalid coordinate selection {keep} for dimension {self.dim}")
        if self.is_empty:
            raise EmptySet("projection of an empty polytope")
        cols = list(range(self.dim))
        drop = [c for c in cols if c not in keep]
        P = self.remove_redundancy()
        G, h = np.array(P.G), np.array(P.h)
        while drop:
            # eliminate the column that creates the fewest combined rows
            costs = []
            for c in drop:
                j = cols.index(c)
                npos = np.sum(G[:, j] > _ZERO_ROW)
                nneg = np.sum(G[:, j] < -_ZERO_ROW)
                costs.append(npos * nneg - npos - nneg)
            c = drop[int(np.argmin(costs))]
            j = cols.index(c)
            G, h = _fm_eliminate(G, h, j)
            cols.pop(j)
            drop.remove(c)
            if G.shape[0] == 0:
                break
            P = Polytope(G, h).remove_redundancy()
            G, h = np.array(P.G), np.array(P.h)
        if G.shape[0] == 0:
            raise ValueError("projection is unbounded in every direction")
        order = [cols.index(k) for k in keep]
        return Polytope(G[:, order], h).remove_redundancy()

    def vertices_2d(self, tol: float = SET_TOL) -> np.ndarray:
        """Counter-clockwise vertex cycle of a bounded planar polytope."""
        if self.dim != 2:
            raise DimensionMismatch("vertices_2d needs a 2-dimensional polytope")
        if self.is_empty:
            raise EmptySet("no vertices for an empty set")
        P = self.remove_redundancy()
        G, h = P.G, P.h
        pts = []
        m = G.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                M = G[[i, j]]
                det = np.linalg.det(M)
                if abs(det) < 1e-14:
                    continue
                z = np.linalg.solve(M, h[[i, j]])
                if np.max(G @ z - h) <= tol * max(1.0, np.max(np.abs(z))):
                    pts.append(z)
        if not pts:
            raise ValueError("polytope has no vertices (unbounded?)")
        pts = np.array(pts)
        uniq = []
        for p in pts:
            if not any(np.max(np.abs(p - q)) <= 10 * tol for q in uniq):
                uniq.append(p)
        pts = np.array(uniq)
        centre = pts.mean(axis=0)
        ang = np.arctan2(pts[:, 1] - centre[1], pts[:, 0] - centre[0])
        return pts[np.argsort(ang, kind="stable")]

    # ---------------------------------------------------------- persistence
    def to_dict(self) -> dict:
        return {"G": self._G.tolist(), "h": self._h.tolist(), "normalized": True}

    @classmethod
    def from_dict(cls, data: dict) -> "Polytope":
        # rows written by to_dict are already unit norm; renormalizing would drift by an ulp
        return cls(data["G"], data["h"], normalize=not data.get("normalized", False))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Polytope":
        return cls.from_dict(json.loads(text))


def _dedupe(G: np.ndarray, h: np.ndarray, tol: float = 1e-12):
    """Merge rows with (numerically) identical normals, keeping the tightest offset."""
    order = np.lexsort(np.round(G.T, 10)[::-1])
    G, h = G[order], h[order]
    outG, outh = [], []
    for g, b in zip(G, h):
        for k, q in enumerate(outG):
            if np.max(np.abs(q - g)) <= tol * 1e3:
                outh[k] = min(outh[k], b)
                break
        else:
            outG.append(g)
            outh.append(b)
    return np.array(outG).reshape(-1, G.shape[1]), np.array(outh)


def _fm_eliminate(G: np.ndarray, h: np.ndarray, j: int):
    """One Fourier-Motzkin step removing column ``j``. Returns unnormalized rows with zero rows dropped.

    Raises :class:`EmptySet` when a combination yields ``0 <= negative``.
    """
    a = G[:, j]
    pos = np.where(a > _ZERO_ROW)[0]
    neg = np.where(a < -_ZERO_ROW)[0]
    zero = np.setdiff1d(np.arange(G.shape[0]), np.r_[pos, neg])
    rows = [np.delete(G[zero], j, axis=1)]
    offs = [h[zero]]
    if pos.size and neg.size:
        Gp = G[pos] / a[pos, None]
        hp = h[pos] / a[pos]
        Gn = G[neg] / -a[neg, None]
        hn = h[neg] / -a[neg]
        comb = (Gp[:, None, :] + Gn[None, :, :]).reshape(-1, G.shape[1])
        combh = (hp[:, None] + hn[None, :]).ravel()
        rows.append(np.delete(comb, j, axis=1))
        offs.append(combh)
    Gn_ = np.vstack(rows)
    hn_ = np.concatenate(offs)
    norms = np.linalg.norm(Gn_, axis=1)
    flat = norms < 1e-10 * (1.0 + np.abs(hn_))
    if np.any(hn_[flat] < -1e-9):
        raise EmptySet("Fourier-Motzkin produced an infeasible row")
    return Gn_[~flat], hn_[~flat]


def stack_points(points: Iterable) -> np.ndarray:
    return np.array([np.asarray(p, dtype=float).ravel() for p in points])
