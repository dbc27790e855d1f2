"""Independent reference computations used by several test modules."""
import numpy as np
from scipy.optimize import linprog


def support_j_step(sys, Xs, j, d):
    """Support of the j-step controllable set to ``Xs`` in direction ``d``.

    Solved as one LP over the whole lifted trajectory ``(x0, u0..u_{j-1})``
    with the states written out explicitly; no projection involved.
    """
    n, m = sys.n, sys.m
    nv = n + j * m
    rows, rhs = [], []
    # x_k = Phi_k @ v with v = (x0, u0, ..., u_{j-1})
    Phi = np.hstack([np.eye(n), np.zeros((n, j * m))])
    for k in range(j + 1):
        S = sys.X if k < j else Xs
        rows.append(S.G @ Phi)
        rhs.append(S.h)
        if k < j:
            Sel = np.zeros((m, nv))
            Sel[:, n + k * m:n + (k + 1) * m] = np.eye(m)
            rows.append(sys.U.G @ Sel)
            rhs.append(sys.U.h)
            Phi = sys.A @ Phi + sys.B @ Sel
    c = np.zeros(nv)
    c[:n] = -np.asarray(d, dtype=float)
    res = linprog(c, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=(None, None), method="highs")
    if res.status == 2:
        return -np.inf
    assert res.status == 0, res.message
    return -res.fun


def saturation_horizon(sys, Xs, directions, j_max=60, tol=1e-7):
    """Smallest j with S_(j+1) = S_j, judged from supports in ``directions``."""
    prev = np.array([support_j_step(sys, Xs, 0, d) for d in directions])
    for j in range(1, j_max + 1):
        cur = np.array([support_j_step(sys, Xs, j, d) for d in directions])
        if np.max(cur - prev) <= tol:
            return j - 1
        prev = cur
    raise AssertionError("no saturation within j_max")


def directions(count=24):
    ang = np.linspace(0, 2 * np.pi, count, endpoint=False)
    return np.c_[np.cos(ang), np.sin(ang)]
