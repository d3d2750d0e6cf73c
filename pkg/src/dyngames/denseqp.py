"""Small exact solvers for dense convex QPs and polyhedron projections.

These are desk-scale routines: inequality handling is by enumeration of
active subsets with an exact KKT solve per subset, which is exact for convex
problems and perfectly adequate for the stage-sized and short-horizon
systems this package works with.  A hard cap guards against accidental
exponential blowups.
"""

from __future__ import annotations

from itertools import combinations
from typing import Optional

import numpy as np

from .errors import EnumerationCapError, InfeasibleConstraintsError, SubproblemError

Array = np.ndarray

DEFAULT_CAP = 18


def solve_equality_kkt(H: Array, f: Array, A: Optional[Array], b: Optional[Array]):
    """Solve min 0.5 z'Hz + f'z s.t. Az = b via the stacked KKT system.

    Returns (z, lam).  H only needs to be invertible on the null space of A
    for the KKT matrix to be nonsingular.
    """
    n = H.shape[0]
    if A is None or A.shape[0] == 0:
        return np.linalg.solve(H, -f), np.zeros(0)
    m = A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-f, b])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def solve_qp(H: Array, f: Array,
             G: Optional[Array] = None, h: Optional[Array] = None,
             Aeq: Optional[Array] = None, beq: Optional[Array] = None,
             cap: int = DEFAULT_CAP, tol: float = 1e-9):
    """Exact minimizer of a convex QP with inequality and equality constraints.

    min 0.5 z'Hz + f'z   s.t.  Gz <= h,  Aeq z = beq.

    Enumerates active subsets of the inequalities in increasing size and
    returns the first KKT point with feasible primal and nonnegative duals.
    Raises InfeasibleConstraintsError when no subset yields a feasible
    point, and EnumerationCapError when there are too many inequalities.
    """
    n = H.shape[0]
    f = np.asarray(f, dtype=float).reshape(n)
    m = 0 if G is None else G.shape[0]
    if m > cap:
        raise EnumerationCapError(m, cap)
    neq = 0 if Aeq is None else Aeq.shape[0]
    scale = 1.0 + float(np.max(np.abs(H))) + float(np.max(np.abs(f), initial=0.0))
    best_violation = np.inf
    for size in range(0, m + 1):
        for subset in combinations(range(m), size):
            rows = list(subset)
            if neq:
                Aact = np.vstack([Aeq] + ([G[rows]] if rows else []))
                bact = np.concatenate([beq] + ([h[rows]] if rows else []))
            elif rows:
                Aact, bact = G[rows], h[rows]
            else:
                Aact, bact = None, None
            if Aact is not None:
                if Aact.shape[0] > n:
                    continue
                if np.linalg.matrix_rank(Aact) < Aact.shape[0]:
                    continue
            try:
                z, lam = solve_equality_kkt(H, f, Aact, bact)
            except np.linalg.LinAlgError:
                continue
            lam_ineq = lam[neq:] if rows else np.zeros(0)
            if rows and np.any(lam_ineq < -tol * scale):
                continue
            if m:
                viol = float(np.max(G @ z - h, initial=-np.inf))
                best_violation = min(best_violation, max(viol, 0.0))
                if viol > tol * scale:
                    continue
            lam_full = np.zeros(m)
            if rows:
                lam_full[rows] = lam_ineq
            return z, lam_full
    raise InfeasibleConstraintsError(
        "no active subset yields a feasible KKT point",
        max_violation=None if best_violation is np.inf else best_violation)


def project_polyhedron(point: Array, G: Array, h: Array,
                       weights: Optional[Array] = None,
                       cap: int = DEFAULT_CAP) -> Array:
    """Projection of a point onto {z : Gz <= h}, optionally in a diagonal metric."""
    n = point.shape[0]
    W = np.eye(n) if weights is None else np.diag(np.asarray(weights, dtype=float))
    z, _ = solve_qp(W, -W @ point, G=G, h=h, cap=cap)
    return z


def ball_projection(v: Array, radius: float) -> Array:
    """Euclidean projection onto a centered norm ball."""
    nrm = float(np.linalg.norm(v))
    if nrm <= radius:
        return v.copy()
    return v * (radius / nrm)


def fit_log_decay(values: Array, burn_in_frac: float = 0.1,
                  floor_rel: float = 1e-13) -> tuple[float, float]:
    """Least-squares geometric decay rate of a positive trace.

    Fits log(values) ~ a + t*log(rate) over the window after burn-in and
    before the trace hits its numerical floor.  Returns (rate, rmse of the
    fit in log space); (nan, nan) if fewer than two usable points remain.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float("nan"), float("nan")
    top = float(np.max(v))
    if top <= 0.0:
        return 0.0, 0.0
    start = int(np.floor(burn_in_frac * v.size))
    usable = np.flatnonzero(v > floor_rel * top)
    usable = usable[usable >= start]
    if usable.size < 2:
        return float("nan"), float("nan")
    t = usable.astype(float)
    y = np.log(v[usable])
    Adesign = np.vstack([np.ones_like(t), t]).T
    coef, *_ = np.linalg.lstsq(Adesign, y, rcond=None)
    resid = y - Adesign @ coef
    rmse = float(np.sqrt(np.mean(resid**2)))
    return float(np.exp(coef[1])), rmse
