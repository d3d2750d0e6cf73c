"""Exact solvers for quadratic parametric games with linear constraints.

A parametric game has per-player costs

    J_n(x, u) = 0.5 [1, x, u]' Gamma_n [1, x, u]

over a joint action u partitioned among players, with the vector x acting as
a parameter.  With equality constraints W x + S u + p = 0 the equilibrium is
a single affine law u = K x + s; with inequality constraints it is piecewise
affine over a polyhedral partition of the parameter space, obtained by
enumerating candidate active sets.

The equality-constrained solve stacks each player's own-block stationarity
with the constraint rows into one KKT system

    [F  S'] [u]     [P x + H]
    [S  0 ] [lam] = -[W x + p]

where row block n of F, P, H collects player n's own-action rows of
Gamma_n.  Solving this linear system (rather than substituting printed
closed-form factors) keeps the signs honest and only requires the KKT
matrix to be invertible; every returned law is verified against the KKT
residual at sample parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import EnumerationCapError, StageSingularityError, SubproblemError

Array = np.ndarray

ENUMERATION_CAP = 12


@dataclass(frozen=True)
class ParametricGameData:
    """Quadratic blocks and constraint rows of a parametric game.

    ``gammas`` has shape (N, 1+n_x+n_u, 1+n_x+n_u), one symmetric matrix per
    player.  ``W, S, p`` describe the constraint rows W x + S u + p (interpreted
    as equalities or inequalities by the solver that consumes them).
    """

    gammas: Array
    W: Array
    S: Array
    p: Array
    action_dims: tuple[int, ...]
    state_dim: int

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        object.__setattr__(self, "gammas", g)
        n_u = sum(self.action_dims)
        nz = 1 + self.state_dim + n_u
        if g.shape != (len(self.action_dims), nz, nz):
            raise ValueError(f"gamma blocks must have shape {(len(self.action_dims), nz, nz)}, "
                             f"got {g.shape}")
        if not np.allclose(g, np.transpose(g, (0, 2, 1)), atol=1e-9 * (1 + np.abs(g).max())):
            raise ValueError("gamma blocks must be symmetric")
        W = np.asarray(self.W, dtype=float).reshape(-1, self.state_dim)
        S = np.asarray(self.S, dtype=float).reshape(-1, n_u)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "p", p)

    @property
    def num_players(self) -> int:
        return len(self.action_dims)

    @property
    def total_action_dim(self) -> int:
        return int(sum(self.action_dims))

    def stationarity_blocks(self) -> tuple[Array, Array, Array]:
        """(F, P, H): stacked own-block rows of the players' gamma matrices."""
        n_x, n_u = self.state_dim, self.total_action_dim
        F = np.empty((n_u, n_u))
        P = np.empty((n_u, n_x))
        H = np.empty(n_u)
        off = 0
        for n, d in enumerate(self.action_dims):
            rows = slice(1 + n_x + off, 1 + n_x + off + d)
            F[off:off + d] = self.gammas[n][rows, 1 + n_x:]
            P[off:off + d] = self.gammas[n][rows, 1:1 + n_x]
            H[off:off + d] = self.gammas[n][rows, 0]
            off += d
        return F, P, H


@dataclass
class AffineLaw:
    """u = K x + s with the accompanying multiplier law lam = lam_K x + lam_s."""

    K: Array
    s: Array
    lam_K: Array
    lam_s: Array


@dataclass
class PolicyRegion:
    active: tuple[int, ...]
    K: Array
    s: Array
    L: Array
    l: Array

    def contains(self, x: Array, tol: float = 1e-9) -> bool:
        if self.L.shape[0] == 0:
            return True
        return bool(np.max(self.L @ x + self.l) <= tol)


@dataclass
class PiecewiseAffinePolicy:
    regions: list[PolicyRegion]
    action_dims: tuple[int, ...] = ()
    skipped_rank_deficient: tuple[tuple[int, ...], ...] = field(default_factory=tuple)

    def regions_containing(self, x: Array, tol: float = 1e-9) -> list[PolicyRegion]:
        return [r for r in self.regions if r.contains(x, tol)]

    def evaluate(self, x: Array, tol: float = 1e-9) -> Array:
        hits = self.regions_containing(x, tol)
        if not hits:
            raise SubproblemError(f"no policy region contains x = {x}")
        return hits[0].K @ x + hits[0].s


def cone_to_inequalities(S: Array) -> Array:
    """Matrix L with ``x in cone{rows of S}'' iff ``L x <= 0``.

    Requires S to have full row rank.  The three blocks express that the
    unique candidate multiplier (SS')^{-1} S x is nonnegative and that x has
    no component outside the row space.
    """
    S = np.asarray(S, dtype=float)
    m, n = S.shape
    sv = np.linalg.svd(S, compute_uv=False)
    if m == 0:
        return np.vstack([np.eye(n), -np.eye(n)])
    if sv[-1] <= max(m, n) * np.finfo(float).eps * sv[0]:
        raise StageSingularityError(0, "cone generator matrix is rank deficient")
    Minv = np.linalg.solve(S @ S.T, S)
    proj = S.T @ Minv
    return np.vstack([-Minv, np.eye(n) - proj, proj - np.eye(n)])


def _check_full_row_rank(S: Array) -> bool:
    if S.shape[0] == 0:
        return True
    if S.shape[0] > S.shape[1]:
        return False
    sv = np.linalg.svd(S, compute_uv=False)
    return sv[-1] > max(S.shape) * np.finfo(float).eps * sv[0]


def solve_lecq_parametric(data: ParametricGameData,
                          residual_check: bool = True) -> AffineLaw:
    """Affine equilibrium of the equality-constrained quadratic parametric game.

    Solves the stacked KKT system for the gain and offset pair and, unless
    disabled, verifies the KKT residuals at random parameters so that a sign
    or assembly mistake can never produce a silently wrong law.
    """
    F, P, H = data.stationarity_blocks()
    return solve_stage_kkt(F, P, H, data.W, data.S, data.p,
                           residual_check=residual_check)


def solve_stage_kkt(F: Array, P: Array, H: Array,
                    W: Array, S: Array, p: Array,
                    stage: int = 0, residual_check: bool = True,
                    rtol: float = 1e-8) -> AffineLaw:
    """Core KKT solve shared by the parametric and backward-pass solvers.

    Finds K, s (and multiplier gains) such that for every x,
    ``F(Kx+s) + Px + H + S'lam(x) = 0`` and ``W x + S(Kx+s) + p = 0``.
    With no constraint rows this reduces to ``u = -F^{-1}(Px + H)``.
    """
    n_u = F.shape[0]
    m = S.shape[0]
    if m > 0 and not _check_full_row_rank(S):
        raise StageSingularityError(stage, "active constraint rows are rank deficient")
    KKT = np.zeros((n_u + m, n_u + m))
    KKT[:n_u, :n_u] = F
    if m:
        KKT[:n_u, n_u:] = S.T
        KKT[n_u:, :n_u] = S
    rhs_K = np.zeros((n_u + m, P.shape[1]))
    rhs_K[:n_u] = -P
    rhs_s = np.zeros(n_u + m)
    rhs_s[:n_u] = -H
    if m:
        rhs_K[n_u:] = -W
        rhs_s[n_u:] = -p
    try:
        sol_K = np.linalg.solve(KKT, rhs_K)
        sol_s = np.linalg.solve(KKT, rhs_s)
    except np.linalg.LinAlgError as exc:
        raise StageSingularityError(stage, f"stage KKT system is singular ({exc})") from exc
    law = AffineLaw(K=sol_K[:n_u], s=sol_s[:n_u],
                    lam_K=sol_K[n_u:], lam_s=sol_s[n_u:])
    if residual_check:
        _validate_law(F, P, H, W, S, p, law, stage, rtol)
    return law


_PROBE_SEED = np.random.default_rng(0).standard_normal(512)


def _validate_law(F, P, H, W, S, p, law, stage, rtol):
    n_x = P.shape[1]
    scale = (np.abs(F).max() + np.abs(P).max(initial=0.0)
             + np.abs(H).max(initial=0.0) + 1.0)
    for probe in range(2):
        x = _PROBE_SEED[probe * n_x:(probe + 1) * n_x]
        u = law.K @ x + law.s
        lam = law.lam_K @ x + law.lam_s
        r1 = F @ u + P @ x + H + (S.T @ lam if S.shape[0] else 0.0)
        if np.max(np.abs(r1)) > rtol * scale:
            raise StageSingularityError(
                stage, f"stage KKT residual {np.max(np.abs(r1)):.2e} exceeds tolerance")
        if S.shape[0]:
            r2 = W @ x + S @ u + p
            if np.max(np.abs(r2)) > rtol * scale:
                raise StageSingularityError(
                    stage, f"stage constraint residual {np.max(np.abs(r2)):.2e} "
                    "exceeds tolerance")


def _region_nonempty(L: Array, l: Array, tol: float = 1e-9) -> bool:
    """Phase-1 feasibility of {x : Lx + l <= 0} via a bounded slack LP."""
    if L.shape[0] == 0:
        return True
    n = L.shape[1]
    # minimize t subject to Lx + l <= t, with t free and x box-bounded large.
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([L, -np.ones((L.shape[0], 1))])
    b_ub = -l
    bounds = [(-1e6, 1e6)] * n + [(-1e6, 1e6)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        return False
    return bool(res.fun <= tol)


def enumerate_lcq_parametric(data: ParametricGameData,
                             cap: int = ENUMERATION_CAP) -> PiecewiseAffinePolicy:
    """Piecewise affine equilibrium of the inequality-constrained game.

    For every candidate active subset with full-row-rank constraint rows
    the equality-constrained game is solved, and the subset's validity
    region (primal feasibility plus the multiplier cone condition) is built
    as a polyhedron in the parameter.  Empty regions are dropped; rank
    deficient subsets are skipped and recorded.
    """
    n_c = data.p.shape[0]
    if n_c > cap:
        raise EnumerationCapError(n_c, cap)
    F, P, H = data.stationarity_blocks()
    for n, d in enumerate(data.action_dims):
        off = sum(data.action_dims[:n])
        own = data.gammas[n][1 + data.state_dim + off:1 + data.state_dim + off + d,
                             1 + data.state_dim + off:1 + data.state_dim + off + d]
        eig = np.min(np.linalg.eigvalsh(0.5 * (own + own.T)))
        if eig <= 0:
            raise SubproblemError(
                f"player {n} own-action block is not positive definite (min eig {eig:.2e})")
    regions = []
    skipped = []
    for size in range(n_c + 1):
        for subset in combinations(range(n_c), size):
            rows = list(subset)
            Sa, Wa, pa = data.S[rows], data.W[rows], data.p[rows]
            if not _check_full_row_rank(Sa):
                skipped.append(tuple(subset))
                continue
            sub = ParametricGameData(gammas=data.gammas, W=Wa, S=Sa, p=pa,
                                     action_dims=data.action_dims,
                                     state_dim=data.state_dim)
            try:
                law = solve_lecq_parametric(sub)
            except StageSingularityError:
                skipped.append(tuple(subset))
                continue
            L_feas = data.W + data.S @ law.K
            l_feas = data.S @ law.s + data.p
            if size:
                Lcone = cone_to_inequalities(Sa)
                resid_K = -(F @ law.K + P)
                resid_s = -(F @ law.s + H)
                L = np.vstack([L_feas, Lcone @ resid_K])
                l = np.concatenate([l_feas, Lcone @ resid_s])
            else:
                L, l = L_feas, l_feas
            if _region_nonempty(L, l):
                regions.append(PolicyRegion(active=tuple(subset), K=law.K,
                                            s=law.s, L=L, l=l))
    return PiecewiseAffinePolicy(regions=regions, action_dims=data.action_dims,
                                 skipped_rank_deficient=tuple(skipped))


def solves_all_active_pieces(piece_games: Sequence[ParametricGameData],
                             x: Array, u: Array,
                             vi_residual_tol: float = 1e-7) -> bool:
    """Test predicate for piecewise-quadratic games given by polyhedral pieces.

    A candidate joint action solves the overall game at parameter x exactly
    when it solves the inequality-constrained quadratic game of every piece
    whose polyhedron contains (x, u).  Each piece check verifies the
    stationarity-with-multiplier conditions of the piece's quadratic game.
    """
    hit_any = False
    for piece in piece_games:
        g = piece.W @ x + piece.S @ u + piece.p
        if np.max(g, initial=-np.inf) > vi_residual_tol:
            continue
        hit_any = True
        F, P, H = piece.stationarity_blocks()
        grad = F @ u + P @ x + H
        act = np.flatnonzero(g >= -1e-7)
        if act.size == 0:
            if np.max(np.abs(grad)) > vi_residual_tol * (1 + np.abs(grad).max(initial=0.0)):
                return False
            continue
        Sa = piece.S[act]
        # -grad must lie in the cone of the active rows: nonnegative lstsq fit.
        lam, resid = nnls(Sa.T, -grad)
        if resid > vi_residual_tol * (1.0 + np.linalg.norm(grad)):
            return False
    return hit_any
