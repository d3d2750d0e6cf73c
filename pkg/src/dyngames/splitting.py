"""Douglas-Rachford splitting for constrained open-loop equilibria.

The equilibrium conditions are written as a three-operator inclusion in the
stacked state-action variable [x, u]: a scaled gradient operator (zeros on
the state block, the game pseudo-gradient on the action block), the normal
cone of the dynamics-consistent set, and the normal cone of the stage
constraint set.  Singling out any one operator and grouping the other two
yields a two-operator splitting solved by the reflected-resolvent iteration

    w <- (1 - alpha) w + alpha R_2(R_1(w)),   R_i = 2 r_i - I,

with alpha in (0, 1).  The three groupings give three schemes, named by the
operator that gets its own resolvent:

* ``constraints``: r_1 solves a proximally regularized unconstrained dynamic
  game (states eliminated by rollout, solved by iterated backward sweeps),
  r_2 projects stagewise onto the constraint sets.
* ``dynamics``: r_1 solves independent regularized constrained static games
  per stage (the state coordinate acts as an extra coordinating player),
  r_2 projects onto the dynamics by a Riccati tracking sweep.
* ``gradient``: r_1 projects onto the intersection of dynamics and
  constraints (alternating Dykstra corrections between the two projections),
  r_2 solves independent regularized unconstrained static games per stage.

The stagewise static-game resolvents read the cost operator stage by stage;
their fixed points coincide with the variational equilibrium exactly when
the players share state-cost gradients (the coordinator row uses the mean
of the players' state gradients).  The ``constraints`` scheme carries no
such restriction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from . import denseqp
from .errors import (
    InfeasibleConstraintsError,
    SubproblemError,
    UnsupportedConstraintError,
)
from .feedback import extract_lq_data, solve_lq_open_loop, solve_unconstrained_newton
from .gradient import playerwise_minimizer_check, pseudo_gradient
from .model import (
    DEFAULT_ACTIVE_TOL,
    GameDefinition,
    Trajectory,
    all_player_costs,
    rollout,
)
from .report import (
    TERM_DIVERGENCE,
    TERM_MAX_ITER,
    TERM_TOLERANCE,
    SolverReport,
    build_report,
)

Array = np.ndarray

SCHEME_CONSTRAINTS = "constraints"
SCHEME_DYNAMICS = "dynamics"
SCHEME_GRADIENT = "gradient"
SCHEMES = (SCHEME_CONSTRAINTS, SCHEME_DYNAMICS, SCHEME_GRADIENT)


@dataclass
class DrConfig:
    """Scheme selection, regularization and iteration budget for dr_solve."""

    scheme: str = SCHEME_CONSTRAINTS
    eta: float = 1e-4
    alpha: float = 0.5
    max_iter: int = 10_000
    tol: float = 1e-8
    inner_tol: float = 1e-10
    inner_max_iter: int = 300
    active_tol: float = DEFAULT_ACTIVE_TOL
    divergence_factor: float = 1e8
    record_costs: bool = True
    run_checks: bool = True
    reg_game_free_state: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; pick one of {SCHEMES}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"averaging weight must lie strictly in (0,1), got {self.alpha}")
        if self.eta <= 0.0:
            raise ValueError(f"regularization must be positive, got {self.eta}")


@dataclass
class ExtendedIterate:
    """The stacked splitting variable [x, u] plus its reflected auxiliary pair."""

    x: Array
    u: Array
    y: Optional[Array] = None
    z: Optional[Array] = None

    def vector(self) -> Array:
        return np.concatenate([self.x.ravel(), self.u.ravel()])


def extended_gradient(game: GameDefinition, x: Array, u: Array) -> Array:
    """Stacked-variable gradient: zeros on the state block, pseudo-gradient on u.

    The action-block gradient is evaluated on the trajectory obtained by
    rolling the dynamics out under u; the x argument only fixes the shape of
    the zero block.
    """
    traj = rollout(game, game.initial_state, u)
    pg = pseudo_gradient(game, traj)
    own = pg.own_stage_grads()
    return np.concatenate([np.zeros(np.asarray(x).size), own.ravel()])


# ---------------------------------------------------------------------------
# Regularized unconstrained dynamic game (resolvent of gradient + dynamics).
# ---------------------------------------------------------------------------


def regularized_game(game: GameDefinition, y: Array, z: Array,
                     eta: float) -> GameDefinition:
    """Game with costs eta*c_{n,k} + 0.5(|x_k - y_k|^2 + |u_k - z_k|^2), no constraints.

    Scaling all players' costs by eta > 0 leaves equilibria unchanged and
    makes the proximal terms unit weight, so stationarity of this game is
    exactly the resolvent condition of the scaled gradient operator.
    """
    n_x, n_u, N = game.state_dim, game.total_action_dim, game.num_players
    base_c, base_g, base_h = game.eval_costs, game.eval_cost_gradients, game.eval_cost_hessians

    def costs(k, x, u):
        pen = 0.5 * (np.sum((x - y[k]) ** 2) + np.sum((u - z[k]) ** 2))
        return eta * base_c(k, x, u) + pen

    def grads(k, x, u):
        cx, cu = base_g(k, x, u)
        return eta * cx + (x - y[k]), eta * cu + (u - z[k])

    def hess(k, x, u):
        cxx, cxu, cuu = base_h(k, x, u)
        return (eta * cxx + np.eye(n_x), eta * cxu,
                eta * cuu + np.eye(n_u))

    return GameDefinition(
        horizon=game.horizon, state_dim=n_x, action_dims=game.action_dims,
        initial_state=game.initial_state,
        dynamics=game.dynamics, stage_costs=costs,
        dynamics_jacobians=game.dynamics_jacobians,
        dynamics_hessians=game.dynamics_hessians,
        cost_gradients=grads, cost_hessians=hess,
        linear_dynamics=game.linear_dynamics,
    )


def resolvent_reg_game(game: GameDefinition, y: Array, z: Array, eta: float,
                       inner_tol: float = 1e-10, inner_max_iter: int = 300,
                       warm: Optional[Trajectory] = None,
                       free_state: bool = False) -> tuple[Array, Array]:
    """Equilibrium of the proximally regularized unconstrained dynamic game.

    By default the states are eliminated by rollout and the state proximal
    term acts through the rolled-out trajectory; backward sweeps iterate to
    pseudo-gradient stationarity.  With ``free_state`` the state block is
    kept as an independent coordinate (coordinator row with the mean state
    gradient) and the stationarity system of the linear-quadratic data is
    solved densely; this is an experimental alternative reading, exact only
    for linear-quadratic games.
    """
    if free_state:
        return _resolvent_reg_game_free_state(game, y, z, eta)
    if game.linear_dynamics and game.quadratic_costs:
        traj = _regularized_lq_solve(game, y, z, eta)
        return traj.states, traj.actions
    reg = regularized_game(game, y, z, eta)
    if warm is None or warm.actions.shape != (game.horizon + 1, game.total_action_dim):
        warm = rollout(reg, reg.initial_state, z)
    else:
        warm = rollout(reg, reg.initial_state, warm.actions)
    traj, _ = solve_unconstrained_newton(reg, warm, tol=inner_tol,
                                         max_iter=inner_max_iter)
    return traj.states.copy(), traj.actions.copy()


def _regularized_lq_solve(game: GameDefinition, y: Array, z: Array, eta: float):
    """Exact one-sweep resolvent for declared linear-quadratic games.

    The regularized game is itself linear-quadratic, so its open-loop
    equilibrium comes from one costate-elimination sweep; only the linear
    cost terms depend on the nominal pair, everything else is cached on the
    game object.
    """
    from .feedback import LqGameData

    cache = getattr(game, "_reg_lq_cache", None)
    if cache is None or cache[0] != eta:
        base = getattr(game, "_lq_base_cache", None)
        if base is None:
            base = extract_lq_data(game)
            object.__setattr__(game, "_lq_base_cache", base)
        T = game.horizon
        N = game.num_players
        n_x, n_u = game.state_dim, game.total_action_dim
        Q = [[eta * base.Q[n][k] + np.eye(n_x) for k in range(T + 1)] for n in range(N)]
        X = [[eta * base.X[n][k] for k in range(T + 1)] for n in range(N)]
        R = [[eta * base.R[n][k] + np.eye(n_u) for k in range(T + 1)] for n in range(N)]
        cache = (eta, base, Q, X, R)
        object.__setattr__(game, "_reg_lq_cache", cache)
    _, base, Q, X, R = cache
    T = game.horizon
    N = game.num_players
    qv = [[eta * base.q[n][k] - y[k] for k in range(T + 1)] for n in range(N)]
    rv = [[eta * base.r[n][k] - z[k] for k in range(T + 1)] for n in range(N)]
    data = LqGameData(A=base.A, B=base.B, b=base.b, Q=Q, X=X, R=R,
                      q=qv, r=rv, action_dims=game.action_dims,
                      initial_state=game.initial_state)
    return solve_lq_open_loop(data)


def _resolvent_reg_game_free_state(game, y, z, eta):
    """Dense stationarity solve with the state kept as a free coordinate."""
    if not game.linear_dynamics:
        raise UnsupportedConstraintError(
            "free-state resolvent requires linear dynamics")
    T = game.horizon
    n_x, n_u, N = game.state_dim, game.total_action_dim, game.num_players
    ref = rollout(game, game.initial_state, z)
    # x-block unknowns for k=0..T, u for k=0..T, one costate per dynamics row,
    # plus a multiplier pinning x_0.
    dim = (T + 1) * (n_x + n_u) + T * n_x + n_x
    ox, ou = 0, (T + 1) * n_x
    onu = ou + (T + 1) * n_u

    A = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    eqi = 0
    jac = [game.eval_dynamics_jacobians(k, ref.states[k], ref.actions[k])
           for k in range(T)]
    bvec = [game.eval_dynamics(k, np.zeros(n_x), np.zeros(n_u)) for k in range(T)]
    for k in range(T + 1):
        cx, cu = game.eval_cost_gradients(k, ref.states[k], ref.actions[k])
        cxx, cxu, cuu = game.eval_cost_hessians(k, ref.states[k], ref.actions[k])
        # Linearize gradients around the reference (exact for LQ costs).
        gx0 = np.mean(cx, axis=0) - np.mean(cxx, axis=0) @ ref.states[k] \
            - np.mean(cxu, axis=0) @ ref.actions[k]
        for i in range(n_x):
            r = eqi
            eqi += 1
            A[r, ox + k * n_x:ox + (k + 1) * n_x] += eta * np.mean(cxx, axis=0)[i]
            A[r, ou + k * n_u:ou + (k + 1) * n_u] += eta * np.mean(cxu, axis=0)[i]
            A[r, ox + k * n_x + i] += 1.0
            rhs[r] += y[k][i] - eta * gx0[i]
            if k < T:
                Ak, _ = jac[k]
                A[r, onu + k * n_x:onu + (k + 1) * n_x] -= Ak[:, i]
            if k >= 1:
                A[r, onu + (k - 1) * n_x + i] += 1.0
            else:
                A[r, onu + T * n_x + i] += 1.0  # multiplier of the x_0 pin
        for n in range(N):
            sl = game.action_slice(n)
            gu0 = cu[n] - cxu[n].T @ ref.states[k] - cuu[n] @ ref.actions[k]
            for i in range(sl.start, sl.stop):
                r = eqi
                eqi += 1
                A[r, ox + k * n_x:ox + (k + 1) * n_x] += eta * cxu[n].T[i]
                A[r, ou + k * n_u:ou + (k + 1) * n_u] += eta * cuu[n][i]
                A[r, ou + k * n_u + i] += 1.0
                rhs[r] += z[k][i] - eta * gu0[i]
                if k < T:
                    _, Bk = jac[k]
                    A[r, onu + k * n_x:onu + (k + 1) * n_x] -= Bk[:, i]
    for k in range(T):
        Ak, Bk = jac[k]
        for i in range(n_x):
            r = eqi
            eqi += 1
            A[r, ox + (k + 1) * n_x + i] += 1.0
            A[r, ox + k * n_x:ox + (k + 1) * n_x] -= Ak[i]
            A[r, ou + k * n_u:ou + (k + 1) * n_u] -= Bk[i]
            rhs[r] += bvec[k][i]
    for i in range(n_x):
        r = eqi
        eqi += 1
        A[r, ox + i] += 1.0
        rhs[r] += game.initial_state[i]
    sol = np.linalg.solve(A, rhs)
    xs = sol[:ou].reshape(T + 1, n_x)
    us = sol[ou:onu].reshape(T + 1, n_u)
    return xs, us


# ---------------------------------------------------------------------------
# Stagewise projections and static-game resolvents.
# ---------------------------------------------------------------------------


def _stage_constraint_data(game: GameDefinition, k: int):
    """Affine row data (W, S, p0) of stage k; requires polyhedral constraints."""
    zx = np.zeros(game.state_dim)
    zu = np.zeros(game.total_action_dim)
    p0 = game.eval_constraints(k, zx, zu)
    if p0.shape[0] == 0:
        return None
    W, S = game.eval_constraint_jacobians(k, zx, zu)
    return W, S, p0


def project_stage_constraints(game: GameDefinition, y: Array,
                              z: Array) -> tuple[Array, Array]:
    """Stagewise projection of (y, z) onto the constraint sets.

    Uses the game's analytic stage projector when available, otherwise an
    exact polyhedron projection for affine rows.  Stages without constraints
    pass through unchanged.
    """
    T = game.horizon
    xs, us = np.array(y, dtype=float, copy=True), np.array(z, dtype=float, copy=True)
    if game.constraints is None:
        return xs, us
    for k in range(T + 1):
        if game.stage_projector is not None:
            xs[k], us[k] = game.stage_projector(k, y[k], z[k])
            continue
        if not game.polyhedral_constraints:
            raise UnsupportedConstraintError(
                f"stage {k} has neither an analytic projector nor affine rows")
        data = _stage_constraint_data(game, k)
        if data is None:
            continue
        W, S, p0 = data
        G = np.hstack([W, S])
        point = np.concatenate([y[k], z[k]])
        proj = denseqp.project_polyhedron(point, G, -p0)
        xs[k], us[k] = proj[:game.state_dim], proj[game.state_dim:]
    return xs, us


def _own_stacked_cost_rows(game, cu):
    """Assemble the u-vector whose block n is player n's own-action gradient."""
    out = np.empty(game.total_action_dim)
    for n in range(game.num_players):
        sl = game.action_slice(n)
        out[sl] = cu[n][sl]
    return out


def _stage_newton_system(game, k, x, u, yk, zk, eta, Wa, Sa, mu):
    """Residual and Jacobian of one regularized stage game's KKT system."""
    n_x, n_u, N = game.state_dim, game.total_action_dim, game.num_players
    cx, cu = game.eval_cost_gradients(k, x, u)
    cxx, cxu, cuu = game.eval_cost_hessians(k, x, u)
    m = Wa.shape[0]
    r_x = eta * np.mean(cx, axis=0) + (x - yk)
    r_u = eta * _own_stacked_cost_rows(game, cu) + (u - zk)
    if m:
        r_x = r_x + Wa.T @ mu
        r_u = r_u + Sa.T @ mu
    res = [r_x, r_u]
    J = np.zeros((n_x + n_u + m, n_x + n_u + m))
    J[:n_x, :n_x] = eta * np.mean(cxx, axis=0) + np.eye(n_x)
    J[:n_x, n_x:n_x + n_u] = eta * np.mean(cxu, axis=0)
    own_cxu = np.empty((n_u, n_x))
    own_cuu = np.empty((n_u, n_u))
    for n in range(N):
        sl = game.action_slice(n)
        own_cxu[sl] = cxu[n].T[sl]
        own_cuu[sl] = cuu[n][sl]
    J[n_x:n_x + n_u, :n_x] = eta * own_cxu
    J[n_x:n_x + n_u, n_x:n_x + n_u] = eta * own_cuu + np.eye(n_u)
    if m:
        J[:n_x, n_x + n_u:] = Wa.T
        J[n_x:n_x + n_u, n_x + n_u:] = Sa.T
        J[n_x + n_u:, :n_x] = Wa
        J[n_x + n_u:, n_x:n_x + n_u] = Sa
    return np.concatenate(res), J


def _solve_stage_game(game, k, yk, zk, eta, rows, active, inner_tol,
                      inner_max_iter):
    """Newton solve of one stage's regularized game with a pinned active set.

    Returns (x, u, mu, ok); quadratic costs converge in one step.
    """
    n_x, n_u = game.state_dim, game.total_action_dim
    if rows is None:
        Wa = np.zeros((0, n_x))
        Sa = np.zeros((0, n_u))
        pa = np.zeros(0)
    else:
        W, S, p0 = rows
        Wa, Sa, pa = W[active], S[active], p0[active]
    m = Wa.shape[0]
    x, u, mu = yk.copy(), zk.copy(), np.zeros(m)
    for _ in range(inner_max_iter):
        res, J = _stage_newton_system(game, k, x, u, yk, zk, eta, Wa, Sa, mu)
        if m:
            res = np.concatenate([res, Wa @ x + Sa @ u + pa])
        if np.max(np.abs(res)) <= inner_tol * (1.0 + np.max(np.abs(np.concatenate([yk, zk])))):
            return x, u, mu, True
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            return x, u, mu, False
        x = x + step[:n_x]
        u = u + step[n_x:n_x + n_u]
        if m:
            mu = mu + step[n_x + n_u:]
    return x, u, mu, False


def resolvent_reg_static_games(game: GameDefinition, y: Array, z: Array,
                               eta: float, inner_tol: float = 1e-10,
                               inner_max_iter: int = 50,
                               cap: int = denseqp.DEFAULT_CAP) -> tuple[Array, Array]:
    """Independent regularized constrained static games, one per stage.

    Each stage solves, over (x_k, u_k), the game whose action rows are the
    players' own-gradient stationarity and whose state row is the
    coordinator (mean state gradient plus prox), subject to the stage's
    affine rows; the active subset is found by enumeration with dual and
    primal checks.  Requires affine constraints.
    """
    if game.constraints is not None and not game.polyhedral_constraints:
        raise UnsupportedConstraintError(
            "stagewise constrained static games require affine rows")
    T = game.horizon
    xs = np.empty_like(np.asarray(y, dtype=float))
    us = np.empty_like(np.asarray(z, dtype=float))
    for k in range(T + 1):
        rows = _stage_constraint_data(game, k) if game.constraints is not None else None
        m = 0 if rows is None else rows[2].shape[0]
        if m > cap:
            raise SubproblemError(
                f"stage {k} has {m} constraint rows, beyond the enumeration cap")
        solved = False
        scale = 1.0 + float(np.max(np.abs(np.concatenate([y[k], z[k]]))))
        for size in range(m + 1):
            for active in combinations(range(m), size):
                active = list(active)
                if active:
                    Sa_rows = np.hstack([rows[0][active], rows[1][active]])
                    if np.linalg.matrix_rank(Sa_rows) < len(active):
                        continue
                x, u, mu, ok = _solve_stage_game(
                    game, k, y[k], z[k], eta, rows, active, inner_tol,
                    inner_max_iter)
                if not ok:
                    continue
                if mu.size and np.min(mu) < -1e-8 * scale:
                    continue
                if rows is not None:
                    g = rows[0] @ x + rows[1] @ u + rows[2]
                    if np.max(g, initial=-np.inf) > 1e-8 * scale:
                        continue
                xs[k], us[k] = x, u
                solved = True
                break
            if solved:
                break
        if not solved:
            raise SubproblemError(
                f"no active subset solved the regularized static game at stage {k}")
    return xs, us


def resolvent_static_games_uncon(game: GameDefinition, y: Array, z: Array,
                                 eta: float, inner_tol: float = 1e-10,
                                 inner_max_iter: int = 50) -> tuple[Array, Array]:
    """Independent regularized unconstrained static games, one per stage."""
    T = game.horizon
    xs = np.empty_like(np.asarray(y, dtype=float))
    us = np.empty_like(np.asarray(z, dtype=float))
    for k in range(T + 1):
        x, u, _, ok = _solve_stage_game(game, k, y[k], z[k], eta, None, [],
                                        inner_tol, inner_max_iter)
        if not ok:
            raise SubproblemError(
                f"stage {k} regularized static game did not converge")
        xs[k], us[k] = x, u
    return xs, us


# ---------------------------------------------------------------------------
# Dynamics projection (Riccati tracking) and the intersection projection.
# ---------------------------------------------------------------------------


def project_dynamics(game: GameDefinition, y: Array, z: Array,
                     linearize: bool = False,
                     sweeps: int = 25, tol: float = 1e-10) -> tuple[Array, Array]:
    """Projection of (y, z) onto the dynamics-consistent trajectories.

    Minimizes sum_k |x_k - y_k|^2 + |u_k - z_k|^2 subject to the dynamics
    and the pinned initial state; solved exactly by one backward/forward
    Riccati tracking sweep for linear dynamics.  For nonlinear dynamics the
    ``linearize`` flag enables repeated linearization about the current
    rollout.
    """
    if not game.linear_dynamics and not linearize:
        raise UnsupportedConstraintError(
            "dynamics projection requires linear dynamics (or linearize=True)")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    ref = rollout(game, game.initial_state, z)
    n_sweeps = 1 if game.linear_dynamics else sweeps
    for _ in range(n_sweeps):
        _, us = _tracking_sweep(game, ref, y, z)
        new_ref = rollout(game, game.initial_state, us)
        if game.linear_dynamics or np.max(np.abs(new_ref.actions - ref.actions)) <= tol:
            return new_ref.states, us
        ref = new_ref
    return new_ref.states, us


def _tracking_sweep(game, ref, y, z):
    T = game.horizon
    n_x, n_u = game.state_dim, game.total_action_dim
    jac = [game.eval_dynamics_jacobians(k, ref.states[k], ref.actions[k])
           for k in range(T)]
    if game.linear_dynamics:
        consts = [game.eval_dynamics(k, np.zeros(n_x), np.zeros(n_u))
                  for k in range(T)]
    else:
        consts = [game.eval_dynamics(k, ref.states[k], ref.actions[k])
                  - jac[k][0] @ ref.states[k] - jac[k][1] @ ref.actions[k]
                  for k in range(T)]
    P = np.eye(n_x)
    qv = y[T].copy()
    Ks: list[Array] = [None] * T
    ds: list[Array] = [None] * T
    for k in range(T - 1, -1, -1):
        A, B = jac[k]
        b = consts[k]
        M = np.eye(n_u) + B.T @ P @ B
        K = -np.linalg.solve(M, B.T @ P @ A)
        d = np.linalg.solve(M, z[k] + B.T @ (qv - P @ b))
        F = A + B @ K
        f = B @ d + b
        Pn = np.eye(n_x) + K.T @ K + F.T @ P @ F
        qn = y[k] + K.T @ (z[k] - d) - F.T @ (P @ f) + F.T @ qv
        P, qv = 0.5 * (Pn + Pn.T), qn
        Ks[k], ds[k] = K, d
    xs = np.empty((T + 1, n_x))
    us = np.empty((T + 1, n_u))
    xs[0] = game.initial_state
    for k in range(T):
        us[k] = Ks[k] @ xs[k] + ds[k]
        A, B = jac[k]
        xs[k + 1] = A @ xs[k] + B @ us[k] + consts[k]
    us[T] = z[T]
    return xs, us


def constrained_oc_projection(game: GameDefinition, y: Array, z: Array,
                              inner_tol: float = 1e-9,
                              inner_max_iter: int = 2000) -> tuple[Array, Array]:
    """Projection of (y, z) onto dynamics AND stage constraints jointly.

    Alternates the two available projections with Dykstra correction terms,
    which converges to the exact projection onto the intersection for the
    convex constraint classes supported here.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    px = np.zeros_like(y)
    pu = np.zeros_like(z)
    qx = np.zeros_like(y)
    qu = np.zeros_like(z)
    ax, au = y, z
    for it in range(inner_max_iter):
        bx, bu = project_dynamics(game, ax + px, au + pu)
        px = ax + px - bx
        pu = au + pu - bu
        ax_new, au_new = project_stage_constraints(game, bx + qx, bu + qu)
        qx = bx + qx - ax_new
        qu = bu + qu - au_new
        gap = max(float(np.max(np.abs(ax_new - bx))), float(np.max(np.abs(au_new - bu))))
        ax, au = ax_new, au_new
        if gap <= inner_tol:
            return bx, bu
    viol = _constraint_violation(game, Trajectory(bx, bu))
    raise InfeasibleConstraintsError(
        f"intersection projection stalled after {inner_max_iter} sweeps "
        f"(gap {gap:.3e})", max_violation=viol)


def _constraint_violation(game: GameDefinition, traj: Trajectory) -> float:
    if game.constraints is None:
        return 0.0
    worst = 0.0
    for k in range(game.horizon + 1):
        g = game.eval_constraints(k, traj.states[k], traj.actions[k])
        if g.size:
            worst = max(worst, float(np.max(np.maximum(g, 0.0))))
    return worst


# ---------------------------------------------------------------------------
# Action-space projection used by the projected-gradient solver.
# ---------------------------------------------------------------------------


def action_space_projection(game: GameDefinition, target: Array,
                            tol: float = 1e-9, alpha: float = 0.5,
                            max_iter: int = 5000) -> Array:
    """argmin |u - target|^2 over action sequences with a feasible rollout.

    Splits the problem between the dynamics projection and a stagewise
    resolvent that absorbs the action-tracking cost into the constraint-set
    projection (a weighted polyhedron projection); the objective has no
    state term, so the action weight in that resolvent is 3 = 1 + 2.
    """
    if not (game.linear_dynamics and game.polyhedral_constraints):
        raise UnsupportedConstraintError(
            "action-space projection requires linear dynamics and affine rows")
    T = game.horizon
    n_x, n_u = game.state_dim, game.total_action_dim
    wx = rollout(game, game.initial_state, target).states
    wu = np.asarray(target, dtype=float).copy()
    weights = np.concatenate([np.ones(n_x), 3.0 * np.ones(n_u)])
    last = None
    for it in range(max_iter):
        # resolvent of (tracking-gradient + constraint normal cone)
        rx = np.empty_like(wx)
        ru = np.empty_like(wu)
        for k in range(T + 1):
            pt = np.concatenate([wx[k], (wu[k] + 2.0 * target[k]) / 3.0])
            rows = _stage_constraint_data(game, k) if game.constraints is not None else None
            if rows is None:
                rx[k], ru[k] = pt[:n_x], pt[n_x:]
            else:
                W, S, p0 = rows
                G = np.hstack([W, S])
                proj = denseqp.project_polyhedron(pt, G, -p0, weights=weights)
                rx[k], ru[k] = proj[:n_x], proj[n_x:]
        yx, yu = 2 * rx - wx, 2 * ru - wu
        dx, du = project_dynamics(game, yx, yu)
        gap = max(float(np.max(np.abs(dx - rx))), float(np.max(np.abs(du - ru))))
        wx = wx + 2 * alpha * (dx - rx)
        wu = wu + 2 * alpha * (du - ru)
        if gap <= tol:
            return du
        last = (du, gap)
    du, gap = last
    viol = _constraint_violation(game, rollout(game, game.initial_state, du))
    if viol > 10 * tol:
        raise InfeasibleConstraintsError(
            f"action-space projection stalled (gap {gap:.3e})", max_violation=viol)
    return du


# ---------------------------------------------------------------------------
# The splitting iteration.
# ---------------------------------------------------------------------------


def dr_solve(game: GameDefinition, cfg: DrConfig,
             w0: Optional[ExtendedIterate] = None) -> SolverReport:
    """Run the reflected-resolvent iteration; returns the last resolvent output.

    The averaged variable is the splitting shadow iterate; the equilibrium
    candidate is the output of the second resolvent of the final iteration,
    which lies in that resolvent's constraint set by construction.
    Convergence is monitored on the averaged-iterate step together with the
    dynamics and constraint residuals of the candidate.
    """
    T = game.horizon
    n_x, n_u = game.state_dim, game.total_action_dim
    if w0 is None:
        u_init = np.zeros((T + 1, n_u))
        x_init = rollout(game, game.initial_state, u_init).states
        w0 = ExtendedIterate(x=x_init, u=u_init)
    wx = np.array(w0.x, dtype=float, copy=True)
    wu = np.array(w0.u, dtype=float, copy=True)
    scale0 = 1.0 + float(np.linalg.norm(np.concatenate([wx.ravel(), wu.ravel()])))

    warm: Optional[Trajectory] = None
    iterates = [np.concatenate([wx.ravel(), wu.ravel()])]
    step_norms: list[float] = []
    costs: list[Array] = []
    termination = TERM_MAX_ITER
    cand_x, cand_u = wx, wu
    for it in range(cfg.max_iter):
        y, z = wx.copy(), wu.copy()
        tx, tu = _first_resolvent(game, cfg, y, z, warm)
        if cfg.scheme == SCHEME_CONSTRAINTS:
            warm = Trajectory(tx, tu)
        y, z = 2 * tx - y, 2 * tu - z
        tx, tu = _second_resolvent(game, cfg, y, z)
        y, z = 2 * tx - y, 2 * tu - z
        new_wx = (1 - cfg.alpha) * wx + cfg.alpha * y
        new_wu = (1 - cfg.alpha) * wu + cfg.alpha * z
        step = max(float(np.max(np.abs(new_wx - wx))), float(np.max(np.abs(new_wu - wu))))
        wx, wu = new_wx, new_wu
        cand_x, cand_u = tx, tu
        step_norms.append(step)
        iterates.append(np.concatenate([wx.ravel(), wu.ravel()]))
        if cfg.record_costs:
            costs.append(all_player_costs(game, rollout(game, game.initial_state, tu)))
        cand = Trajectory(cand_x, cand_u)
        dyn_res = float(np.max(cand.dynamics_residuals(game), initial=0.0))
        con_res = _constraint_violation(game, cand)
        if max(step, dyn_res, con_res) <= cfg.tol:
            termination = TERM_TOLERANCE
            break
        if np.linalg.norm(np.concatenate([wx.ravel(), wu.ravel()])) \
                > cfg.divergence_factor * scale0:
            termination = TERM_DIVERGENCE
            break
    final = Trajectory(cand_x, cand_u)
    verdicts = []
    if cfg.run_checks and termination != TERM_DIVERGENCE:
        checked = rollout(game, game.initial_state, cand_u)
        verdicts = playerwise_minimizer_check(game, checked)
    return build_report(
        trajectory=final,
        iterates=iterates,
        step_norms=step_norms,
        termination=termination,
        verdicts=verdicts,
        cost_trace=np.asarray(costs) if costs else None,
        final_costs=all_player_costs(game, rollout(game, game.initial_state, cand_u)),
        dynamics_residual=float(np.max(final.dynamics_residuals(game), initial=0.0)),
        constraint_residual=_constraint_violation(game, final))


def _first_resolvent(game, cfg, y, z, warm):
    if cfg.scheme == SCHEME_CONSTRAINTS:
        return resolvent_reg_game(game, y, z, cfg.eta,
                                  inner_tol=cfg.inner_tol,
                                  inner_max_iter=cfg.inner_max_iter,
                                  warm=warm,
                                  free_state=cfg.reg_game_free_state)
    if cfg.scheme == SCHEME_DYNAMICS:
        return resolvent_reg_static_games(game, y, z, cfg.eta,
                                          inner_tol=cfg.inner_tol)
    return constrained_oc_projection(game, y, z, inner_tol=max(cfg.inner_tol, 1e-11),
                                     inner_max_iter=cfg.inner_max_iter * 20)


def _second_resolvent(game, cfg, y, z):
    if cfg.scheme == SCHEME_CONSTRAINTS:
        return project_stage_constraints(game, y, z)
    if cfg.scheme == SCHEME_DYNAMICS:
        return project_dynamics(game, y, z)
    return resolvent_static_games_uncon(game, y, z, cfg.eta,
                                        inner_tol=cfg.inner_tol)
