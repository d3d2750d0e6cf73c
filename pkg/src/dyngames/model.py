"""Constrained dynamic game model: definitions, rollouts, costs, derivatives.

A game runs over stages k = 0..T.  Dynamics ``x_{k+1} = f_k(x_k, u_k)`` are
defined for k < T; per-player stage costs ``c_{n,k}(x_k, u_k)`` and stagewise
inequality constraints ``g_k(x_k, u_k) <= 0`` are defined for k = 0..T.  The
joint action vector at a stage concatenates the players' action blocks.  An
action block is stored for k = T as well (it can enter the terminal cost but
never the dynamics), so state and action sequences both have T+1 entries.

All evaluation helpers fall back to central finite differences when a game
does not register analytic derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionError,
    InfeasibleTrajectoryError,
    NonFiniteDerivativeError,
    NonFiniteStateError,
)

Array = np.ndarray

# Central-difference steps: eps^(1/3) scaling for first derivatives,
# eps^(1/4) for second derivatives.
_FD_STEP1 = float(np.finfo(float).eps) ** (1.0 / 3.0)
_FD_STEP2 = float(np.finfo(float).eps) ** 0.25

DEFAULT_ACTIVE_TOL = 1e-6


@dataclass(frozen=True)
class GameDefinition:
    """Immutable description of a constrained dynamic game.

    Callables receive the stage index first so a single function can cover
    stage-dependent maps.  Cost callables are stacked over players: they
    return one row (or block) per player.  Analytic derivative suppliers are
    optional; evaluation methods below fall back to finite differences.

    Structural flags (``linear_dynamics``, ``polyhedral_constraints``,
    ``constraints_in_actions_only``) are declarations by the game
    constructor that unlock specialized solver paths; they are never
    inferred.
    """

    horizon: int
    state_dim: int
    action_dims: tuple[int, ...]
    initial_state: Array
    dynamics: Callable[[int, Array, Array], Array]
    stage_costs: Callable[[int, Array, Array], Array]
    constraints: Optional[Callable[[int, Array, Array], Array]] = None
    dynamics_jacobians: Optional[Callable[[int, Array, Array], tuple]] = None
    dynamics_hessians: Optional[Callable[[int, Array, Array], Array]] = None
    cost_gradients: Optional[Callable[[int, Array, Array], tuple]] = None
    cost_hessians: Optional[Callable[[int, Array, Array], tuple]] = None
    constraint_jacobians: Optional[Callable[[int, Array, Array], tuple]] = None
    stage_projector: Optional[Callable[[int, Array, Array], tuple]] = None
    tightening: Optional[Sequence[Array]] = None
    linear_dynamics: bool = False
    quadratic_costs: bool = False
    polyhedral_constraints: bool = False
    constraints_in_actions_only: bool = False
    name: str = ""
    # Optional whole-trajectory evaluators for long-horizon hot loops: given
    # (states (T+1,n_x), actions (T+1,n_u)) they return stacked first-order
    # data for every stage at once.  traj_projector maps a whole action
    # sequence onto the feasible set (states may be None for action-only
    # constraint classes).
    traj_cost_gradients: Optional[Callable[[Array, Array], tuple]] = None
    traj_dynamics_jacobians: Optional[Callable[[Array, Array], tuple]] = None
    traj_projector: Optional[Callable[[Array, Array], Array]] = None
    action_offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if len(self.action_dims) == 0 or any(d <= 0 for d in self.action_dims):
            raise ValueError(f"invalid action dims {self.action_dims}")
        x0 = np.asarray(self.initial_state, dtype=float).reshape(-1)
        if x0.shape != (self.state_dim,):
            raise DimensionError("initial state", (self.state_dim,), x0.shape)
        object.__setattr__(self, "initial_state", x0)
        offsets = np.concatenate([[0], np.cumsum(self.action_dims)])
        object.__setattr__(self, "action_offsets", tuple(int(o) for o in offsets))
        if self.tightening is not None:
            for k, gam in enumerate(self.tightening):
                if gam is not None and np.any(np.asarray(gam) < 0):
                    raise ValueError(f"tightening vector at stage {k} has negative entries")

    # -- dimensions ---------------------------------------------------------

    @property
    def num_players(self) -> int:
        return len(self.action_dims)

    @property
    def total_action_dim(self) -> int:
        return self.action_offsets[-1]

    def action_slice(self, n: int) -> slice:
        return slice(self.action_offsets[n], self.action_offsets[n + 1])

    # -- evaluation with finite-difference fallbacks -------------------------

    def eval_dynamics(self, k: int, x: Array, u: Array) -> Array:
        return np.asarray(self.dynamics(k, x, u), dtype=float).reshape(-1)

    def eval_costs(self, k: int, x: Array, u: Array) -> Array:
        return np.asarray(self.stage_costs(k, x, u), dtype=float).reshape(-1)

    def eval_constraints(self, k: int, x: Array, u: Array) -> Array:
        if self.constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.constraints(k, x, u), dtype=float))

    def eval_dynamics_jacobians(self, k: int, x: Array, u: Array) -> tuple[Array, Array]:
        """State and action Jacobians (A, B) of the stage dynamics."""
        if self.dynamics_jacobians is not None:
            A, B = self.dynamics_jacobians(k, x, u)
            return np.asarray(A, dtype=float), np.asarray(B, dtype=float)
        J = _fd_jacobian(lambda xu: self.eval_dynamics(k, xu[:self.state_dim], xu[self.state_dim:]),
                         np.concatenate([x, u]), self.state_dim, what="dynamics", stage=k)
        return J[:, :self.state_dim], J[:, self.state_dim:]

    def eval_dynamics_hessians(self, k: int, x: Array, u: Array) -> Array:
        """Second derivatives of the dynamics, one (n_x+n_u)-square matrix per output."""
        if self.dynamics_hessians is not None:
            return np.asarray(self.dynamics_hessians(k, x, u), dtype=float)
        nz = self.state_dim + self.total_action_dim
        f = lambda xu: self.eval_dynamics(k, xu[:self.state_dim], xu[self.state_dim:])
        H = _fd_hessian_vector(f, np.concatenate([x, u]), self.state_dim,
                               what="dynamics", stage=k)
        return H.reshape(self.state_dim, nz, nz)

    def eval_cost_gradients(self, k: int, x: Array, u: Array) -> tuple[Array, Array]:
        """Per-player cost gradients, stacked: (N, n_x) and (N, n_u)."""
        if self.cost_gradients is not None:
            cx, cu = self.cost_gradients(k, x, u)
            return np.asarray(cx, dtype=float), np.asarray(cu, dtype=float)
        J = _fd_jacobian(lambda xu: self.eval_costs(k, xu[:self.state_dim], xu[self.state_dim:]),
                         np.concatenate([x, u]), self.num_players, what="cost", stage=k)
        return J[:, :self.state_dim], J[:, self.state_dim:]

    def eval_cost_hessians(self, k: int, x: Array, u: Array) -> tuple[Array, Array, Array]:
        """Per-player cost Hessian blocks (CXX, CXU, CUU), stacked over players."""
        n_x = self.state_dim
        if self.cost_hessians is not None:
            cxx, cxu, cuu = self.cost_hessians(k, x, u)
            return (np.asarray(cxx, dtype=float), np.asarray(cxu, dtype=float),
                    np.asarray(cuu, dtype=float))
        f = lambda xu: self.eval_costs(k, xu[:n_x], xu[n_x:])
        H = _fd_hessian_vector(f, np.concatenate([x, u]), self.num_players,
                               what="cost", stage=k)
        return H[:, :n_x, :n_x], H[:, :n_x, n_x:], H[:, n_x:, n_x:]

    def eval_constraint_jacobians(self, k: int, x: Array, u: Array) -> tuple[Array, Array]:
        """Constraint Jacobians (W, S) with respect to state and joint action."""
        m = self.eval_constraints(k, x, u).shape[0]
        if m == 0:
            return np.zeros((0, self.state_dim)), np.zeros((0, self.total_action_dim))
        if self.constraint_jacobians is not None:
            W, S = self.constraint_jacobians(k, x, u)
            W = np.asarray(W, dtype=float).reshape(m, self.state_dim)
            S = np.asarray(S, dtype=float).reshape(m, self.total_action_dim)
            return W, S
        J = _fd_jacobian(lambda xu: self.eval_constraints(k, xu[:self.state_dim], xu[self.state_dim:]),
                         np.concatenate([x, u]), m, what="constraint", stage=k)
        return J[:, :self.state_dim], J[:, self.state_dim:]

    def tightening_at(self, k: int) -> Optional[Array]:
        if self.tightening is None:
            return None
        gam = self.tightening[k]
        return None if gam is None else np.asarray(gam, dtype=float)


def _fd_jacobian(f, z, n_out, what, stage):
    """Central-difference Jacobian of f: R^m -> R^{n_out} at z."""
    m = z.shape[0]
    J = np.empty((n_out, m))
    for i in range(m):
        h = _FD_STEP1 * (1.0 + abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        J[:, i] = (np.asarray(f(zp)) - np.asarray(f(zm))) / (2.0 * h)
    if not np.all(np.isfinite(J)):
        raise NonFiniteDerivativeError(what, stage)
    return J


def _fd_hessian_vector(f, z, n_out, what, stage):
    """Central second differences of a vector map; returns (n_out, m, m)."""
    m = z.shape[0]
    H = np.empty((n_out, m, m))
    steps = [_FD_STEP2 * (1.0 + abs(z[i])) for i in range(m)]
    f0 = np.asarray(f(z), dtype=float)
    for i in range(m):
        hi = steps[i]
        zp, zm = z.copy(), z.copy()
        zp[i] += hi
        zm[i] -= hi
        H[:, i, i] = (np.asarray(f(zp)) - 2.0 * f0 + np.asarray(f(zm))) / hi**2
        for j in range(i + 1, m):
            hj = steps[j]
            zpp, zpm, zmp, zmm = z.copy(), z.copy(), z.copy(), z.copy()
            zpp[[i, j]] += [hi, hj]
            zpm[i] += hi
            zpm[j] -= hj
            zmp[i] -= hi
            zmp[j] += hj
            zmm[[i, j]] -= [hi, hj]
            val = (np.asarray(f(zpp)) - np.asarray(f(zpm))
                   - np.asarray(f(zmp)) + np.asarray(f(zmm))) / (4.0 * hi * hj)
            H[:, i, j] = val
            H[:, j, i] = val
    if not np.all(np.isfinite(H)):
        raise NonFiniteDerivativeError(what, stage)
    return H


@dataclass
class Trajectory:
    """Paired state and joint-action sequences, both with T+1 entries."""

    states: Array
    actions: Array

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        if self.states.shape[0] != self.actions.shape[0]:
            raise DimensionError("trajectory length",
                                 self.states.shape[0], self.actions.shape[0])

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def player_actions(self, game: GameDefinition, n: int) -> Array:
        return self.actions[:, game.action_slice(n)]

    def dynamics_residuals(self, game: GameDefinition) -> Array:
        """Per-stage residual norms ||x_{k+1} - f_k(x_k, u_k)||."""
        T = self.horizon
        res = np.zeros(max(T, 0))
        for k in range(T):
            pred = game.eval_dynamics(k, self.states[k], self.actions[k])
            res[k] = np.linalg.norm(self.states[k + 1] - pred)
        return res

    def dynamically_feasible(self, game: GameDefinition, tol: float = 1e-8) -> bool:
        res = self.dynamics_residuals(game)
        return bool(res.size == 0 or np.max(res) <= tol)

    def copy(self) -> "Trajectory":
        return Trajectory(self.states.copy(), self.actions.copy())


@dataclass
class StageQuadraticization:
    """Local derivative data of one stage around a reference point.

    ``M`` holds one symmetric (1+n_x+n_u)-square cost expansion matrix per
    player, with the scalar block equal to twice the stage cost so that
    ``0.5 * [1, dx, du]^T M [1, dx, du]`` reproduces the local Taylor
    expansion.  ``G`` stacks the second derivatives of each dynamics output
    over the (x, u) pair; it is None at the terminal stage, as are A and B.
    Constraint rows are split by the active set ``{i : g_i >= -active_tol}``.
    """

    stage: int
    M: Array
    A: Optional[Array] = None
    B: Optional[Array] = None
    G: Optional[Array] = None
    W: Array = None
    S: Array = None
    p: Array = None
    active_indices: Array = None
    inactive_indices: Array = None

    @property
    def num_constraints(self) -> int:
        return 0 if self.p is None else self.p.shape[0]

    def active_rows(self) -> tuple[Array, Array, Array]:
        a = self.active_indices
        return self.W[a], self.S[a], self.p[a]

    def inactive_rows(self) -> tuple[Array, Array, Array]:
        i = self.inactive_indices
        return self.W[i], self.S[i], self.p[i]


def rollout(game: GameDefinition, x0: Array, controls: Array) -> Trajectory:
    """Integrate the dynamics from x0 under the given joint-action sequence.

    ``controls`` may have T or T+1 rows; a zero row is appended in the former
    case so the returned trajectory always carries a terminal action block.
    """
    T = game.horizon
    n_u = game.total_action_dim
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (game.state_dim,):
        raise DimensionError("initial state", (game.state_dim,), x0.shape)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    if controls.shape == (T, n_u):
        controls = np.vstack([controls, np.zeros(n_u)])
    if controls.shape != (T + 1, n_u):
        raise DimensionError("controls", (T + 1, n_u), controls.shape)
    states = np.empty((T + 1, game.state_dim))
    states[0] = x0
    for k in range(T):
        xk1 = game.eval_dynamics(k, states[k], controls[k])
        if xk1.shape != (game.state_dim,):
            raise DimensionError("dynamics output", (game.state_dim,), xk1.shape, stage=k)
        if not np.all(np.isfinite(xk1)):
            raise NonFiniteStateError(k)
        states[k + 1] = xk1
    return Trajectory(states, controls.copy())


def total_cost(game: GameDefinition, traj: Trajectory, player: int, start: int = 0) -> float:
    """Cost-to-go of one player: sum of its stage costs from ``start`` to T."""
    T = game.horizon
    if not 0 <= start <= T:
        raise ValueError(f"start stage {start} outside 0..{T}")
    if not 0 <= player < game.num_players:
        raise ValueError(f"player {player} outside 0..{game.num_players - 1}")
    total = 0.0
    for k in range(start, T + 1):
        total += float(game.eval_costs(k, traj.states[k], traj.actions[k])[player])
    return total


def all_player_costs(game: GameDefinition, traj: Trajectory, start: int = 0) -> Array:
    """Costs-to-go of every player at once."""
    T = game.horizon
    total = np.zeros(game.num_players)
    for k in range(start, T + 1):
        total += game.eval_costs(k, traj.states[k], traj.actions[k])
    return total


def check_feasible(game: GameDefinition, traj: Trajectory, tol: float = 1e-8) -> None:
    """Raise InfeasibleTrajectoryError if the dynamics residual exceeds tol."""
    if not np.isfinite(tol):
        return
    T = traj.horizon
    for k in range(T):
        pred = game.eval_dynamics(k, traj.states[k], traj.actions[k])
        r = float(np.linalg.norm(traj.states[k + 1] - pred))
        if r > tol * (1.0 + float(np.linalg.norm(traj.states[k + 1]))):
            raise InfeasibleTrajectoryError(k, r, tol)


def quadraticize(game: GameDefinition, traj: Trajectory,
                 active_tol: float = DEFAULT_ACTIVE_TOL,
                 feas_tol: float = 1e-6,
                 check: bool = True) -> list[StageQuadraticization]:
    """Evaluate all stage derivative data along a trajectory.

    Returns one StageQuadraticization per stage k = 0..T.  Dynamics blocks
    (A, B, G) are present for k < T only.  Active constraint indices collect
    rows with ``g_i >= -active_tol``.
    """
    if check:
        check_feasible(game, traj, feas_tol)
    T = game.horizon
    n_x, n_u, N = game.state_dim, game.total_action_dim, game.num_players
    out = []
    for k in range(T + 1):
        x, u = traj.states[k], traj.actions[k]
        cx, cu = game.eval_cost_gradients(k, x, u)
        cxx, cxu, cuu = game.eval_cost_hessians(k, x, u)
        c = game.eval_costs(k, x, u)
        M = np.empty((N, 1 + n_x + n_u, 1 + n_x + n_u))
        for n in range(N):
            M[n, 0, 0] = 2.0 * c[n]
            M[n, 0, 1:1 + n_x] = cx[n]
            M[n, 1:1 + n_x, 0] = cx[n]
            M[n, 0, 1 + n_x:] = cu[n]
            M[n, 1 + n_x:, 0] = cu[n]
            M[n, 1:1 + n_x, 1:1 + n_x] = 0.5 * (cxx[n] + cxx[n].T)
            M[n, 1:1 + n_x, 1 + n_x:] = cxu[n]
            M[n, 1 + n_x:, 1:1 + n_x] = cxu[n].T
            M[n, 1 + n_x:, 1 + n_x:] = 0.5 * (cuu[n] + cuu[n].T)
        A = B = G = None
        if k < T:
            A, B = game.eval_dynamics_jacobians(k, x, u)
            G = game.eval_dynamics_hessians(k, x, u)
            G = 0.5 * (G + np.transpose(G, (0, 2, 1)))
        g = game.eval_constraints(k, x, u)
        W, S = game.eval_constraint_jacobians(k, x, u)
        active = np.flatnonzero(g >= -active_tol)
        inactive = np.flatnonzero(g < -active_tol)
        out.append(StageQuadraticization(
            stage=k, M=M, A=A, B=B, G=G, W=W, S=S, p=g,
            active_indices=active, inactive_indices=inactive))
    return out


def active_set_partition(quads: Sequence[StageQuadraticization]) -> list[tuple[Array, Array]]:
    """Per-stage (active, inactive) constraint index sets."""
    return [(q.active_indices.copy(), q.inactive_indices.copy()) for q in quads]
