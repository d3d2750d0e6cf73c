"""Solver run reports shared by the first-order equilibrium solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .denseqp import fit_log_decay
from .gradient import PlayerVerdict
from .model import Trajectory

Array = np.ndarray

TERM_TOLERANCE = "tolerance"
TERM_MAX_ITER = "max_iter"
TERM_DIVERGENCE = "divergence"


@dataclass
class SolverReport:
    """Outcome of an iterative equilibrium solve.

    ``distance_trace[t]`` is the distance of iterate t to the final iterate
    (the quantity whose geometric decay rate is fitted); ``step_norms[t]``
    the infinity norm of the t-th update.  ``cost_trace`` holds per-player
    game costs along the iterates when the solver records them.
    """

    trajectory: Trajectory
    iterations: int
    termination: str
    distance_trace: Array
    step_norms: Array
    fitted_rate: float
    rate_fit_rmse: float
    verdicts: list[PlayerVerdict] = field(default_factory=list)
    cost_trace: Optional[Array] = None
    final_costs: Optional[Array] = None
    dynamics_residual: float = 0.0
    constraint_residual: float = 0.0

    @property
    def converged(self) -> bool:
        return self.termination == TERM_TOLERANCE

    @property
    def all_players_pass(self) -> bool:
        return bool(self.verdicts) and all(v.passed for v in self.verdicts)


def distances_to_final(iterates: list[Array]) -> Array:
    if not iterates:
        return np.zeros(0)
    final = iterates[-1]
    return np.array([float(np.linalg.norm(it - final)) for it in iterates])


def build_report(trajectory: Trajectory, iterates: list[Array],
                 step_norms: list[float], termination: str,
                 verdicts: list[PlayerVerdict],
                 cost_trace: Optional[Array] = None,
                 final_costs: Optional[Array] = None,
                 dynamics_residual: float = 0.0,
                 constraint_residual: float = 0.0) -> SolverReport:
    dist = distances_to_final(iterates)
    rate, rmse = fit_log_decay(dist) if dist.size else (float("nan"), float("nan"))
    return SolverReport(
        trajectory=trajectory, iterations=len(step_norms),
        termination=termination, distance_trace=dist,
        step_norms=np.asarray(step_norms, dtype=float),
        fitted_rate=rate, rate_fit_rmse=rmse, verdicts=verdicts,
        cost_trace=cost_trace, final_costs=final_costs,
        dynamics_residual=dynamics_residual,
        constraint_residual=constraint_residual)
