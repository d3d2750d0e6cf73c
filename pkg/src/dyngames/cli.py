"""Command-line front end: configure a run, solve, emit traces and reports.

A run configuration is a JSON file:

    {
      "game": {"id": "fishery", "params": {"x0": 50.0}},
      "solver": "pg",                  # or "dr"
      "rho": 0.01,                      # pg step size
      "scheme": "constraints",          # dr only: constraints|dynamics|gradient
      "eta": 1e-4, "alpha": 0.5,        # dr only
      "max_iter": 1000, "tol": 1e-8,
      "feedback": true,                 # backward pass after the solve
      "stage_reg": 0.1,                 # feedback stage damping
      "simulate": {"noise_var": 2.0, "n_runs": 100, "seed": 7},
      "output_dir": "out"
    }

Outputs: trajectory.csv, convergence.csv, report.json, and (with the
feedback/simulate blocks) policy.json and simulation.csv.  All numbers are
written with full round-trip precision so identical configs and seeds give
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import benchmarks
from .errors import DynGameError
from .feedback import stagewise_newton_backward
from .model import GameDefinition
from .projgrad import ProjGradConfig, projected_gradient_solve
from .report import SolverReport
from .splitting import SCHEMES, DrConfig, dr_solve

EXIT_OK = 0
EXIT_NOT_CONVERGED = 5
EXIT_BAD_CONFIG = 2
EXIT_UNKNOWN_GAME = 3
EXIT_SOLVER_FAILURE = 4


class ConfigError(DynGameError):
    pass


class UnknownGameError(DynGameError):
    pass


def _build_fishery(params: dict):
    p = benchmarks.FisheryParams(**params)
    game = benchmarks.fishery_game(p)
    return game, {"noise_scale": p.dt, "profits": True}


def _build_rendezvous(params: dict):
    p = benchmarks.LqRendezvousParams(**params)
    game = benchmarks.lq_rendezvous_game(p)
    return game, {"noise_scale": 1.0, "profits": False}


GAME_REGISTRY = {
    "fishery": _build_fishery,
    "lq_rendezvous": _build_rendezvous,
    "lq_locomotion": _build_rendezvous,  # accepted alias
}


@dataclass
class RunConfig:
    """Validated run configuration (see the module docstring for the schema)."""

    game_id: str
    game_params: dict
    solver: str
    rho: float = 0.01
    scheme: str = "constraints"
    eta: float = 1e-4
    alpha: float = 0.5
    max_iter: int = 1000
    tol: float = 1e-8
    active_tol: float = 1e-6
    feedback: bool = False
    stage_reg: float = 0.0
    simulate: Optional[dict] = None
    output_dir: str = "out"
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        game = raw.get("game")
        if not isinstance(game, dict) or "id" not in game:
            raise ConfigError("config needs a game object with an id")
        solver = raw.get("solver")
        if solver not in ("pg", "dr"):
            raise ConfigError(f"solver must be 'pg' or 'dr', got {solver!r}")
        cfg = cls(game_id=str(game["id"]),
                  game_params=dict(game.get("params", {})),
                  solver=solver)
        for name in ("rho", "eta", "alpha", "tol", "active_tol", "stage_reg"):
            if name in raw:
                val = float(raw[name])
                if name != "stage_reg" and val <= 0:
                    raise ConfigError(f"{name} must be positive, got {val}")
                setattr(cfg, name, val)
        if "max_iter" in raw:
            cfg.max_iter = int(raw["max_iter"])
            if cfg.max_iter <= 0:
                raise ConfigError("max_iter must be positive")
        if "scheme" in raw:
            if raw["scheme"] not in SCHEMES:
                raise ConfigError(f"scheme must be one of {SCHEMES}")
            cfg.scheme = raw["scheme"]
        if not 0.0 < cfg.alpha < 1.0:
            raise ConfigError("alpha must lie strictly inside (0, 1)")
        cfg.feedback = bool(raw.get("feedback", False))
        sim = raw.get("simulate")
        if sim is not None:
            if not isinstance(sim, dict):
                raise ConfigError("simulate must be an object")
            cfg.simulate = {
                "noise_var": float(sim.get("noise_var", 1.0)),
                "n_runs": int(sim.get("n_runs", 100)),
                "seed": int(sim.get("seed", 0)),
            }
            if cfg.simulate["noise_var"] < 0 or cfg.simulate["n_runs"] <= 0:
                raise ConfigError("simulate block needs noise_var >= 0 and n_runs > 0")
        cfg.output_dir = str(raw.get("output_dir", "out"))
        if "seed" in raw and raw["seed"] is not None:
            cfg.seed = int(raw["seed"])
        return cfg


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _write_trajectory_csv(path: Path, game: GameDefinition, traj) -> None:
    cols = ["k"]
    cols += [f"x{i + 1}" for i in range(game.state_dim)]
    for n, d in enumerate(game.action_dims):
        cols += [f"u{n + 1}_{j + 1}" for j in range(d)]
    lines = [",".join(cols)]
    for k in range(traj.states.shape[0]):
        row = [str(k)]
        row += [_fmt(v) for v in traj.states[k]]
        row += [_fmt(v) for v in traj.actions[k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _write_convergence_csv(path: Path, report: SolverReport) -> None:
    lines = ["iteration,distance_to_final,step_norm"]
    dist = report.distance_trace
    steps = report.step_norms
    for t in range(dist.shape[0]):
        step = steps[t - 1] if 1 <= t <= steps.shape[0] else 0.0
        lines.append(f"{t},{_fmt(dist[t])},{_fmt(step)}")
    path.write_text("\n".join(lines) + "\n")


def _write_simulation_csv(path: Path, comparison) -> None:
    lines = ["run,openloop_deviation,feedback_deviation,"
             "openloop_violations,feedback_violations"]
    for i in range(comparison.openloop_deviation.shape[0]):
        lines.append(",".join([
            str(i),
            _fmt(comparison.openloop_deviation[i]),
            _fmt(comparison.feedback_deviation[i]),
            str(int(comparison.openloop_violations[i])),
            str(int(comparison.feedback_violations[i])),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _policy_payload(policy) -> dict:
    return {
        "stages": [
            {
                "k": k,
                "K": policy.gains[k].tolist(),
                "s": policy.offsets[k].tolist(),
                "x_ref": policy.reference.states[k].tolist(),
                "u_ref": policy.reference.actions[k].tolist(),
            }
            for k in range(policy.horizon + 1)
        ]
    }


def run(config: RunConfig, quiet: bool = False) -> int:
    """Execute one configured solve; returns the process exit status."""
    builder = GAME_REGISTRY.get(config.game_id)
    if builder is None:
        raise UnknownGameError(
            f"unknown game id {config.game_id!r}; known: {sorted(GAME_REGISTRY)}")
    try:
        game, meta = builder(config.game_params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid game parameters: {exc}") from exc

    say = (lambda *a: None) if quiet else print
    T, n_u = game.horizon, game.total_action_dim
    u0 = np.zeros((T + 1, n_u))
    if config.solver == "pg":
        cfg = ProjGradConfig(step_size=config.rho, max_iter=config.max_iter,
                             tol=config.tol, active_tol=config.active_tol)
        say(f"running projected gradient on {config.game_id} "
            f"(rho={config.rho}, max_iter={config.max_iter})")
        report = projected_gradient_solve(game, u0, cfg)
    else:
        cfg = DrConfig(scheme=config.scheme, eta=config.eta, alpha=config.alpha,
                       max_iter=config.max_iter, tol=config.tol,
                       active_tol=config.active_tol)
        say(f"running splitting solver on {config.game_id} "
            f"(scheme={config.scheme}, eta={config.eta}, alpha={config.alpha})")
        report = dr_solve(game, cfg)
    say(f"finished after {report.iterations} iterations ({report.termination})")

    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_trajectory_csv(outdir / "trajectory.csv", game, report.trajectory)
    _write_convergence_csv(outdir / "convergence.csv", report)

    payload = {
        "game": config.game_id,
        "solver": config.solver,
        "iterations": report.iterations,
        "termination": report.termination,
        "converged": report.converged,
        "fitted_rate": report.fitted_rate,
        "rate_fit_rmse": report.rate_fit_rmse,
        "dynamics_residual": report.dynamics_residual,
        "constraint_residual": report.constraint_residual,
        "player_costs": [float(c) for c in report.final_costs],
        "playerwise_check": [
            {"player": v.player, "verdict": v.verdict,
             "grad_norm": v.grad_norm, "flags": list(v.flags)}
            for v in report.verdicts
        ],
    }
    if meta.get("profits"):
        payload["player_profits"] = [-float(c) for c in report.final_costs]

    policy = None
    if config.feedback:
        say("computing local feedback policy")
        policy = stagewise_newton_backward(game, report.trajectory,
                                           active_tol=config.active_tol,
                                           feas_tol=np.inf,
                                           stage_reg=config.stage_reg)
        with (outdir / "policy.json").open("w") as fh:
            json.dump(_policy_payload(policy), fh, sort_keys=True)
            fh.write("\n")

    if config.simulate is not None:
        if policy is None:
            raise ConfigError("simulate block requires feedback: true")
        sim = dict(config.simulate)
        if config.seed is not None:
            sim["seed"] = config.seed
        say(f"simulating {sim['n_runs']} noisy runs (seed {sim['seed']})")
        comparison = benchmarks.noise_comparison(
            game, report.trajectory, policy.equilibrium_form(),
            noise_var=sim["noise_var"], n_runs=sim["n_runs"], seed=sim["seed"],
            noise_scale=meta.get("noise_scale", 1.0))
        _write_simulation_csv(outdir / "simulation.csv", comparison)
        payload["simulation"] = {
            "noise_var": sim["noise_var"],
            "n_runs": sim["n_runs"],
            "seed": sim["seed"],
            "mean_openloop_deviation": comparison.mean_openloop,
            "mean_feedback_deviation": comparison.mean_feedback,
        }

    with (outdir / "report.json").open("w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    say(f"wrote outputs to {outdir}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dyngames",
        description="Solve a constrained dynamic game from a JSON run config.")
    parser.add_argument("--config", required=True, help="path to the run config")
    parser.add_argument("--out", help="override the config's output directory")
    parser.add_argument("--seed", type=int, help="override the simulation seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        raw = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        config = RunConfig.from_dict(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if args.out:
        config.output_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    try:
        return run(config, quiet=args.quiet)
    except UnknownGameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_GAME
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except DynGameError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
