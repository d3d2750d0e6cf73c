"""CLI front end: config validation, outputs, determinism, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from dyngames.cli import (
    EXIT_BAD_CONFIG,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    EXIT_UNKNOWN_GAME,
    RunConfig,
    main,
)


def small_fishery_config(outdir, max_iter=80, feedback=True, simulate=True):
    cfg = {
        "game": {"id": "fishery", "params": {"horizon_time": 2.0}},
        "solver": "pg",
        "rho": 0.01,
        "max_iter": max_iter,
        "tol": 1e-9,
        "feedback": feedback,
        "stage_reg": 0.1,
        "output_dir": str(outdir),
    }
    if simulate:
        cfg["simulate"] = {"noise_var": 2.0, "n_runs": 4, "seed": 11}
    return cfg


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestConfigValidation:
    def test_requires_game_and_solver(self):
        with pytest.raises(Exception):
            RunConfig.from_dict({"solver": "pg"})
        with pytest.raises(Exception):
            RunConfig.from_dict({"game": {"id": "fishery"}, "solver": "lbfgs"})

    def test_positive_numerics(self):
        base = {"game": {"id": "fishery"}, "solver": "pg"}
        with pytest.raises(Exception):
            RunConfig.from_dict({**base, "rho": -0.1})
        with pytest.raises(Exception):
            RunConfig.from_dict({**base, "alpha": 1.0, "solver": "dr"})

    def test_scheme_checked(self):
        with pytest.raises(Exception):
            RunConfig.from_dict({"game": {"id": "fishery"}, "solver": "dr",
                                 "scheme": "warp"})


class TestRuns:
    def test_end_to_end_fishery(self, tmp_path):
        out = tmp_path / "out"
        code = main(["--config", write(tmp_path, small_fishery_config(out)),
                     "--quiet"])
        assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
        for name in ("trajectory.csv", "convergence.csv", "report.json",
                     "policy.json", "simulation.csv"):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert report["converged"] == (code == EXIT_OK)
        assert len(report["player_costs"]) == 2
        assert "player_profits" in report
        assert report["simulation"]["n_runs"] == 4
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "k,x1,u1_1,u2_1"
        rows = (out / "trajectory.csv").read_text().splitlines()
        assert len(rows) == 1 + 21  # header + T+1 stages

    def test_rendezvous_dr_short(self, tmp_path):
        out = tmp_path / "dr"
        cfg = {
            "game": {"id": "lq_rendezvous"},
            "solver": "dr",
            "scheme": "constraints",
            "eta": 1e-4,
            "alpha": 0.5,
            "max_iter": 40,
            "tol": 1e-10,
            "output_dir": str(out),
        }
        code = main(["--config", write(tmp_path, cfg), "--quiet"])
        assert code == EXIT_NOT_CONVERGED
        assert (out / "trajectory.csv").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["termination"] == "max_iter"

    def test_byte_identical_outputs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg1 = small_fishery_config(out1, max_iter=40)
        cfg2 = small_fishery_config(out2, max_iter=40)
        main(["--config", write(tmp_path, cfg1, "c1.json"), "--quiet"])
        main(["--config", write(tmp_path, cfg2, "c2.json"), "--quiet"])
        for name in ("trajectory.csv", "convergence.csv", "report.json",
                     "simulation.csv", "policy.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_seed_override_changes_simulation(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        c1 = write(tmp_path, small_fishery_config(out1, max_iter=30), "c1.json")
        c2 = write(tmp_path, small_fishery_config(out2, max_iter=30), "c2.json")
        main(["--config", c1, "--quiet"])
        main(["--config", c2, "--seed", "99", "--quiet"])
        assert (out1 / "simulation.csv").read_bytes() != (out2 / "simulation.csv").read_bytes()
        assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()

    def test_out_flag_overrides(self, tmp_path):
        target = tmp_path / "elsewhere"
        cfg = small_fishery_config(tmp_path / "ignored", max_iter=10,
                                   feedback=False, simulate=False)
        code = main(["--config", write(tmp_path, cfg), "--out", str(target),
                     "--quiet"])
        assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
        assert (target / "report.json").exists()
        assert not (tmp_path / "ignored").exists()


class TestExitCodes:
    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "never"
        assert main(["--config", str(bad), "--out", str(out), "--quiet"]) \
            == EXIT_BAD_CONFIG
        assert not out.exists()

    def test_invalid_field(self, tmp_path):
        cfg = {"game": {"id": "fishery"}, "solver": "pg", "rho": -1.0,
               "output_dir": str(tmp_path / "never")}
        assert main(["--config", write(tmp_path, cfg), "--quiet"]) == EXIT_BAD_CONFIG
        assert not (tmp_path / "never").exists()

    def test_unknown_game(self, tmp_path):
        cfg = {"game": {"id": "checkers"}, "solver": "pg"}
        assert main(["--config", write(tmp_path, cfg), "--quiet"]) == EXIT_UNKNOWN_GAME

    def test_bad_game_params(self, tmp_path):
        cfg = {"game": {"id": "fishery", "params": {"bogus_knob": 1}},
               "solver": "pg"}
        assert main(["--config", write(tmp_path, cfg), "--quiet"]) == EXIT_BAD_CONFIG

    def test_solver_failure_maps_to_exit_code(self, tmp_path):
        # the meeting game's ball constraints are not affine, so the
        # stagewise static-game scheme must refuse
        cfg = {
            "game": {"id": "lq_rendezvous"},
            "solver": "dr",
            "scheme": "dynamics",
            "max_iter": 5,
            "output_dir": str(tmp_path / "x"),
        }
        assert main(["--config", write(tmp_path, cfg), "--quiet"]) \
            == EXIT_SOLVER_FAILURE

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.json"), "--quiet"]) \
            == EXIT_BAD_CONFIG
