"""Config parsing and end-to-end experiment driver runs."""

import json

import numpy as np
import pytest

from entlab.cli import ConfigError, main, parse_config, run


class TestParseConfig:
    def test_defaults_filled(self):
        cfg = parse_config("", experiment="solve")
        assert cfg["L"] == 6.0 and cfg["N"] == 301 and cfg["tol"] == 1e-8

    def test_unknown_key_names_it(self):
        with pytest.raises(ConfigError, match="epslion"):
            parse_config("epslion=0.1\n", experiment="solve")

    def test_error_carries_line(self):
        try:
            parse_config("W=0\nepslion=0.1\n", experiment="solve")
        except ConfigError as exc:
            assert exc.line == 2
        else:
            pytest.fail("expected a config error")

    def test_repeated_key_builds_list(self):
        cfg = parse_config("epsilon=0.5\nepsilon=0.2\n", experiment="limit-sweep")
        assert cfg["epsilon"] == [0.5, 0.2]

    def test_sweep_requires_decreasing_eps(self):
        with pytest.raises(ConfigError, match="decreasing"):
            parse_config("epsilon=0.1\nepsilon=0.2\n", experiment="limit-sweep")

    def test_bad_potential_rejected(self):
        with pytest.raises(ConfigError, match="potential"):
            parse_config("V=cubic(1)\n", experiment="solve")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config("# comment\n\nN=61  # trailing\n", experiment="solve")
        assert cfg["N"] == 61

    def test_experiment_mismatch(self):
        with pytest.raises(ConfigError, match="subcommand"):
            parse_config("experiment=solve\n", experiment="gj-check")


class TestRun:
    def test_trivial_solve_zero_cost(self, tmp_path):
        cfg = parse_config("epsilon=0.3\nN=61\n", experiment="solve")
        code = run(cfg, out_dir=tmp_path, quiet=True)
        assert code == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["stage"] == "completed"
        assert abs(manifest["results"]["cost"]) < 1e-9
        assert (tmp_path / "solution.csv").exists()

    def test_manifest_written_on_failure(self, tmp_path):
        # epsilon far below the bandwidth guard: solver stage fails
        cfg = parse_config("epsilon=1e-6\nN=61\n", experiment="solve")
        code = run(cfg, out_dir=tmp_path, quiet=True)
        assert code == 1
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert "error" in manifest and manifest["exit_code"] == 1

    def test_limit_sweep_csv(self, tmp_path):
        text = "W=quadratic(1.5,0,0)\nN=151\nepsilon=0.5\nepsilon=0.2\n"
        cfg = parse_config(text, experiment="limit-sweep")
        run(cfg, out_dir=tmp_path, quiet=True)
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "epsilon,eps_cost,half_w2sq,gap,iterations,residual"
        assert len(lines) == 3

    def test_byte_identical_reruns(self, tmp_path):
        text = "W=quadratic(1.5,0,0)\nN=151\nepsilon=0.5\nepsilon=0.2\n"
        cfg = parse_config(text, experiment="limit-sweep")
        run(cfg, out_dir=tmp_path / "a", quiet=True)
        run(cfg, out_dir=tmp_path / "b", quiet=True)
        assert (tmp_path / "a" / "sweep.csv").read_bytes() == \
            (tmp_path / "b" / "sweep.csv").read_bytes()

    def test_order_check_subcommand(self, tmp_path):
        from entlab.convex_order import AtomicMeasure, atomic_to_csv
        eta = AtomicMeasure(np.zeros((1, 1)), np.ones(1))
        nu = AtomicMeasure(np.array([[-2.0], [2.0]]), np.array([0.5, 0.5]))
        atomic_to_csv(eta, tmp_path / "eta.csv")
        atomic_to_csv(nu, tmp_path / "nu.csv")
        cfg_path = tmp_path / "cfg"
        cfg_path.write_text(f"eta_csv={tmp_path}/eta.csv\n"
                            f"nu_csv={tmp_path}/nu.csv\nexpect=yes\n")
        code = main(["order-check", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out"), "--quiet"])
        assert code == 0

    def test_main_config_error_exit_2(self, tmp_path):
        cfg_path = tmp_path / "cfg"
        cfg_path.write_text("epslion=0.2\n")
        assert main(["solve", "--config", str(cfg_path), "--quiet"]) == 2

    def test_gj_negative_control(self, tmp_path):
        text = ("W=piecewise-linear(-6:8,-2:-8,0:0,2:-8,6:8)\n"
                "n_trials=10\nexpect=violation\nN=151\n")
        cfg = parse_config(text, experiment="gj-check")
        assert run(cfg, out_dir=tmp_path, quiet=True) == 0

    def test_plots_emitted(self, tmp_path):
        text = ("W=quadratic(1.5,0,0)\nN=151\nepsilon=0.5\nepsilon=0.2\n"
                "plots=true\n")
        cfg = parse_config(text, experiment="limit-sweep")
        run(cfg, out_dir=tmp_path, quiet=True)
        assert (tmp_path / "gap.svg").exists()
