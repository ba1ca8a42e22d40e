import json

import numpy as np
import pytest

from mfgtorus.cli import main, parse_config, problem_from_config, run
from mfgtorus.errors import ConfigError
from mfgtorus.grid import load_field


class TestParseConfig:
    def test_defaults_filled(self):
        cfg = parse_config("mode = solve\ngamma = 2\nalpha = 1\nn = 128\n")
        assert cfg.values["theta"] == 0.5
        assert cfg.values["sign"] == "focusing"
        assert cfg.values["potential"] == "zero"
        assert cfg.values["mollifier_k"] == 16

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# a comment\n\nmode = solve\nn = 64  # inline\n")
        assert cfg.values["n"] == 64

    def test_gamma_out_of_range(self):
        with pytest.raises(ConfigError, match="gamma"):
            parse_config("mode = solve\ngamma = 0.5\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("mode = solve\nviscosity = 2\n")

    def test_missing_mode(self):
        with pytest.raises(ConfigError, match="mode"):
            parse_config("gamma = 2\n")

    def test_malformed_value(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config("mode = solve\nn = many\n")

    def test_unknown_regime_note_at_second_exponent(self):
        cfg = parse_config("mode = solve\nalpha = 3\ngamma = 3\nn = 128\ndim = 2\n")
        assert any("UNKNOWN-REGIME" in note for note in cfg.notes)

    def test_potential_specs(self):
        for spec in ("zero", "cosine:1", "cosine:0.5,2"):
            parse_config(f"mode = solve\npotential = {spec}\n")
        with pytest.raises(ConfigError):
            parse_config("mode = solve\npotential = cosine:abc\n")
        with pytest.raises(ConfigError):
            parse_config("mode = solve\npotential = gaussian:1\n")

    def test_potential_from_file(self, tmp_path):
        from mfgtorus.grid import ScalarField, TorusGrid, dump_field

        g = TorusGrid(1, 64)
        vals = 0.5 * (1 - np.cos(2 * np.pi * g.axis_coords()))
        dump_field(ScalarField(g, vals), tmp_path / "V.csv")
        cfg = parse_config(f"mode = solve\nn = 64\npotential = file:{tmp_path}/V.csv\n")
        prob = problem_from_config(cfg)
        assert np.array_equal(prob.potential.field(g).values, vals)

    def test_problem_construction(self):
        cfg = parse_config("mode = solve\nn = 64\ngamma = 3\nalpha = 0.5\n"
                           "sign = defocusing\npotential = cosine:1\n")
        prob = problem_from_config(cfg)
        assert prob.grid.n == 64
        assert prob.hamiltonian.gamma == 3.0
        assert prob.coupling.sign == "defocusing"


CONST_CFG = "mode = solve\ndim = 1\nn = 64\ngamma = 2\nalpha = 0.5\nc_f = 1\nouter_tol = 1e-9\n"


class TestRunSolve:
    def test_flat_run_writes_artifacts(self, tmp_path):
        import hashlib

        cfg = parse_config(CONST_CFG)
        status = run(cfg, str(tmp_path / "out"))
        assert status == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["status"] == "ok"
        assert manifest["results"]["lambda"] == pytest.approx(-1.0, abs=1e-8)
        for name, entry in manifest["outputs"].items():
            path = tmp_path / "out" / name
            assert path.exists()
            assert entry["bytes"] == path.stat().st_size
            assert entry["sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
        m = load_field(tmp_path / "out" / "m.csv")
        assert np.max(np.abs(m.values - 1.0)) < 1e-8

    def test_nonconvergence_exit_code(self, tmp_path):
        text = ("mode = solve\nn = 64\nalpha = 1\npotential = cosine:1\n"
                "outer_max_iters = 1\nouter_tol = 1e-12\n")
        status = run(parse_config(text), str(tmp_path / "out"))
        assert status == 2
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["status"] == "nonconverged"

    def test_inner_solver_exhaustion_also_exits_two(self, tmp_path):
        text = ("mode = solve\nn = 64\nalpha = 1\npotential = cosine:1\n"
                "hjb_max_steps = 3\n")
        status = run(parse_config(text), str(tmp_path / "out"))
        assert status == 2
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["status"] == "nonconverged"
        assert "ConvergenceError" in manifest["failure"]

    def test_reproducible_artifacts(self, tmp_path):
        for sub in ("a", "b"):
            run(parse_config(CONST_CFG), str(tmp_path / sub), seed=3)
        ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
        mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
        ma.pop("timing")
        mb.pop("timing")
        assert ma == mb
        assert (tmp_path / "a" / "m.csv").read_bytes() == (tmp_path / "b" / "m.csv").read_bytes()
        assert (tmp_path / "a" / "u.csv").read_bytes() == (tmp_path / "b" / "u.csv").read_bytes()

    def test_manifest_written_on_failure(self, tmp_path):
        cfg = parse_config("mode = validate\n")  # missing input_dir
        status = run(cfg, str(tmp_path / "out"))
        assert status == 1
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["status"] == "error"
        assert "input_dir" in manifest["failure"]


class TestSweepMode:
    def test_sweep_with_failing_row_still_succeeds(self, tmp_path):
        text = ("mode = sweep\nn = 32\nmollifier_k = 4\nc_f = 30\nouter_tol = 1e-8\n"
                "sweep_alphas = 0.5,8\nm0 = bump:1.5\nouter_max_iters = 60\n")
        status = run(parse_config(text), str(tmp_path / "out"))
        assert status == 0
        payload = json.loads((tmp_path / "out" / "sweep.json").read_text())
        rows = {r["alpha"]: r for r in payload["rows"]}
        assert rows[0.5]["converged"]
        assert rows[8.0]["concentrating"]


class TestDownstreamModes:
    @pytest.fixture()
    def saved_run(self, tmp_path):
        outdir = tmp_path / "base"
        text = ("mode = solve\nn = 64\nalpha = 1\npotential = cosine:1\n"
                "outer_tol = 1e-8\ntheta = 0.6\n")
        assert run(parse_config(text), str(outdir)) == 0
        return outdir

    def test_validate_mode(self, tmp_path, saved_run):
        text = f"mode = validate\ninput_dir = {saved_run}\nball_radius = 0.25\n"
        status = run(parse_config(text), str(tmp_path / "val"))
        assert status == 0
        payload = json.loads((tmp_path / "val" / "validate_report.json").read_text())
        assert payload["pohozaev"]["residual"] < 1e-3
        assert payload["hopf_cole"]["phi_mass"] == pytest.approx(1.0, abs=1e-10)

    def test_pohozaev_mode(self, tmp_path, saved_run):
        text = f"mode = pohozaev\ninput_dir = {saved_run}\nball_radius = 0.2\n"
        status = run(parse_config(text), str(tmp_path / "poh"))
        assert status == 0
        payload = json.loads((tmp_path / "poh" / "pohozaev_report.json").read_text())
        assert payload["radius"] == 0.2

    def test_particles_mode(self, tmp_path, saved_run):
        text = (f"mode = particles\ninput_dir = {saved_run}\n"
                "particles_count = 10000\nparticles_horizon = 0.2\nparticles_dt = 0.001\n")
        status = run(parse_config(text), str(tmp_path / "part"), seed=1)
        assert status == 0
        payload = json.loads((tmp_path / "part" / "particles_report.json").read_text())
        assert payload["l1_distance"] < 0.5
        assert (tmp_path / "part" / "histogram.csv").exists()

    def test_particles_flag_overrides(self, tmp_path, saved_run):
        cfg = tmp_path / "part.txt"
        cfg.write_text(f"mode = particles\ninput_dir = {saved_run}\n")
        out = tmp_path / "part2"
        status = main(["particles", "--config", str(cfg), "--output", str(out),
                       "--seed", "2", "--count", "10000", "--horizon", "0.2",
                       "--dt", "0.001"])
        assert status == 0
        payload = json.loads((out / "particles_report.json").read_text())
        assert payload["count"] == 10000
        assert payload["horizon"] == 0.2


class TestMain:
    def test_help_without_command(self, capsys):
        assert main([]) == 1

    def test_solve_subcommand(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("n = 64\nalpha = 0.5\nouter_tol = 1e-9\n")
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--output", str(out)]) == 0
        assert (out / "manifest.json").exists()

    def test_malformed_config_exits_one(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("gamma = 0.5\n")
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--output", str(out)]) == 1
        assert not out.exists()

    def test_mode_conflict_detected(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("mode = sweep\n")
        assert main(["solve", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 1
