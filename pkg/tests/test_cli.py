import json

import pytest

from onoffstats.cli import main
from onoffstats.neyman import fc_interval, load_belt


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestLimit:
    def test_fc_golden_number(self, capsys):
        code, out, _ = run(
            ["limit", "--method", "fc", "--n-obs", "0", "--b", "0", "--cl", "0.9"], capsys
        )
        assert code == 0
        upper = float(out.splitlines()[-1].split()[2])
        assert upper == pytest.approx(2.44, abs=0.02)

    def test_onoff_sys_limit_runs(self, capsys):
        code, out, _ = run(
            ["limit", "--method", "bayes-onoff-sys", "--n-obs", "360", "--n-bg", "270",
             "--tau", "3", "--sigma-rel", "0.03", "--cl", "0.9"],
            capsys,
        )
        assert code == 0
        assert "bayes-onoff-sys" in out

    def test_missing_fields_all_reported(self, capsys):
        code, _, err = run(["limit", "--method", "bayes-onoff", "--n-obs", "5"], capsys)
        assert code == 1
        assert "--n-bg" in err
        assert "--tau" in err

    def test_fractional_count_rejected(self, capsys):
        code, _, err = run(
            ["limit", "--method", "fc", "--n-obs", "90.5", "--b", "0"], capsys
        )
        assert code == 1
        assert "n-obs" in err

    def test_invalid_cl_rejected(self, capsys):
        code, _, err = run(
            ["limit", "--method", "fc", "--n-obs", "0", "--b", "0", "--cl", "1.5"], capsys
        )
        assert code == 1
        assert "--cl" in err

    def test_numerical_failure_exit_code(self, capsys):
        # grid pinned far below the posterior bulk: tail mass cannot clear
        code, _, err = run(
            ["limit", "--method", "bayes-poisson", "--n-obs", "100", "--b", "0",
             "--s-max", "1", "--s-points", "50"],
            capsys,
        )
        assert code == 2
        assert "numerical failure" in err

    def test_flux_method(self, capsys):
        code, out, _ = run(
            ["limit", "--method", "bayes-flux-onoff-sys", "--n-obs", "100",
             "--n-bg", "270", "--tau", "3", "--sigma-rel", "0.03",
             "--f-sim", "1.2", "--s-sim", "5.4", "--sigma-sim", "1.08"],
            capsys,
        )
        assert code == 0
        assert "bayes-flux-onoff-sys" in out


class TestSignificance:
    def test_lima(self, capsys):
        code, out, _ = run(
            ["significance", "--method", "lima", "--n-obs", "120", "--n-bg", "270",
             "--tau", "3"],
            capsys,
        )
        assert code == 0
        s_value = float(out.splitlines()[-1].split()[-1])
        assert s_value == pytest.approx(2.57, abs=0.01)

    def test_sys_requires_sigma(self, capsys):
        code, _, err = run(
            ["significance", "--method", "onoff-sys", "--n-obs", "120", "--n-bg", "270",
             "--tau", "3"],
            capsys,
        )
        assert code == 1
        assert "sigma-rel" in err


class TestScan:
    def test_rows_and_determinism(self, tmp_path, capsys):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        argv = ["scan", "--method", "bayes-poisson", "--n-start", "88", "--n-stop", "92",
                "--b", "90", "--cl", "0.9", "--format", "csv"]
        assert main(argv + ["--output", str(out_a)]) == 0
        assert main(argv + ["--output", str(out_b)]) == 0
        capsys.readouterr()
        assert out_a.read_bytes() == out_b.read_bytes()
        lines = out_a.read_text().splitlines()
        assert any(line.startswith("# method = bayes-poisson") for line in lines)
        data = [line for line in lines if not line.startswith("#")]
        assert data[0].split(",")[0] == "n_obs"
        assert len(data) == 6  # header + 5 rows

    def test_threaded_scan_matches_sequential(self, tmp_path, capsys):
        out_a = tmp_path / "seq.csv"
        out_b = tmp_path / "par.csv"
        argv = ["scan", "--method", "bayes-onoff", "--n-start", "85", "--n-stop", "95",
                "--n-bg", "270", "--tau", "3", "--format", "csv"]
        assert main(argv + ["--threads", "1", "--output", str(out_a)]) == 0
        assert main(argv + ["--threads", "4", "--output", str(out_b)]) == 0
        capsys.readouterr()
        strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("# threads")]
        assert strip(out_a) == strip(out_b)

    def test_scan_range_validation(self, capsys):
        code, _, err = run(
            ["scan", "--method", "bayes-poisson", "--n-start", "10", "--n-stop", "5",
             "--b", "90"],
            capsys,
        )
        assert code == 1
        assert "n-start" in err

    def test_json_format(self, tmp_path, capsys):
        out = tmp_path / "scan.json"
        code, _, _ = run(
            ["scan", "--method", "bayes-poisson", "--n-start", "90", "--n-stop", "91",
             "--b", "90", "--format", "json", "--output", str(out)],
            capsys,
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["config"]["method"] == "bayes-poisson"
        assert payload["config"]["cl"] == 0.9  # default made explicit
        assert len(payload["rows"]) == 2


class TestConfigFile:
    def test_config_supplies_fields(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"method": "fc", "n_obs": 0, "b": 0.0, "cl": 0.9}))
        code, out, _ = run(["limit", "--config", str(cfg)], capsys)
        assert code == 0
        assert float(out.splitlines()[-1].split()[2]) == pytest.approx(2.44, abs=0.02)

    def test_flags_override_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"method": "fc", "n_obs": 0, "b": 3.0}))
        code, out, _ = run(["limit", "--config", str(cfg), "--b", "0"], capsys)
        assert code == 0
        assert float(out.splitlines()[-1].split()[2]) == pytest.approx(2.44, abs=0.02)

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"metod": "fc"}))
        code, _, err = run(["limit", "--config", str(cfg)], capsys)
        assert code == 1
        assert "metod" in err


class TestToys:
    def test_significance_study_csv(self, tmp_path, capsys):
        out = tmp_path / "toys.csv"
        code, _, _ = run(
            ["toys", "--study", "significance", "--method", "onoff-sys",
             "--s-true", "0", "--b-true", "90", "--tau", "3", "--sigma-rel", "0.03",
             "--n-trials", "300", "--seed", "9", "--format", "csv", "--output", str(out)],
            capsys,
        )
        assert code == 0
        text = out.read_text()
        assert "# summary.mean = " in text
        assert "# n_trials = 300" in text
        counts = [int(line.split(",")[2]) for line in text.splitlines()
                  if line and not line.startswith("#") and not line.startswith("bin_lo")]
        assert sum(counts) <= 300

    def test_coverage_study(self, capsys):
        code, out, _ = run(
            ["toys", "--study", "coverage", "--method", "fc", "--s-true", "2",
             "--b-true", "3", "--tau", "1", "--n-trials", "200", "--seed", "4",
             "--cl", "0.9"],
            capsys,
        )
        assert code == 0
        assert "coverage" in out

    def test_toys_validation(self, capsys):
        code, _, err = run(["toys", "--study", "significance", "--method", "nope"], capsys)
        assert code == 1
        assert "lima" in err


class TestBelt:
    def test_belt_round_trip(self, tmp_path, capsys):
        out = tmp_path / "belt.txt"
        code, _, _ = run(
            ["belt", "--likelihood", "exact", "--b", "3", "--cl", "0.9",
             "--s-max", "15", "--output", str(out)],
            capsys,
        )
        assert code == 0
        belt = load_belt(out)
        assert belt.b == 3.0
        res = fc_interval(0, belt)
        assert res.upper == pytest.approx(0.95, abs=0.02)  # raw belt edge

    def test_belt_requires_output(self, capsys):
        code, _, err = run(["belt", "--likelihood", "exact", "--b", "3"], capsys)
        assert code == 1
        assert "--output" in err


class TestEnvironment:
    def test_threads_env_default(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("ONOFFSTATS_THREADS", "2")
        out = tmp_path / "x.csv"
        code, _, _ = run(
            ["limit", "--method", "fc", "--n-obs", "0", "--b", "0", "--format", "csv",
             "--output", str(out)],
            capsys,
        )
        assert code == 0
        assert "# threads = 2" in out.read_text()

    def test_threads_flag_overrides_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("ONOFFSTATS_THREADS", "2")
        out = tmp_path / "x.csv"
        code, _, _ = run(
            ["limit", "--method", "fc", "--n-obs", "0", "--b", "0", "--format", "csv",
             "--threads", "3", "--output", str(out)],
            capsys,
        )
        assert code == 0
        assert "# threads = 3" in out.read_text()
