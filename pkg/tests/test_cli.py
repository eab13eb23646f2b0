import json
import math
import os
import subprocess
import sys

from bsdelab.cli import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_OK, main


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


class TestConfigErrors:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG_ERROR
        assert "config error" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["solve", "--config", str(bad), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG_ERROR

    def test_bad_expression_reports_path(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            {"model": {"N": 10}, "generator": {"expr": "1 +"}, "terminal": {"expr": "w"}},
        )
        code = main(["solve", "--config", cfg, "--out", str(tmp_path)])
        assert code == EXIT_CONFIG_ERROR
        assert "generator.expr" in capsys.readouterr().err

    def test_bad_backend(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"model": {"backend": "abacus"}})
        code = main(["solve", "--config", cfg, "--out", str(tmp_path)])
        assert code == EXIT_CONFIG_ERROR
        assert "model.backend" in capsys.readouterr().err

    def test_config_required(self, tmp_path, capsys):
        assert main(["solve", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


class TestSolveCommand:
    def test_zero_driver_martingale(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "model": {"T": 1.0, "N": 100},
                "generator": {"expr": "0"},
                "terminal": {"expr": "w"},
            },
        )
        code = main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "solution.csv")
        assert len(rows) == 101
        first = rows[0]
        assert float(first["t"]) == 0.0
        assert float(first["y_mean"]) == 0.0
        # terminal row has no z column value
        assert rows[-1]["z_mean"] == ""

    def test_manifest_written(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "model": {"T": 1.0, "N": 20, "seed": 5},
                "generator": {"expr": "0"},
                "terminal": {"expr": "w"},
            },
        )
        assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK
        manifest = json.loads((tmp_path / "run_manifest.json").read_text())
        assert manifest["seed"] == 5
        assert manifest["config"]["model"]["N"] == 20
        assert "config_sha256" in manifest
        assert "solution.csv" in manifest["outputs"]
        assert manifest["versions"]["bsdelab"]


class TestBoundsCommand:
    def test_closed_form_value(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "model": {"T": 1.0, "N": 64},
                "bounds": {"u": "1", "l": "1 + abs(x)", "xi_bound": 1.0},
            },
        )
        code = main(["bounds", "--config", cfg, "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "bounds.csv")
        assert abs(float(rows[0]["U"]) - (2.0 * math.e - 1.0)) < 1e-5
        assert abs(float(rows[0]["L"]) + (2.0 * math.e - 1.0)) < 1e-5

    def test_missing_keys(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"bounds": {"u": "1"}})
        assert main(["bounds", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


class TestEnvelopeCommand:
    def test_sweep_csv(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "generator": {"expr": "-y^2"},
                "envelope": {
                    "n": 2,
                    "growth": {"f": "0", "u": "1", "v": "0"},
                    "y_min": -2.0,
                    "y_max": 2.0,
                    "points": 21,
                },
            },
        )
        code = main(["envelope", "--config", cfg, "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "envelope.csv")
        assert len(rows) == 21
        for row in rows:
            assert float(row["envelope"]) >= float(row["g"]) - 1e-12


class TestVerifyCommand:
    def config(self, expected, tol):
        return {
            "model": {"T": 1.0, "N": 100, "scheme": "implicit"},
            "generator": {"expr": "-y"},
            "terminal": {"expr": "1", "bound": 1.0},
            "checks": [
                {"check": "solver_oracle", "expected": expected, "tol": tol}
            ],
        }

    def test_passing_check(self, tmp_path):
        cfg = write_config(tmp_path, self.config(math.exp(-1.0), 5e-3))
        code = main(["verify", "--config", cfg, "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "reports.csv")
        assert rows[0]["status"] == "pass"

    def test_failing_check_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, self.config(0.9, 1e-3))
        code = main(["verify", "--config", cfg, "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_CHECK_FAILED

    def test_tol_override_forces_failure(self, tmp_path):
        cfg = write_config(tmp_path, self.config(math.exp(-1.0), 5e-3))
        code = main(
            ["verify", "--config", cfg, "--out", str(tmp_path), "--quiet", "--tol", "1e-12"]
        )
        assert code == EXIT_CHECK_FAILED

    def test_expected_failure_counts_as_ok(self, tmp_path):
        payload = self.config(0.9, 1e-3)
        payload["checks"][0]["expect"] = "fail"
        cfg = write_config(tmp_path, payload)
        code = main(["verify", "--config", cfg, "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_OK


class TestSuiteCommand:
    def test_shipped_suite_passes(self, tmp_path):
        code = main(["suite", "--out", str(tmp_path), "--quiet"])
        assert code == EXIT_OK
        names = os.listdir(tmp_path)
        assert "reports.csv" in names
        assert "run_manifest.json" in names
        assert sum(1 for n in names if n.startswith("check_")) >= 10

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "bsdelab.cli", "verify", "--config", "missing.json"],
            capture_output=True,
            text=True,
            cwd=tmp_path,
        )
        assert proc.returncode == EXIT_CONFIG_ERROR


class TestDeterminism:
    def mc_config(self):
        return {
            "model": {
                "T": 1.0,
                "N": 20,
                "backend": "mc-regression",
                "paths": 40000,
                "basis_degree": 2,
                "seed": 12,
            },
            "generator": {"expr": "-y + z / 2"},
            "terminal": {"expr": "w^2"},
        }

    def test_rerun_bit_identical(self, tmp_path):
        cfg = write_config(tmp_path, self.mc_config())
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["solve", "--config", cfg, "--out", str(a), "--quiet"]) == EXIT_OK
        assert main(["solve", "--config", cfg, "--out", str(b), "--quiet"]) == EXIT_OK
        assert (a / "solution.csv").read_bytes() == (b / "solution.csv").read_bytes()

    def test_thread_count_invariant(self, tmp_path):
        cfg = write_config(tmp_path, self.mc_config())
        one = tmp_path / "one"
        eight = tmp_path / "eight"
        assert main(
            ["solve", "--config", cfg, "--out", str(one), "--quiet", "--threads", "1"]
        ) == EXIT_OK
        assert main(
            ["solve", "--config", cfg, "--out", str(eight), "--quiet", "--threads", "8"]
        ) == EXIT_OK
        assert (one / "solution.csv").read_bytes() == (eight / "solution.csv").read_bytes()

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        cfg = write_config(
            tmp_path,
            {
                "model": {"N": 10},
                "generator": {"expr": "0"},
                "terminal": {"expr": "w"},
            },
        )
        target = tmp_path / "from_env"
        monkeypatch.setenv("BSDELAB_OUT", str(target))
        assert main(["solve", "--config", cfg, "--quiet"]) == EXIT_OK
        assert (target / "solution.csv").exists()
