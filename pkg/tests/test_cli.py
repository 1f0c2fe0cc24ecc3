import csv
import json

import pytest

from almostiss.cli import build_parser, main
from almostiss.core import EXIT_ERROR, EXIT_OK, EXIT_VIOLATIONS, run
from almostiss.models import ConfigError, SectionStatus

from conftest import fixture_path, make_config


@pytest.fixture(autouse=True)
def quiet(monkeypatch):
    monkeypatch.setenv("ALMOSTISS_LOG", "ERROR")


def cli(command, fixture, out, *extra):
    return main([command, "--config", str(fixture_path(fixture)), "--out", str(out), *extra])


def stderr_json(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    assert lines, "no JSON error on stderr"
    return json.loads(lines[-1])


class TestParser:
    def test_every_command_takes_config(self):
        parser = build_parser()
        args = parser.parse_args(["check-dpi", "--config", "c.json", "--seed", "3", "--format", "csv"])
        assert (args.command, args.config, args.seed, args.format) == ("check-dpi", "c.json", 3, "csv")

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "almostiss" in capsys.readouterr().out


class TestCommands:
    def test_intervals(self, tmp_path):
        assert cli("intervals", "square", tmp_path) == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["status"]["intervals"] == "ok"
        assert report["status"]["aiss"] == "skipped"
        assert report["intervals"]["intervals"][0]["upper"] == pytest.approx(1.0, abs=1e-6)
        assert report["provenance"]["command"] == "intervals"
        with open(tmp_path / "intervals.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["k", "lower", "upper", "lower_converged", "upper_converged"]
        assert len(rows) == 2
        assert (tmp_path / "gain_curves.csv").exists()

    def test_curves(self, tmp_path):
        assert cli("curves", "square", tmp_path, "--format", "csv") == EXIT_OK
        lines = (tmp_path / "gain_curves.csv").read_text().splitlines()
        assert lines[0] == "r,gamma21,gamma12_inv,sigma"
        assert len(lines) == 51
        assert not (tmp_path / "report.json").exists()

    def test_validate_reports_bad_gain(self, tmp_path):
        assert cli("validate", "broken_gain", tmp_path) == EXIT_VIOLATIONS
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["status"]["validation"] == "violations"
        assert not report["validation"]["$.problem.gamma12"]["passed"]
        assert report["checks"]["origin"]["violation_count"] == 0

    def test_bad_gain_stops_analysis(self, tmp_path, capsys):
        assert cli("intervals", "broken_gain", tmp_path) == EXIT_ERROR
        error = stderr_json(capsys)
        assert error["error"] == "ConfigError"
        assert error["path"] == "$.problem.gamma12"

    def test_missing_config(self, tmp_path, capsys):
        assert main(["intervals", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR
        assert stderr_json(capsys)["error"] == "ConfigIoError"

    def test_negative_seed(self, tmp_path, capsys):
        assert cli("simulate", "stable_linear", tmp_path, "--seed", "-1") == EXIT_ERROR
        assert stderr_json(capsys)["error"] == "ValueError"

    def test_report_stable(self, tmp_path):
        assert cli("report", "stable_linear", tmp_path) == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text())
        assert set(report["status"].values()) == {"ok"}
        assert report["aiss"]["fraction_converged"] == 1.0
        assert "theorem1:1" in report["checks"]
        for level in ("0", "0.1", "0.5"):
            header = (tmp_path / f"trajectory_{level}.csv").read_text().splitlines()[0]
            assert header == "t,x1,x2,u1,u2"

    def test_report_gap(self, tmp_path):
        assert cli("report", "gap", tmp_path) == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["intervals"]["ell"] == 2
        checks = report["checks"]
        for name in ("iss_lyapunov:1", "iss_lyapunov:2", "dpi:2", "q_positive:2", "dpi_cover:2"):
            assert checks[name]["violation_count"] == 0, name
        assert checks["dpi:2"]["checked_points"] == 16 * 16
        assert checks["dpi_cover:2"]["checked_points"] > 0
        assert report["aiss"]["fraction_converged"] >= 0.99

    def test_report_unstable(self, tmp_path):
        assert cli("report", "unstable_decoupled", tmp_path) == EXIT_VIOLATIONS
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["status"]["aiss"] == "violations"
        assert report["aiss"]["fraction_converged"] == 0.0


class TestRun:
    def test_deterministic(self, square_config):
        exclude = {"provenance": {"timestamp"}}
        first = run("intervals", square_config).report.model_dump(exclude=exclude)
        assert first == run("intervals", square_config).report.model_dump(exclude=exclude)

    def test_report_is_deterministic(self, stable_config):
        exclude = {"provenance": {"timestamp"}}
        first = run("report", stable_config).report.model_dump(exclude=exclude)
        assert first == run("report", stable_config).report.model_dump(exclude=exclude)

    def test_unknown_command(self, square_config):
        with pytest.raises(ValueError):
            run("plot", square_config)

    def test_invalid_gain_raises(self):
        with pytest.raises(ConfigError):
            run("regions", make_config(gamma12="1 + s"))

    def test_check_dpi(self):
        block = {
            "k": 1,
            "rho": "1",
            "q": "1",
            "gamma_k": "s",
            "domain_box": {"x1": [-2.0, 2.0], "x2": [-2.0, 2.0]},
        }
        config = make_config(f1=["x1"], f2=["x2"], dpi_blocks=[block])
        result = run("check-dpi", config)
        assert result.exit_code == EXIT_OK
        assert {"dpi:1", "q_positive:1", "dpi_cover:1"} <= set(result.report.checks)
        assert result.report.status["regions"] == SectionStatus.OK

    def test_check_lyapunov_skips_intervals(self, stable_config):
        result = run("check-lyapunov", stable_config)
        assert result.exit_code == EXIT_OK
        assert result.report.intervals is None
        assert set(result.report.checks) == {"iss_lyapunov:1", "iss_lyapunov:2"}
