"""Config parsing, data ingestion, table files and the command-line front end."""

import json
import math
import subprocess
import sys

import pytest
from scipy import special

from expo_entropy.cli import main
from expo_entropy.report_io import (
    ConfigError,
    DataParseError,
    format_number,
    parse_config_text,
    read_populations,
    read_tables,
    write_tables,
)
from expo_entropy.simulation import RiskRow, RiskTable

EST_CONFIG = """\
scheme = iid
k = 2
n = 3   # per population
estimators = mrie, stein, bz
"""

TABLE_CONFIG = """\
scheme = iid
k = 2
n = 4, 6
seed = 5
replications = 2000
theta_grid = 0.1,0.1; 0.5,0.1
"""


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


class TestConfig:
    def test_parse(self):
        cfg = parse_config_text(EST_CONFIG + "loss = linex\nlinex_a = 1.5\nalpha = 2\n")
        assert (cfg.scheme, cfg.k, cfg.n) == ("iid", 2, 3)
        assert cfg.estimators == ["mrie", "stein", "bz"]
        assert cfg.loss_model().linex_a == 1.5 and cfg.alpha == 2.0

    def test_grid_and_lists(self):
        cfg = parse_config_text(TABLE_CONFIG)
        assert cfg.n_values == [4, 6]
        assert cfg.theta_grid == [[0.1, 0.1], [0.5, 0.1]]
        with pytest.raises(ConfigError):
            cfg.n

    @pytest.mark.parametrize("text", ["k = 2\nn = 3\n", "scheme = iid\nn = 3\n", "scheme = iid\nk = 2\n"])
    def test_no_defaults_for_scheme_fields(self, text):
        with pytest.raises(ConfigError, match="missing"):
            parse_config_text(text)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config_text(EST_CONFIG + "colour = blue\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="k"):
            parse_config_text("scheme = iid\nk = two\nn = 3\n")

    def test_progressive(self):
        cfg = parse_config_text("scheme = progressive2\nk = 2\nn = 3\nn_total = 6\nremovals = 2 0 1\n")
        assert cfg.scheme_config().removals == (2, 0, 1)


class TestData:
    def test_mixed_delimiters(self, files):
        path = files("d.txt", "# header comment\n1.2, 0.7, 0.9\n\n2.0 1.5;1.8\n")
        assert read_populations(path) == [[1.2, 0.7, 0.9], [2.0, 1.5, 1.8]]

    def test_line_number(self, files):
        path = files("d.txt", "1, 2, 3\nabc, 2, 3\n")
        with pytest.raises(DataParseError) as info:
            read_populations(path)
        assert info.value.line == 2 and ":2:" in str(info.value)

    def test_non_finite(self, files):
        with pytest.raises(DataParseError):
            read_populations(files("d.txt", "1, inf\n"))


class TestTables:
    def _table(self):
        rows = [
            RiskRow((0.1, 0.2), "mrie", 0.1812345678, 0.0012345678, 0.0),
            RiskRow((0.1, 0.2), "stein", 1 / 7, math.nan, 100 / 3),
        ]
        return RiskTable(rows, "iid", 4, "squared_error", 1000, 5)

    def test_seven_digits(self):
        assert format_number(1 / 3) == "0.3333333"
        assert format_number(123456789.0) == "1.234568e+08"
        assert format_number(math.nan) == "NA"

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        write_tables([self._table()], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "n,theta_1,theta_2,estimator,risk,std_err,pri"
        assert lines[2] == "4,0.1,0.2,stein,0.1428571,NA,33.33333"
        back = read_tables(path)[0]
        for a, b in zip(self._table().rows, back.rows):
            for fa, fb in ((a.risk, b.risk), (a.std_err, b.std_err), (a.pri, b.pri)):
                assert format_number(fa) == format_number(fb)

    def test_json_full_precision(self, tmp_path):
        path = tmp_path / "t.json"
        write_tables([self._table()], path, "json")
        back = read_tables(path)[0]
        assert back.rows[1].risk == 1 / 7 and math.isnan(back.rows[1].std_err)
        assert back.n == 4 and back.master_seed == 5


class TestCommands:
    def test_estimate(self, files, capsys):
        cfg = files("c.cfg", EST_CONFIG)
        data = files("d.csv", "1.2, 0.7, 0.9\n2.0, 1.5, 1.8\n")
        assert main(["estimate", "--config", cfg, "--data", data, "--format", "json"]) == 0
        out = json.loads(capsys.readouterr().out)
        by_name = {r["estimator"]: r for r in out}
        assert by_name["mrie"]["theta_hat"] == pytest.approx(math.log(1.5) - special.digamma(4), abs=1e-13)
        assert by_name["stein"]["theta_hat"] <= by_name["mrie"]["theta_hat"]

    def test_estimate_bad_row(self, files, capsys):
        cfg = files("c.cfg", EST_CONFIG)
        data = files("d.csv", "1.2, 0.7, 0.9\nabc, 1, 2\n")
        assert main(["estimate", "--config", cfg, "--data", data]) == 1
        assert ":2:" in capsys.readouterr().err

    def test_estimate_scheme_mismatch(self, files, capsys):
        cfg = files("c.cfg", EST_CONFIG)
        data = files("d.csv", "1.2, 0.7\n2.0, 1.5\n")
        assert main(["estimate", "--config", cfg, "--data", data]) == 1
        assert "expected 3" in capsys.readouterr().err

    def test_bayes_estimate(self, files, capsys):
        cfg = files("c.cfg", EST_CONFIG.replace("mrie, stein, bz", "bayes") + "nu = 1\nsigma0 = 1\n")
        data = files("d.csv", "1, 2, 1.5\n2, 1, 1\n")
        assert main(["estimate", "--config", cfg, "--data", data]) == 0
        line = capsys.readouterr().out.splitlines()[1]
        assert float(line.split(",")[1]) == pytest.approx(math.log(9.5) - special.digamma(7), abs=1e-13)

    def test_risk_table(self, files, tmp_path):
        cfg = files("t.cfg", TABLE_CONFIG)
        out = tmp_path / "out.csv"
        assert main(["risk-table", "--config", cfg, "--out", str(out)]) == 0
        tables = read_tables(out)
        assert [t.n for t in tables] == [4, 6]
        assert len(tables[0].rows) == 2 * 3

    def test_risk_table_one_rep(self, files, tmp_path):
        cfg = files("t.cfg", TABLE_CONFIG)
        out = tmp_path / "out.csv"
        assert main(["risk-table", "--config", cfg, "--out", str(out), "--reps", "1"]) == 0
        assert all(row.split(",")[5] == "NA" for row in out.read_text().splitlines()[1:])

    def test_risk_table_needs_seed(self, files, tmp_path, capsys):
        cfg = files("t.cfg", TABLE_CONFIG.replace("seed = 5\n", ""))
        assert main(["risk-table", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 1
        assert "seed" in capsys.readouterr().err

    def test_unwritable_output(self, files, capsys):
        cfg = files("t.cfg", TABLE_CONFIG)
        assert main(["risk-table", "--config", cfg, "--out", "/nonexistent/dir/o.csv", "--reps", "10"]) == 1
        assert "error" in capsys.readouterr().err

    def test_validate_default(self, capsys):
        assert main(["validate"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] and {c["name"] for c in report["checks"]} >= {"constants", "bz_cross_oracle", "dominance_scan"}

    def test_validate_negative_control(self, capsys):
        assert main(["validate", "--inject-constant-error", "1e-6", "--reps", "2000"]) == 1
        report = json.loads(capsys.readouterr().out)
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        assert failed == ["constants"]

    def test_validate_tight_tolerance(self, capsys):
        assert main(["validate", "--tol", "1e-15", "--reps", "2000"]) == 1
        report = json.loads(capsys.readouterr().out)
        assert not report["passed"]

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "expo_entropy.cli", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "risk-table" in proc.stdout
