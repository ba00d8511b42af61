from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from splineii.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, read_data
from splineii.models import SharedDraws, get_model, simulate_sample


@pytest.fixture
def data_file(tmp_path):
    x = simulate_sample(get_model("trunc_exp"), SharedDraws.generate(300, 3), [1.0])
    path = tmp_path / "x.csv"
    path.write_text("x\n" + "\n".join(repr(float(v)) for v in x) + "\n")
    return path


def small_config(tmp_path, **extra):
    doc = {"model": "trunc_exp", "theta0": [1.0], "n_list": [100], "reps": 2, "master_seed": 3, "regime": "S3", "kappa": 1.0}
    doc.update(extra)
    path = tmp_path / "mc.json"
    path.write_text(json.dumps(doc))
    return path


class TestReadData:
    def test_header_skipped(self, data_file):
        assert read_data(data_file).size == 300

    def test_non_numeric_body(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0.1\nabc\n")
        assert main(["estimate", "--model", "trunc_exp", "--data", str(p)]) == EXIT_CONFIG


class TestEstimate:
    def test_json_output(self, data_file, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = main(["estimate", "--model", "trunc_exp", "--data", str(data_file), "--regime", "S2", "--seed", "4", "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["sizes"] == {"n": 300, "k": 5197}
        assert 0.2 <= doc["theta_hat"][0] <= 3.0 and doc["a_n_held"] is True
        assert len(doc["ci_95"]) == 1 and doc["info_inverse_hat"][0][0] > 0

    def test_stdout_and_no_variance(self, data_file, capsys):
        assert main(["estimate", "--model", "trunc_exp", "--data", str(data_file), "--k", "2000", "--no-variance"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["sizes"]["k"] == 2000 and doc["info_inverse_hat"] is None

    def test_a_n_failure_exit(self, tmp_path):
        p = tmp_path / "spike.csv"
        p.write_text("\n".join(["0.02"] * 20))
        assert main(["estimate", "--model", "trunc_exp", "--data", str(p), "--k", "1000"]) == EXIT_NUMERIC

    @pytest.mark.parametrize(
        "argv",
        [
            ["estimate", "--model", "nope", "--data", "x.csv"],
            ["estimate", "--model", "trunc_exp"],
            ["estimate", "--model", "trunc_exp", "--data", "/nonexistent/x.csv"],
            ["bogus"],
        ],
    )
    def test_config_errors(self, argv):
        assert main(argv) == EXIT_CONFIG

    def test_bad_kappa(self, data_file):
        argv = ["estimate", "--model", "trunc_exp", "--data", str(data_file), "--regime", "S3", "--kappa", "-1"]
        assert main(argv) == EXIT_CONFIG


class TestMontecarlo:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["montecarlo", "--config", str(small_config(tmp_path)), "--out-dir", str(out)]) == EXIT_OK
        rows = list(csv.reader((out / "records.csv").open()))
        assert rows[0][:5] == ["rep", "n", "k", "j", "J"] and len(rows) == 3
        assert (out / "hist_n100_theta1.svg").read_text().startswith("<?xml")
        summary = json.loads((out / "summary.json").read_text())
        assert "100" in json.dumps(summary)
        assert "n=100" in capsys.readouterr().out

    def test_key_value_config(self, tmp_path):
        cfg = tmp_path / "mc.txt"
        cfg.write_text('model = "trunc_exp"\ntheta0 = [1.0]\nn_list = [64]\nreps = 2\nregime = S3\nkappa = 1.0\n')
        assert main(["montecarlo", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == EXIT_OK

    def test_rerun_byte_identical(self, tmp_path):
        cfg = small_config(tmp_path, record_timing=False)
        main(["montecarlo", "--config", str(cfg), "--out-dir", str(tmp_path / "a")])
        main(["montecarlo", "--config", str(cfg), "--out-dir", str(tmp_path / "b")])
        for name in ("records.csv", "summary.json", "hist_n100_theta1.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_invalid_config(self, tmp_path):
        cfg = small_config(tmp_path, reps=1)
        assert main(["montecarlo", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["montecarlo", "--config", str(tmp_path / "none.json"), "--out-dir", str(tmp_path)]) == EXIT_CONFIG


class TestRatecheckAndSelftest:
    def test_ratecheck_prints_slope(self, capsys):
        argv = ["ratecheck", "--model", "trunc_exp", "--theta0", "1.0", "--kmin", "256", "--kmax", "4096", "--points", "3", "--reps", "3"]
        assert main(argv) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4 and np.isfinite(float(lines[-1].split()[-1]))

    def test_ratecheck_too_few_points(self):
        argv = ["ratecheck", "--model", "trunc_exp", "--theta0", "1.0", "--points", "2", "--reps", "2"]
        assert main(argv) == EXIT_CONFIG

    def test_selftest(self, capsys):
        assert main(["selftest"]) == EXIT_OK
        assert "FAIL" not in capsys.readouterr().out

    def test_help_exits_zero(self):
        assert main(["--help"]) == EXIT_OK
