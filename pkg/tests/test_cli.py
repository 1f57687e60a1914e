import csv
import json
import math

import pytest

from matprod.cli import main, parse_config, parse_widths
from matprod.errors import UsageError


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# fingerprint=")
    rows = list(csv.DictReader(lines[1:]))
    return lines[0], rows


class TestParsing:
    def test_moments_flags(self):
        cfg = parse_config(
            ["moments", "--widths", "2,2", "--p", "1", "--dist", "rademacher", "--u", "e1", "--k", "1,2"]
        )
        assert cfg.subcommand == "moments"
        assert cfg.widths == (2, 2)
        assert cfg.k == (1, 2)
        assert cfg.u == "e1"
        assert cfg.trials == 100_000
        assert cfg.seed == 0
        assert cfg.format == "csv"

    def test_width_shorthand(self):
        assert parse_widths("64x16") == (64,) * 17
        assert parse_widths("8,16x3") == (8, 16, 16, 16)
        assert parse_widths("2,2") == (2, 2)

    def test_bad_probability(self, capsys):
        assert main(["beta", "--widths", "2,2", "--p", "1.5", "--dist", "gaussian"]) == 2
        assert "--p" in capsys.readouterr().err

    def test_missing_widths(self, capsys):
        assert main(["beta", "--p", "1", "--dist", "gaussian"]) == 2
        assert "--widths" in capsys.readouterr().err

    def test_bad_width_token(self):
        with pytest.raises(UsageError):
            parse_widths("2,zebra")

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps({"widths": "4,4", "p": "0.5", "trials": 10, "seed": 3}))
        cfg = parse_config(["beta", "--config", str(cfg_file), "--p", "1"])
        assert cfg.widths == (4, 4)
        assert cfg.p == 1  # flag overrides file
        assert cfg.trials == 10
        assert cfg.seed == 3

    def test_unreadable_config_file(self, capsys):
        assert main(["beta", "--config", "/nonexistent.json", "--widths", "2,2"]) == 2


class TestBetaCommand:
    def test_half_mask_constant_width(self, tmp_path, capsys):
        out = tmp_path / "beta.csv"
        code = main(
            ["beta", "--widths", "64x16", "--p", "0.5", "--dist", "gaussian", "--u", "e1",
             "--output", str(out)]
        )
        assert code == 0
        _, rows = read_csv(out)
        assert float(rows[0]["beta"]) == pytest.approx(1.25)
        assert float(rows[0]["term_width"]) == pytest.approx(1.25)
        assert float(rows[0]["term_fourth"]) == 0.0


class TestMomentsCommand:
    def test_rademacher_uniform_row(self, tmp_path):
        out = tmp_path / "moments.csv"
        code = main(
            ["moments", "--widths", "2,2", "--p", "1", "--dist", "rademacher",
             "--u", "uniform", "--k", "2", "--trials", "100000", "--seed", "5",
             "--output", str(out), "--assert"]
        )
        assert code == 0
        _, rows = read_csv(out)
        row = rows[0]
        assert float(row["exact"]) == 1.5
        assert float(row["brute_force"]) == 1.5
        assert float(row["theory"]) == pytest.approx(math.exp(0.5))
        mc, se = float(row["monte_carlo"]), float(row["mc_stderr"])
        assert abs(mc - 1.5) <= 5 * se

    def test_budget_exceeded_reported_in_reason(self, tmp_path):
        out = tmp_path / "moments.csv"
        code = main(
            ["moments", "--widths", "32x8", "--p", "1", "--dist", "gaussian",
             "--k", "2", "--trials", "100", "--output", str(out)]
        )
        assert code == 0
        _, rows = read_csv(out)
        assert rows[0]["exact"] != ""
        assert rows[0]["brute_force"] == ""
        assert "brute_force" in rows[0]["reason"]


class TestDeterminism:
    def test_chi2_check_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["chi2-check", "--widths", "8,8", "--trials", "1000", "--seed", "7"]
        assert main(args + ["--output", str(a)]) == 0
        assert main(args + ["--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_threads_do_not_change_bytes(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--widths", "6,6,6", "--p", "0.5", "--dist", "gaussian",
                "--trials", "2000", "--seed", "2"]
        monkeypatch.setenv("MATPROD_THREADS", "1")
        assert main(args + ["--output", str(a)]) == 0
        monkeypatch.setenv("MATPROD_THREADS", "4")
        assert main(args + ["--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestFormats:
    def test_json_mirrors_csv(self, tmp_path):
        base = ["beta", "--widths", "4,4", "--p", "0.5", "--dist", "uniform", "--u", "uniform"]
        csv_path, json_path = tmp_path / "o.csv", tmp_path / "o.json"
        assert main(base + ["--output", str(csv_path)]) == 0
        assert main(base + ["--format", "json", "--output", str(json_path)]) == 0
        _, rows = read_csv(csv_path)
        lines = json_path.read_text().splitlines()
        meta = json.loads(lines[0])
        assert set(meta) == {"fingerprint", "seed", "version"}
        obj = json.loads(lines[1])
        for key, text in rows[0].items():
            if text == "":
                assert obj[key] is None
            else:
                assert float(obj[key]) == pytest.approx(float(text), rel=1e-15)

    def test_csv_has_header_and_comment(self, tmp_path):
        out = tmp_path / "o.csv"
        main(["beta", "--widths", "3,3", "--output", str(out)])
        comment, rows = read_csv(out)
        assert "seed=0" in comment and "version=" in comment
        assert rows and "beta" in rows[0]

    def test_stdout_default(self, capsys):
        assert main(["beta", "--widths", "3,3"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("# fingerprint=")


class TestAssertions:
    def test_negative_control_fails_assert(self, tmp_path):
        code = main(
            ["jacobian-compare", "--widths", "8,16x3", "--dist", "gaussian",
             "--trials", "2000", "--seed", "1", "--product-p", "0.9",
             "--tolerance", "0.02", "--assert", "--output", str(tmp_path / "o.csv")]
        )
        assert code == 1

    def test_matching_sides_pass_assert(self, tmp_path):
        code = main(
            ["jacobian-compare", "--widths", "8,16x3", "--dist", "gaussian",
             "--trials", "2000", "--seed", "1", "--tolerance", "0.05",
             "--assert", "--output", str(tmp_path / "o.csv")]
        )
        assert code == 0

    def test_chi2_check_requires_gaussian_identity_mask(self, capsys):
        assert main(["chi2-check", "--widths", "4,4", "--p", "0.5"]) == 2
        assert main(["chi2-check", "--widths", "4,4", "--dist", "rademacher"]) == 2


class TestKsTestCommand:
    def test_emits_statistic_and_passes_loose_threshold(self, tmp_path):
        out = tmp_path / "ks.csv"
        code = main(
            ["ks-test", "--widths", "32x8", "--p", "1", "--dist", "gaussian",
             "--trials", "20000", "--seed", "4", "--tolerance", "0.05",
             "--assert", "--output", str(out)]
        )
        assert code == 0
        _, rows = read_csv(out)
        assert float(rows[0]["beta"]) == pytest.approx(0.5)
        assert float(rows[0]["ref_mean"]) == pytest.approx(-0.25)
        assert float(rows[0]["ks_statistic"]) < 0.05
