import json
import os
from pathlib import Path

import pytest

from conftest import write_run_inputs
from popforge.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_stdout(out: str) -> dict:
    doc = json.loads(out)  # exactly one JSON document per command
    assert isinstance(doc, dict)
    return doc


class TestUsage:
    def test_no_command(self, capsys):
        code, out, err = run_cli(capsys)
        assert code == 64
        assert out == ""

    def test_unknown_command(self, capsys):
        code, out, err = run_cli(capsys, "explode")
        assert code == 64

    def test_unknown_flag(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 5, "households")])
        code, out, err = run_cli(capsys, "generate", "--config", str(path), "--frobnicate")
        assert code == 64

    def test_missing_config_file(self, capsys, tmp_path):
        missing = tmp_path / "nope.json"
        code, out, err = run_cli(capsys, "validate", "--config", str(missing))
        assert code == 64
        assert str(missing) in err

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0


class TestValidate:
    def test_clean_inputs_exit_zero(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 5, "households")])
        code, out, err = run_cli(capsys, "validate", "--config", str(path))
        assert code == 0
        doc = parse_stdout(out)
        assert doc["command"] == "validate" and doc["ok"] is True

    def test_broken_inputs_exit_one(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 5, "households")])
        (tmp_path / "counts.csv").write_text("region_id,count,count_type\nR1,-2,households\n")
        code, out, err = run_cli(capsys, "validate", "--config", str(path))
        assert code == 1
        doc = parse_stdout(out)
        assert doc["ok"] is False
        assert doc["issues"][0]["rule"] == "counts-nonnegative"


class TestGenerate:
    def test_generates_files(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 10, "households")])
        code, out, err = run_cli(capsys, "generate", "--config", str(path))
        assert code == 0
        doc = parse_stdout(out)
        assert doc["ok"] is True
        assert (Path(doc["output_dir"]) / "household_R1.csv").exists()
        assert (Path(doc["output_dir"]) / "manifest.json").exists()

    def test_seed_and_out_overrides(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 10, "households")])
        out_a = tmp_path / "ova"
        out_b = tmp_path / "ovb"
        run_cli(capsys, "generate", "--config", str(path), "--seed", "1", "--out", str(out_a))
        run_cli(capsys, "generate", "--config", str(path), "--seed", "2", "--out", str(out_b))
        a = (out_a / "household_R1.csv").read_bytes()
        b = (out_b / "household_R1.csv").read_bytes()
        assert a != b

    def test_jobs_override_same_bytes(self, capsys, tmp_path):
        path = write_run_inputs(
            tmp_path, region_specs=[(f"R{i}", 12, "households") for i in range(4)]
        )
        out_a = tmp_path / "j1"
        out_b = tmp_path / "j4"
        run_cli(capsys, "generate", "--config", str(path), "--jobs", "1", "--out", str(out_a))
        run_cli(capsys, "generate", "--config", str(path), "--jobs", "4", "--out", str(out_b))
        for name in os.listdir(out_a):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_invalid_inputs_exit_one(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 10, "households")])
        (tmp_path / "counts.csv").write_text("region_id,count,count_type\nR1,-2,households\n")
        code, out, err = run_cli(capsys, "generate", "--config", str(path))
        assert code == 1


class TestDiagnoseAndReport:
    def generated(self, capsys, tmp_path, shift=0.0):
        # truth marginals optionally shifted away from the pool's composition
        rows = []
        for rid in ("R1", "R2"):
            shares = [0.1 + shift, 0.4 - shift, 0.3, 0.2]
            for cat, share in zip("1234", shares):
                rows.append((rid, "hh_size", cat, round(1000 * share, 3)))
            for cat, share in zip(("own", "rent"), (0.5, 0.5)):
                rows.append((rid, "tenure", cat, 500))
        path = write_run_inputs(
            tmp_path,
            region_specs=[("R1", 500, "households"), ("R2", 500, "households")],
            marginals_rows=rows,
        )
        code, out, err = run_cli(capsys, "generate", "--config", str(path))
        assert code == 0
        return path

    def test_diagnose_writes_json(self, capsys, tmp_path):
        path = self.generated(capsys, tmp_path)
        code, out, err = run_cli(capsys, "diagnose", "--config", str(path))
        assert code == 0
        doc = parse_stdout(out)
        assert doc["command"] == "diagnose"
        assert Path(doc["diagnostics"]).exists()
        assert doc["regions"] == 2

    def test_strict_diagnose_flags_divergence(self, capsys, tmp_path):
        # srs draws from the pool (equal sizes), truth says otherwise
        path = self.generated(capsys, tmp_path, shift=0.25)
        code, out, err = run_cli(capsys, "diagnose", "--config", str(path), "--strict")
        assert code == 3
        doc = parse_stdout(out)
        assert doc["flagged_regions"] == ["R1", "R2"]

    def test_report_renders(self, capsys, tmp_path):
        path = self.generated(capsys, tmp_path)
        run_cli(capsys, "diagnose", "--config", str(path))
        code, out, err = run_cli(capsys, "report", "--config", str(path))
        assert code == 0
        doc = parse_stdout(out)
        names = {os.path.basename(f) for f in doc["files"]}
        assert {"report.md", "map_R1.svg", "map_R2.svg"} <= names
        for f in doc["files"]:
            assert Path(f).exists()

    def test_diagnose_without_marginals_is_usage_error(self, capsys, tmp_path):
        path = write_run_inputs(tmp_path, region_specs=[("R1", 10, "households")])
        run_cli(capsys, "generate", "--config", str(path))
        code, out, err = run_cli(capsys, "diagnose", "--config", str(path))
        assert code == 64
        assert "marginals" in err

    def test_diagnose_before_generate_fails_cleanly(self, capsys, tmp_path):
        rows = [("R1", "tenure", "own", 50), ("R1", "tenure", "rent", 50)]
        path = write_run_inputs(
            tmp_path, region_specs=[("R1", 10, "households")], marginals_rows=rows
        )
        code, out, err = run_cli(capsys, "diagnose", "--config", str(path))
        assert code == 1
        assert "manifest" in err
