"""Command-line harness: subcommands, exit codes, CSV artifacts."""

import csv
from pathlib import Path

import pytest

from descattn.cli import (BENCH_COLUMNS, SWEEP_COLUMNS, BenchSpec, EXIT_IO,
                          EXIT_OK, EXIT_USAGE, EXIT_VERIFY, RunSpec, main,
                          run_from_row, sweep)

TINY = ["--frames", "2", "--grid", "4x4", "--channels", "16", "--heads", "2",
        "--ratio", "2", "--layers", "1", "--seed", "3"]


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestVerify:
    def test_default_config_passes(self, capsys):
        assert main(["verify", "--seed", "7"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out


class TestFlops:
    def test_production_configuration_prints_reduction(self, tmp_path, capsys):
        code = main(["flops", "--frames", "1000", "--grid", "37x37", "--ratio", "4",
                     "--aux", "--interval", "200", "--channels", "16", "--heads", "2",
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "14.58" in out
        assert "15.76" in out
        rows = read_csv(tmp_path / "flops.csv")
        assert {r["mode"] for r in rows} == {"dense", "descriptor"}

    def test_markdown_table_written(self, tmp_path):
        code = main(["flops", *TINY, "--format", "md", "--out", str(tmp_path)])
        assert code == EXIT_OK
        text = (tmp_path / "flops.md").read_text()
        assert text.startswith("| Metric | Mode |")


class TestBench:
    def test_artifacts_and_schema(self, tmp_path):
        code = main(["bench", *TINY, "--repeats", "1", "--out", str(tmp_path)])
        assert code == EXIT_OK
        bench = read_csv(tmp_path / "bench.csv")
        assert list(bench[0].keys()) == list(BENCH_COLUMNS)
        assert {r["mode"] for r in bench} == {"dense", "descriptor", "stream"}
        rows = read_csv(tmp_path / "sweep.csv")
        assert list(rows[0].keys()) == list(SWEEP_COLUMNS)

    def test_rows_reproduce_checksums(self, tmp_path):
        main(["bench", *TINY, "--repeats", "1", "--out", str(tmp_path)])
        for row in read_csv(tmp_path / "sweep.csv"):
            assert run_from_row(row) == row["checksum"]

    def test_repeats_share_checksums(self, tmp_path):
        main(["bench", *TINY, "--repeats", "3", "--out", str(tmp_path)])
        rows = read_csv(tmp_path / "sweep.csv")
        by_mode = {}
        for row in rows:
            by_mode.setdefault(row["mode"], set()).add(row["checksum"])
        for mode, sums in by_mode.items():
            assert len(sums) == 1, f"{mode} checksums differ across repeats"

    def test_ratio_sweep_produces_a_row_per_value(self, tmp_path):
        code = main(["bench", "--frames", "2", "--grid", "8x8", "--channels", "16",
                     "--heads", "2", "--layers", "1", "--ratio", "1,2,4,8",
                     "--repeats", "1", "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "sweep.csv")
        assert {r["r"] for r in rows} == {"1", "2", "4", "8"}

    def test_parallel_matches_serial(self, tmp_path):
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        args = ["bench", "--frames", "2,3", "--grid", "4x4", "--channels", "16",
                "--heads", "2", "--ratio", "2", "--layers", "1", "--repeats", "1"]
        assert main([*args, "--out", str(serial)]) == EXIT_OK
        assert main([*args, "--parallel", "--out", str(parallel)]) == EXIT_OK
        a = [(r["run_id"], r["mode"], r["checksum"]) for r in read_csv(serial / "sweep.csv")]
        b = [(r["run_id"], r["mode"], r["checksum"]) for r in read_csv(parallel / "sweep.csv")]
        assert a == b

    def test_markdown_summary(self, tmp_path):
        main(["bench", *TINY, "--repeats", "1", "--format", "md",
              "--out", str(tmp_path)])
        assert (tmp_path / "summary.md").read_text().startswith("| mode |")

    def test_empty_spec_writes_header_only(self, tmp_path):
        sweep(BenchSpec(runs=[], out_dir=tmp_path))
        lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0] == ",".join(SWEEP_COLUMNS)

    def test_failure_manifest_preserves_partial_results(self, tmp_path):
        spec = BenchSpec(runs=[RunSpec(frames=2, grid=(4, 4), channels=16, heads=2,
                                       ratio=2, layers=1, repeats=1),
                               RunSpec(frames=2, grid=(4, 4), channels=16, heads=2,
                                       ratio=9, layers=1, repeats=1)],
                         out_dir=tmp_path)
        rows = sweep(spec)
        assert rows, "the valid run must still produce rows"
        failures = read_csv(tmp_path / "failures.csv")
        assert len(failures) == 1 and failures[0]["run_id"] == "1"


class TestStreamAndHistogram:
    def test_stream_writes_cache_report(self, tmp_path, capsys):
        code = main(["stream", "--frames", "6", "--chunk", "2", "--retain", "2",
                     *TINY[2:], "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "cache_report.csv")
        assert len(rows) == 1  # one layer
        assert "ratio_vs_full" in capsys.readouterr().out

    def test_histogram_files(self, tmp_path):
        code = main(["histogram", *TINY, "--out", str(tmp_path)])
        assert code == EXIT_OK
        for mode in ("frame", "global"):
            rows = read_csv(tmp_path / f"histogram_{mode}.csv")
            assert len(rows) == 64
            total = sum(int(r["count"]) for r in rows)
            assert total > 0


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        assert main(["bench", "--bogus"]) == EXIT_USAGE

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_invalid_combination_is_usage_error(self, tmp_path, capsys):
        code = main(["flops", "--grid", "4x4", "--ratio", "9",
                     "--channels", "16", "--heads", "2", "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        assert "invalid" in capsys.readouterr().err

    def test_unwritable_out_dir_is_io_error(self, tmp_path, capsys):
        blocker = tmp_path / "file.txt"
        blocker.write_text("x")
        code = main(["flops", *TINY, "--out", str(blocker / "sub")])
        assert code == EXIT_IO

    def test_help_exits_cleanly(self):
        assert main(["--help"]) == EXIT_OK

    def test_verify_failure_exit_code(self, monkeypatch):
        from descattn import verify as verify_mod

        def boom(seed):
            raise AssertionError("forced")

        monkeypatch.setattr(verify_mod, "CHECKS", [("forced.failure", boom)])
        assert main(["verify"]) == EXIT_VERIFY


class TestConfigFile:
    def test_file_values_apply_and_cli_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("frames=1000\ngrid=37x37\nratio=4\naux=true\n"
                       "channels=16\nheads=2\ninterval=200\n")
        out = tmp_path / "out"
        code = main(["flops", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        assert "14.58" in capsys.readouterr().out
        # explicit flag beats the file
        code = main(["flops", "--config", str(cfg), "--ratio", "1",
                     "--out", str(out)])
        assert code == EXIT_OK
        text = capsys.readouterr().out
        assert "14.58" not in text

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["flops", "--config", str(tmp_path / "nope.cfg")]) == EXIT_IO
