import math
import subprocess
import sys

import numpy as np
import pytest

from mcnoma.cli import CSV_HEADER, main
from mcnoma.frames import read_frame_file
from mcnoma.sim import rayleigh_bpsk_ber


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    return [line.split(",") for line in lines[1:]]


def test_design_writes_frame_and_report(tmp_path, capsys):
    out = tmp_path / "f48.txt"
    rc = main(["design", "--m", "4", "--k", "8", "--seed", "1",
               "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "welch_bound 0.37796447" in printed
    assert "coherence" in printed and "tightness_residual" in printed
    f = read_frame_file(str(out))
    assert (f.m, f.k) == (4, 8)
    assert f.tight
    assert (tmp_path / "f48.txt.manifest.txt").exists()


def test_design_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["design", "--m", "3", "--k", "6", "--seed", "2",
                 "--iters", "40", "--out", str(a)]) == 0
    assert main(["design", "--m", "3", "--k", "6", "--seed", "2",
                 "--iters", "40", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_design_square_reaches_orthobasis(tmp_path, capsys):
    out = tmp_path / "f44.txt"
    assert main(["design", "--m", "4", "--k", "4", "--seed", "1",
                 "--out", str(out)]) == 0
    line = [l for l in capsys.readouterr().out.splitlines()
            if l.startswith("coherence ")][0]
    assert float(line.split()[1]) <= 1e-8


def test_design_invalid_dims_exit_2(tmp_path, capsys):
    assert main(["design", "--m", "4", "--k", "3"]) == 2
    assert "error" in capsys.readouterr().err


def test_ber_scalar_rayleigh_point(tmp_path):
    out = tmp_path / "r.csv"
    rc = main(["ber", "--m", "1", "--k", "1", "--mod", "bpsk",
               "--frame", "identity", "--detector", "ml",
               "--snr", "10:5:10", "--seed", "7",
               "--target-errors", "200", "--max-trials", "100000",
               "--out", str(out)])
    assert rc == 0
    rows = _rows(out)
    assert len(rows) == 1
    snr, trials, errs, bits, ber = rows[0][:5]
    assert float(snr) == 10.0
    assert rows[0][5:] == ["ml", "1", "1", "bpsk", "7"]
    assert int(bits) == int(trials) * 1
    p = rayleigh_bpsk_ber(10.0)
    sigma = math.sqrt(p * (1 - p) / int(trials))
    assert int(errs) >= 200
    assert abs(float(ber) - p) <= 3 * sigma
    manifest = (tmp_path / "r.csv.manifest.txt").read_text()
    assert "command=ber" in manifest
    assert "seed=7" in manifest
    assert "detector=ml" in manifest
    assert "started_utc=" in manifest and "finished_utc=" in manifest


def test_ber_identity_dimension_mismatch_exit_2(tmp_path, capsys):
    rc = main(["ber", "--m", "4", "--k", "8", "--frame", "identity",
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    assert "identity frame requires k = m" in capsys.readouterr().err


def test_ber_invalid_flag_values_exit_2(tmp_path, capsys):
    assert main(["ber", "--detector", "zf"]) == 2
    capsys.readouterr()
    assert main(["ber", "--snr", "10:0:20",
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["ber", "--snr", "10-20",
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["ber", "--frame", "file:/does/not/exist.txt",
                 "--out", str(tmp_path / "x.csv")]) == 2


def test_ber_rerun_and_workers_byte_identical(tmp_path):
    args = ["ber", "--m", "2", "--k", "4", "--mod", "bpsk",
            "--frame", "random-tight", "--detector", "gsd",
            "--snr", "0:6:6", "--seed", "3", "--target-errors", "40",
            "--max-trials", "1500"]
    outs = [tmp_path / f"{i}.csv" for i in range(3)]
    assert main(args + ["--out", str(outs[0])]) == 0
    assert main(args + ["--out", str(outs[1])]) == 0
    assert main(args + ["--out", str(outs[2]), "--workers", "3"]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert outs[0].read_bytes() == outs[2].read_bytes()


def test_ber_snr_sweep_row_grid(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["ber", "--m", "2", "--k", "3", "--mod", "bpsk",
               "--frame", "random-tight", "--detector", "mmse",
               "--snr", "0:4:12", "--target-errors", "20",
               "--max-trials", "400", "--out", str(out)])
    assert rc == 0
    rows = _rows(out)
    assert [float(r[0]) for r in rows] == [0.0, 4.0, 8.0, 12.0]


def test_ber_uses_designed_frame_file(tmp_path):
    frame_path = tmp_path / "designed.txt"
    assert main(["design", "--m", "2", "--k", "4", "--seed", "5",
                 "--iters", "40", "--out", str(frame_path)]) == 0
    out = tmp_path / "ber.csv"
    rc = main(["ber", "--m", "2", "--k", "4", "--mod", "qpsk",
               "--frame", f"file:{frame_path}", "--detector", "gsd",
               "--snr", "8:4:8", "--target-errors", "30",
               "--max-trials", "600", "--out", str(out)])
    assert rc == 0
    assert len(_rows(out)) == 1


def test_compare_ml_gsd_identical_ber_columns(tmp_path):
    out = tmp_path / "cmp.csv"
    rc = main(["compare", "--detectors", "ml,gsd", "--m", "2", "--k", "4",
               "--mod", "bpsk", "--frame", "random-tight",
               "--snr", "0:8:8", "--seed", "11", "--target-errors", "30",
               "--max-trials", "800", "--out", str(out)])
    assert rc == 0
    rows = _rows(out)
    assert len(rows) == 4  # 2 snr x 2 detectors
    ml_rows = [r for r in rows if r[5] == "ml"]
    gsd_rows = [r for r in rows if r[5] == "gsd"]
    for rm, rg in zip(ml_rows, gsd_rows):
        assert rm[:5] == rg[:5]  # same trials, errors, ber, row for row


def test_compare_gsd_beats_mmse(tmp_path):
    out = tmp_path / "cmp2.csv"
    rc = main(["compare", "--detectors", "gsd,mmse", "--m", "2", "--k", "4",
               "--mod", "qpsk", "--frame", "incoherent",
               "--frame-iters", "40", "--snr", "12:4:12", "--seed", "1",
               "--target-errors", "60", "--max-trials", "4000",
               "--out", str(out)])
    assert rc == 0
    rows = _rows(out)
    assert len(rows) == 2
    ber = {r[5]: float(r[4]) for r in rows}
    trials = {r[5]: int(r[1]) for r in rows}
    slack = 3 * (math.sqrt(ber["gsd"] / trials["gsd"] + 1e-12)
                 + math.sqrt(ber["mmse"] / trials["mmse"] + 1e-12))
    assert ber["gsd"] <= ber["mmse"] + slack


def test_compare_requires_two_detectors(tmp_path, capsys):
    assert main(["compare", "--detectors", "gsd",
                 "--out", str(tmp_path / "x.csv")]) == 2
    assert "at least two" in capsys.readouterr().err


def test_csv_reals_17_significant_digits(tmp_path):
    out = tmp_path / "fmt.csv"
    assert main(["ber", "--m", "2", "--k", "4", "--mod", "bpsk",
                 "--frame", "random-tight", "--detector", "mmse",
                 "--snr", "0:4:4", "--target-errors", "25",
                 "--max-trials", "500", "--out", str(out)]) == 0
    for row in _rows(out):
        ber = float(row[4])
        # 17 significant digits round-trip float64 exactly
        assert format(ber, ".17g") == row[4]
        assert ber == int(row[2]) / int(row[3])


def test_cli_version_and_help():
    assert main(["--version"]) == 0
    assert main(["--help"]) == 0
    assert main([]) == 2  # a subcommand is required
    assert main(["ber", "--help"]) == 0


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "mcnoma", "--version"],
        capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.strip() == "0.1.0"


def test_console_script(tmp_path):
    res = subprocess.run(["mcnoma", "design", "--m", "2", "--k", "2",
                          "--seed", "0", "--out", str(tmp_path / "i.txt")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "coherence" in res.stdout
