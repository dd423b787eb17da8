import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mtspec.cli import main, read_series
from mtspec.synth import ProcessSpec, generate
from mtspec.tapers import multitaper_spectrum


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture
def series_file(tmp_path):
    path = tmp_path / "x.csv"
    assert main(["generate", "--synth", "ar:0.9,-0.81", "--n", "512", "--seed", "3", "-o", str(path)]) == 0
    return path


def test_generate_round_trip(series_file):
    header, data = _read_csv(series_file)
    assert header == ["x"]
    expected = generate(ProcessSpec.ar([0.9, -0.81]), 512, 3).samples
    assert np.array_equal(data[:, 0], expected)
    assert np.array_equal(read_series(str(series_file)).samples, expected)


def test_spectrum_columns(series_file, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["spectrum", str(series_file), "--tapers", "6", "--log", "-o", str(out)]) == 0
    header, data = _read_csv(out)
    assert header == ["f", "S_hat", "theta_hat"]
    assert data.shape == (514, 3)
    est = multitaper_spectrum(read_series(str(series_file)), 6)
    assert np.array_equal(data[:, 1], est.values)
    assert data[0, 0] == 0.0 and data[-1, 0] == 0.5


def test_adaptive_outputs_and_determinism(series_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["adaptive", str(series_file), "--disc", "0.3", "-o", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    header, data = _read_csv(a)
    assert header == ["f", "theta_hat", "h_of_f"]
    assert np.all(data[:, 2] > 0)
    diag = json.loads((tmp_path / "a.json").read_text())
    assert diag["schema_version"] == 1
    assert "timings" not in diag
    assert [r["f_disc"] for r in diag["touch_points"]] == [0.3, 0.3]


def test_boundary_kernel_values(capsys):
    assert main(["boundary-kernel", "-q", "0", "--ftilde", "-1", "--points", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "z,G"
    z, g = np.array([line.split(",") for line in lines[1:]], dtype=float).T
    np.testing.assert_allclose(z, [-1, 0, 1])
    np.testing.assert_allclose(g, [6.0, 0.0, 0.0], atol=1e-12)


def test_boundary_kernel_compare(capsys):
    assert main(["boundary-kernel", "-q", "0", "--compare", "--grid", "800"]) == 0
    captured = capsys.readouterr()
    gap = float(captured.err.strip().rsplit("=", 1)[1])
    assert gap < 0.01
    assert captured.out.splitlines()[0] == "z,continuum,discrete,weight"


def test_bench_json_and_csv(tmp_path, capsys):
    csv_path = tmp_path / "mse.csv"
    argv = ["bench", "--synth", "ar:0.5", "--n", "256", "--reps", "4", "--fixed-h", "0.1",
            "--tapers", "4", "--csv", str(csv_path), "--threads", "1"]
    assert main(argv) == 0
    first = json.loads(capsys.readouterr().out)
    assert main(argv) == 0
    second = json.loads(capsys.readouterr().out)
    assert first == second
    assert first["reps"] == 4 and first["completed"] == 4
    assert first["integrated_ease"] > 0
    header, data = _read_csv(csv_path)
    assert header == ["f", "mse", "mse_se"]
    assert data.shape[0] == 258


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum"],
        ["spectrum", "--synth", "ar:0.5", "--tapers", "0"],
        ["spectrum", "--synth", "nonsense"],
        ["spectrum", "/nonexistent/file.csv"],
        ["boundary-kernel", "-q", "1"],
        ["boundary-kernel", "--beta", "-1"],
        ["adaptive", "--synth", "ar:0.5", "--n", "256", "--disc", "0.7"],
        ["bench", "--synth", "ar:0.5", "--reps", "1", "--fixed-h", "0.1"],
        ["bench", "--synth", "ar:0.5", "--reps", "4"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "mtspec: error:" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["spectrum", "--tapers", "many"])
    assert exc.value.code == 2


def test_numeric_failure_exits_3(tmp_path, capsys):
    path = tmp_path / "zeros.csv"
    path.write_text("x\n" + "0\n" * 64)
    assert main(["adaptive", str(path)]) == 3
    assert "stage 'tapers'" in capsys.readouterr().err


def test_bad_number_in_input(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x\n1\nabc\n2\n")
    assert main(["spectrum", str(path)]) == 2


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mtspec.cli", "boundary-kernel", "--points", "2"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "z,G"
