import io
import json

import numpy as np
import pytest

from clihelpers import run_cli, strip_clock
from percdetect import NoiseModel, TrueImage, synthesize
from percdetect.cli import main
from percdetect.fileio import write_csv, write_pgm


@pytest.fixture
def noisy_square(tmp_path):
    img = synthesize(TrueImage.centered_square(60, 20), NoiseModel.gaussian(0.2), 1)
    path = tmp_path / "square.csv"
    write_csv(path, img.values)
    return path


@pytest.fixture
def noise_only(tmp_path):
    img = synthesize(TrueImage.blank(60), NoiseModel.gaussian(0.2), 1)
    path = tmp_path / "noise.pgm"
    write_pgm(path, np.clip(np.round(img.values * 255), 0, 255).astype(int), 255)
    return path


def _main(args):
    out = io.StringIO()
    code = main([str(a) for a in args], out=out)
    return code, out.getvalue().splitlines()


def test_detect_exit_codes(noisy_square, noise_only):
    code, lines = _main(["detect", "--input", noisy_square, "--sigma", 0.2])
    assert code == 2
    manifest, result = json.loads(lines[0]), json.loads(lines[1])
    assert manifest["command"] == "detect" and "timestamp" in manifest
    assert result["decision"] == "object_detected"
    code, lines = _main(["detect", "--input", noise_only, "--sigma", 0.2, "--rule", "eq11"])
    assert code == 0
    assert json.loads(lines[1])["decision"] == "no_object"


def test_detect_error_exit(tmp_path, capsys):
    code, _ = _main(["detect", "--input", tmp_path / "absent.csv", "--sigma", 0.2])
    assert code == 1
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    code, _ = _main(["detect", "--input", tmp_path / "bad.csv", "--sigma", 0.2])
    assert code == 1
    assert "line 2" in capsys.readouterr().err


def test_detect_manual_theta_and_report(noisy_square, tmp_path):
    out = tmp_path / "report.json"
    code, _ = _main(["detect", "--input", noisy_square, "--sigma", 0.2, "--theta", 0.6, "--phi", 30, "--out", out])
    doc = json.loads(out.read_text())
    assert doc["theta"] == 0.6 and doc["phi"] == 30
    assert doc["threshold"]["rule"] == "manual"
    assert code == (2 if doc["detected"] else 0)
    assert doc["manifest"]["config_echo"]["theta"] == 0.6


def test_manifest_replay(noisy_square, tmp_path):
    out = tmp_path / "report.json"
    _main(["detect", "--input", noisy_square, "--sigma", 0.2, "--phi", 25, "--out", out])
    code, lines = _main(["detect", "--input", "ignored.csv", "--sigma", 9, "--manifest", out])
    assert code == 2
    first = json.loads(out.read_text())
    replay = json.loads(lines[1])
    assert replay["phi"] == 25 and replay["theta"] == first["theta"]


def test_manifest_alone_supplies_required_flags(tmp_path):
    code, lines = _main(["crossings", "--p", 0.75, "--n", 12, "--trials", 100, "--seed", 3])
    saved = tmp_path / "run.json"
    saved.write_text(lines[0])
    code2, lines2 = _main(["crossings", "--manifest", saved])
    assert (code, lines[1:]) == (code2, lines2[1:])


def test_manifest_missing_settings(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"command": "tail", "config_echo": {"trials": 100}}))
    code, _ = _main(["tail", "--manifest", bad])
    assert code == 1
    assert "missing required settings: p, n" in capsys.readouterr().err


def test_simulate_table():
    code, lines = _main(["simulate", "--n", 40, "--sigma", 0.3, "--object", "square:12", "--trials", 100, "--phi", 5, "--phi", 20])
    assert code == 0
    assert lines[1].split("\t") == ["phi", "trials", "detections", "power", "ci_low", "ci_high"]
    assert [row.split("\t")[0] for row in lines[2:]] == ["5", "20"]


def test_simulate_bad_object():
    assert _main(["simulate", "--n", 40, "--sigma", 0.3, "--object", "circle:3", "--trials", 100])[0] == 1


def test_tail_table():
    code, lines = _main(["tail", "--p", 0.3, "--n", 31, "--trials", 500, "--max-size", 8, "--fit-min", 2, "--fit-max", 8, "--delimiter", ","])
    assert code == 0
    fit = json.loads(lines[1])
    assert fit["slope"] < 0
    assert lines[2] == "size,survival,stderr,screen_survival,screen_stderr"
    assert len(lines) == 3 + 8


def test_tail_supercritical_is_error():
    assert _main(["tail", "--p", 0.7, "--n", 11, "--trials", 100])[0] == 1


def test_crossings_and_calibrate():
    code, lines = _main(["crossings", "--p", 0.8, "--n", 12, "--trials", 100])
    assert code == 0 and json.loads(lines[1])["crossing_rate"] > 0.9
    code, lines = _main(["calibrate", "--n", 50, "--sigma", 0.2, "--alpha", 0.2, "--trials", 100])
    assert code == 0 and json.loads(lines[1])["phi"] >= 1


def test_subprocess_entry_point(noisy_square):
    proc = run_cli(["detect", "--input", noisy_square, "--sigma", 0.2])
    assert proc.returncode == 2
    assert json.loads(proc.stdout.splitlines()[0])["command"] == "detect"


def test_crossings_output_independent_of_workers():
    args = ["crossings", "--p", 0.7, "--n", 16, "--trials", 120, "--seed", 4]
    a = run_cli(args, workers=1)
    b = run_cli(args, workers=3)
    assert a.returncode == b.returncode == 0
    assert strip_clock(a.stdout) == strip_clock(b.stdout)
