import json
import subprocess
import sys

import numpy as np
import pytest

from kmd.cli import main
from kmd.errors import InputFormatError, InvalidClassCount, KmdError
from kmd.estimator import LabeledDataset
from kmd.graph import PointSet
from kmd.io import emit_distance_csv, emit_points_csv, ingest_distance_csv, ingest_points_csv


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_ingest_points(tmp_path):
    p = _write(tmp_path / "a.csv", "x,label,y\n0,a,1\n2,b,3\n4,a,5\n")
    data = ingest_points_csv(p)
    assert data.points.coords.tolist() == [[0, 1], [2, 3], [4, 5]]
    assert list(data.labels) == [0, 1, 0]
    assert list(data.classes) == ["a", "b"]


def test_integer_labels_parsed(tmp_path):
    data = ingest_points_csv(_write(tmp_path / "a.csv", "label,x\n2,0\n10,1\n"))
    assert list(data.classes) == [2, 10]


@pytest.mark.parametrize("body,needle", [
    ("x,y\n1,2\n", "label"),
    ("label,x\na,1\nb,nan\n", "row 2"),
    ("label,x\na,1\nb,oops\n", "row 2"),
    ("label,x\na,1\nb\n", "row 2"),
    ("", "empty"),
])
def test_ingest_points_errors(tmp_path, body, needle):
    with pytest.raises(InputFormatError, match=needle):
        ingest_points_csv(_write(tmp_path / "a.csv", body))


def test_single_class_rejected(tmp_path):
    with pytest.raises(InvalidClassCount):
        ingest_points_csv(_write(tmp_path / "a.csv", "label,x\na,1\na,2\n"))


def test_distance_ingest_and_errors(tmp_path):
    m = _write(tmp_path / "d.csv", "0,1,2\n1,0,1\n2,1,0\n")
    lab = _write(tmp_path / "l.csv", "label\nu\nv\nu\n")
    data = ingest_distance_csv(m, lab)
    assert data.n == 3 and not data.points.is_euclidean
    bad = _write(tmp_path / "bad.csv", "0,1,2\n1.5,0,1\n2,1,0\n")
    with pytest.raises(KmdError):
        ingest_distance_csv(bad, lab)
    short = _write(tmp_path / "s.csv", "u\nv\n")
    with pytest.raises(InputFormatError):
        ingest_distance_csv(m, short)


def _random_dataset(rng, n=25):
    return LabeledDataset(PointSet.euclidean(rng.standard_normal((n, 3))), np.arange(n) % 3, (1, 2, 3))


def test_points_roundtrip(tmp_path, rng):
    data = _random_dataset(rng)
    emit_points_csv(data, str(tmp_path / "p.csv"))
    back = ingest_points_csv(str(tmp_path / "p.csv"))
    assert np.array_equal(back.points.coords, data.points.coords)
    assert np.array_equal(back.labels, data.labels)


def test_distance_roundtrip(tmp_path, rng):
    data = _random_dataset(rng)
    emit_distance_csv(data, str(tmp_path / "d.csv"), str(tmp_path / "l.csv"))
    back = ingest_distance_csv(str(tmp_path / "d.csv"), str(tmp_path / "l.csv"))
    assert np.array_equal(back.points.dense_distances(), data.points.dense_distances())
    assert np.array_equal(back.labels, data.labels)


@pytest.fixture
def separated_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = np.vstack([rng.standard_normal((50, 2)), rng.standard_normal((50, 2)) + 10.0])
    data = LabeledDataset(PointSet.euclidean(x), np.repeat([0, 1], 50), (0, 1))
    path = str(tmp_path / "sep.csv")
    emit_points_csv(data, path)
    return path


def test_cli_test_separated(separated_csv, tmp_path, capsys):
    out = str(tmp_path / "r.json")
    assert main(["test", separated_csv, "--k", "15", "--perms", "500", "--output", out]) == 0
    line = capsys.readouterr().out.strip()
    assert "eta_hat=1 " in line
    assert "p_permutation=0.00199601" in line
    report = json.load(open(out))
    assert report["schema_version"] == 1
    assert report["kernel"] == [[1.0, 0.0], [0.0, 1.0]]


def test_cli_estimate_uniform_shift(tmp_path, capsys):
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.random(500), rng.random(500) + 0.5])[:, None]
    path = str(tmp_path / "u.csv")
    emit_points_csv(LabeledDataset(PointSet.euclidean(x), np.repeat([0, 1], 500), ("p", "q")), path)
    out = str(tmp_path / "e.json")
    assert main(["estimate", "--points", path, "--output", out, "--dump-graph", str(tmp_path / "g.json")]) == 0
    val = float(capsys.readouterr().out.strip().split("=")[1])
    assert abs(val - 0.5) < 0.1
    rep = json.load(open(out))
    assert rep["label_map"] == {"p": 0, "q": 1}
    assert "out_neighbors" in json.load(open(tmp_path / "g.json")) or json.load(open(tmp_path / "g.json"))


def test_cli_distances_match_points(separated_csv, tmp_path, capsys):
    data = ingest_points_csv(separated_csv)
    emit_distance_csv(data, str(tmp_path / "d.csv"), str(tmp_path / "l.csv"))
    main(["estimate", separated_csv, "--k", "3"])
    a = capsys.readouterr().out
    main(["estimate", "--distances", str(tmp_path / "d.csv"), "--labels", str(tmp_path / "l.csv"), "--k", "3"])
    assert capsys.readouterr().out == a


def test_cli_error_exit_codes(tmp_path, capsys):
    assert main(["estimate", str(tmp_path / "missing.csv")]) == 2
    bad = _write(tmp_path / "b.csv", "label,x\na,1\nb,inf\n")
    assert main(["test", bad]) == 2
    err = capsys.readouterr().err
    assert "row 2" in err
    assert main(["simulate", "power", "--scenario", "nope", "--reps", "1"]) == 2


def test_cli_population(capsys):
    assert main(["population-eta", "--uniform-shift", "0.5,1"]) == 0
    vals = [float(v) for v in capsys.readouterr().out.strip().split("=")[1].split(",")]
    assert vals == pytest.approx([0.5, 1.0], abs=1e-8)


def test_cli_population_model(tmp_path, capsys):
    model = _write(tmp_path / "m.json", json.dumps({"probs": [[1, 0], [0, 1]]}))
    assert main(["population-eta", "--model", model]) == 0
    assert capsys.readouterr().out.strip() == "eta=1"


def test_cli_constants(tmp_path, capsys):
    out = str(tmp_path / "c.csv")
    assert main(["constants", "--k", "1", "--d", "1", "--reps", "300", "--m", "3", "--output", out]) == 0
    line = capsys.readouterr().out
    assert line.startswith("g1=1 ") and "sigma_sq=" in line
    assert open(out).readline().startswith("kind")


def test_cli_simulate_writes_files(tmp_path, capsys):
    stem = str(tmp_path / "pw")
    args = ["simulate", "power", "--scenario", "normal-location", "--grid", "delta=0,2",
            "--sizes", "20,20,20", "--reps", "5", "--perms", "19", "--k", "2", "--output", stem]
    assert main(args) == 0
    assert "rows=2" in capsys.readouterr().out
    man = json.load(open(stem + ".json"))
    assert man["config"]["reps"] == 5
    assert open(stem + ".csv").read().count("\n") == 3


def test_cli_simulate_threshold_negative_grid(tmp_path, capsys):
    args = ["simulate", "threshold", "--param", "d=2", "--pairs", "40,20", "--b-grid=-0.5,-0.1",
            "--k-grid", "1", "--reps", "3", "--output", str(tmp_path / "th")]
    assert main(args) == 0
    assert "rows=2" in capsys.readouterr().out


def test_seed_env_variable(separated_csv, monkeypatch, capsys):
    monkeypatch.setenv("KMD_SEED", "17")
    main(["test", separated_csv, "--perms", "99", "--k", "2"])
    a = capsys.readouterr().out
    main(["test", separated_csv, "--perms", "99", "--k", "2", "--seed", "17"])
    assert capsys.readouterr().out == a


def test_module_entry_point(separated_csv):
    res = subprocess.run([sys.executable, "-m", "kmd", "estimate", separated_csv], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("eta_hat=")
