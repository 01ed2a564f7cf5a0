import json
import math

import numpy as np
import pytest

from kmd.errors import UnknownScenario
from kmd.estimator import TestConfig
from kmd.harness import (
    SCENARIOS,
    ScenarioSpec,
    StudyResult,
    crossing_point,
    generate,
    null_z_scores,
    predicted_threshold,
    rep_rng,
    run_k_study,
    run_null_clt,
    run_power_study,
    run_threshold_sweep,
)


def _class_blocks(data):
    return [data.points.coords[data.labels == c] for c in np.unique(data.labels)]


def test_normal_location_class_means():
    spec = ScenarioSpec("normal-location", {"d": 2, "delta": 0.2}, (20000,) * 3)
    means = [b.mean() for b in _class_blocks(generate(spec, np.random.default_rng(0)))]
    assert means == pytest.approx([0.0, 0.1, 0.2], abs=0.02)


def test_normal_scale_class_variances():
    spec = ScenarioSpec("normal-scale", {"d": 3, "top": 2.0}, (20000,) * 3)
    var = [b.var() for b in _class_blocks(generate(spec, np.random.default_rng(1)))]
    assert var == pytest.approx([1.0, 1.5, 2.0], rel=0.03)


def test_uniform_shift_offsets():
    spec = ScenarioSpec("uniform-shift", {"eta": 0.5, "d": 1}, (5000, 5000))
    a, b = _class_blocks(generate(spec, np.random.default_rng(2)))
    assert a.min() >= 0 and a.max() <= 1
    assert b.min() >= 0.5 and b.max() <= 1.5


def test_uniform_shift_rejects_unknown_setup():
    with pytest.raises(ValueError):
        generate(ScenarioSpec("uniform-shift", {"eta": 0.3}, (10, 10)))


def test_spherical_alpha_zero_is_null():
    spec = ScenarioSpec("spherical", {"d": 3, "alpha": 0.0}, (8000,) * 3)
    radii = [np.linalg.norm(b, axis=1) for b in _class_blocks(generate(spec, np.random.default_rng(3)))]
    for r in radii:
        assert r.mean() == pytest.approx(0.5, abs=0.015)
        assert r.max() <= 1.0


def test_rotation_by_zero_keeps_distribution():
    spec = ScenarioSpec("s-shape-rotation", {"theta": 0.0}, (5000, 5000))
    a, b = _class_blocks(generate(spec, np.random.default_rng(4)))
    assert a.mean(axis=0) == pytest.approx(b.mean(axis=0), abs=0.1)


def test_threshold_scenario_sds():
    spec = ScenarioSpec("gaussian-scale-threshold", {"d": 2, "b": -0.5}, (20000, 20000))
    a, b = _class_blocks(generate(spec, np.random.default_rng(5)))
    assert a.std() == pytest.approx(3.0, rel=0.02)
    assert b.std() == pytest.approx(3.0 + 2.0 / math.sqrt(40000), rel=0.02)


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        ScenarioSpec("nope")


@pytest.mark.parametrize("name", SCENARIOS)
def test_every_scenario_generates(name):
    sizes = (30, 30) if name in ("uniform-shift", "gaussian-scale-threshold", "u-shape-scale", "s-shape-rotation") else (30,) * 3
    data = generate(ScenarioSpec(name, {}, sizes), np.random.default_rng(6))
    assert data.points.n == sum(sizes)
    assert np.all(np.isfinite(data.points.coords))


def test_same_seed_same_data():
    spec = ScenarioSpec("t-location", {"delta": 0.5}, (40, 40, 40))
    a = generate(spec, rep_rng(7, 1, 2)).points.coords
    b = generate(spec, rep_rng(7, 1, 2)).points.coords
    assert np.array_equal(a, b)


def test_power_study_deterministic_and_bounded():
    specs = [ScenarioSpec("normal-location", {"delta": dl}, (40,) * 3) for dl in (0.0, 1.5)]
    cfg = TestConfig("knn", 3, None, 49)
    a = run_power_study(specs, cfg, reps=20, seed=3)
    b = run_power_study(specs, cfg, reps=20, seed=3)
    assert a.rows == b.rows
    powers = a.column("power")
    assert all(0.0 <= p <= 1.0 for p in powers)
    assert powers[1] > powers[0]
    assert powers[1] >= 0.9


def test_power_study_parallel_matches_serial():
    specs = [ScenarioSpec("normal-location", {"delta": dl}, (30,) * 3) for dl in (0.0, 0.8)]
    cfg = TestConfig("knn", 2, None, 0)
    a = run_power_study(specs, cfg, reps=10, seed=1, method="asymptotic")
    b = run_power_study(specs, cfg, reps=10, seed=1, method="asymptotic", n_jobs=2)
    assert a.rows == b.rows


def test_k_study_complete_graph_and_decay():
    spec = ScenarioSpec("uniform-shift", {"eta": 1.0}, (30, 30))
    res = run_k_study(spec, [1, 5, 20, 59], reps=10, seed=2)
    means = res.column("mean_eta_hat")
    # the two unit intervals touch, so 1-NN is almost but not always pure
    assert means[0] > 0.95
    assert means[-1] == 0.0
    assert all(x >= y for x, y in zip(means, means[1:]))
    assert res.rows[0]["mse"] < res.rows[1]["mse"]


def test_k_study_rejects_bad_k():
    with pytest.raises(ValueError):
        run_k_study(ScenarioSpec("uniform-shift", {}, (5, 5)), [10], reps=1)


def test_null_z_scores_centered():
    z = null_z_scores(40, 2, 300, seed=4)
    assert abs(z.mean()) < 3 / math.sqrt(300)
    assert 0.8 < z.std() < 1.2


def test_null_clt_rows():
    res = run_null_clt([30], reps=100, seed=5)
    row = res.rows[0]
    assert sum(row["hist"]) <= 100
    assert 0.0 <= row["reject_rate"] <= 1.0
    assert res.extras["z"][30].shape == (100,)


def test_threshold_sweep_rows():
    res = run_threshold_sweep(2, size_pairs=((60, 30),), b_grid=(-0.5, -0.1), k_list=(1,), reps=5)
    assert [r["b"] for r in res.rows] == [-0.5, -0.1]
    assert all(r["predicted_b"] == -0.25 for r in res.rows)


def test_predicted_threshold():
    assert predicted_threshold(5, 2 / 3) == -0.25
    assert predicted_threshold(10, 1 / 3) == pytest.approx(-0.2)
    assert predicted_threshold(10, 2 / 3) == pytest.approx(-0.3)


def test_crossing_point():
    assert crossing_point([0, 1, 2], [0.0, 0.4, 0.8]) == pytest.approx(1.25)
    assert crossing_point([0, 1], [0.0, 0.1]) is None
    assert crossing_point([0, 1], [0.7, 0.9]) == 0


def test_study_result_write(tmp_path):
    res = StudyResult("demo", {"a": np.int64(3)}, [{"x": 1, "h": [1, 2]}, {"x": 2, "h": [3]}], 0.5)
    csv_path, json_path = res.write(str(tmp_path / "sub" / "out"))
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "x,h"
    assert len(lines) == 3
    man = json.load(open(json_path))
    assert man["config"]["a"] == 3 and man["n_rows"] == 2


def test_null_point_level():
    spec = ScenarioSpec("spherical", {"alpha": 0.0, "d": 3}, (50, 50, 50))
    res = run_power_study([spec], TestConfig("knn", 15, None, 500), reps=1000, seed=11)
    assert 0.03 <= res.rows[0]["power"] <= 0.07


def test_power_monotone_along_grid():
    specs = [ScenarioSpec("u-shape-scale", {"scale": s}, (60, 60, 60)) for s in (1.0, 1.2, 1.4)]
    powers = run_power_study(specs, TestConfig("knn", 18, None, 199), reps=60, seed=12).column("power")
    se = [math.sqrt(max(p * (1 - p), 0.01) / 60) for p in powers]
    assert all(b >= a - 2 * math.hypot(sa, sb) for a, b, sa, sb in zip(powers, powers[1:], se, se[1:]))
    assert powers[-1] > powers[0]
