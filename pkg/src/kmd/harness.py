"""Synthetic scenarios and experiment drivers.

Every replicate draws its data from ``default_rng([seed, cell, rep])`` where
``cell`` indexes the grid point, so results do not depend on the order in
which cells run or on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import UnknownScenario
from .estimator import LabeledDataset, TestConfig, eta_hat, kmd_test
from .graph import PointSet, build_graph
from .kernels import LabelKernel, make_discrete

SCENARIOS = (
    "normal-location",
    "normal-scale",
    "t-location",
    "u-shape-scale",
    "s-shape-rotation",
    "spherical",
    "uniform-shift",
    "gaussian-scale-threshold",
)

_U_MEANS = np.array([[0.0, 0.0], [-3.0, 1.0], [3.0, 1.0]])
_U_COVS = np.array([
    [[2.0, 0.0], [0.0, 1 / 8]],
    [[0.5, -1 / 3], [-1 / 3, 0.5]],
    [[0.5, 1 / 3], [1 / 3, 0.5]],
])
_U_WEIGHTS = np.array([0.5, 0.25, 0.25])

_R38 = math.sqrt(3 / 8)
_S_MEANS = np.array([[-4.5, -0.5], [0.0, -0.5], [4.5, 1.0]])
_S_COVS = np.array([
    [[1.5, -_R38], [-_R38, 1.0]],
    [[1.5, _R38], [_R38, 1.0]],
    [[1.5, -_R38], [-_R38, 1.0]],
])
_S_WEIGHTS = np.full(3, 1 / 3)


@dataclass
class ScenarioSpec:
    """A data-generating setting.

    Parameters by scenario (defaults in brackets):

    - ``normal-location``: ``d`` [2], ``delta`` [0.2]; class means are
      ``linspace(0, delta, M) * 1``.
    - ``normal-scale``: ``d`` [2], ``top`` [2.0]; class variances are
      ``linspace(1, top, M)``.
    - ``t-location``: ``d`` [16], ``delta`` [0.0], ``df`` [1]; class 0 has
      noncentral t coordinates, the rest central.
    - ``u-shape-scale``: ``scale`` [1.0]; the last class is scaled.
    - ``s-shape-rotation``: ``theta`` [0.0]; the last class is rotated.
    - ``spherical``: ``d`` [2], ``alpha`` [0.0]; radial Uniform,
      Beta(1-alpha, 1+alpha), Beta(1+alpha, 1-alpha).
    - ``uniform-shift``: ``d`` [1], ``eta`` [0.5] in {1, 0.5, 0.1},
      ``variant`` ["a"] (two classes) or "b" (three classes).
    - ``gaussian-scale-threshold``: ``d`` [5], ``b`` [-0.25]; class sds are
      3 and ``3 + 2 n^b`` with ``n`` the total size.

    ``sizes`` gives the per-class sample sizes; its length is the number of
    classes where the scenario allows a choice.
    """

    scenario: str
    params: dict = field(default_factory=dict)
    sizes: tuple = (100, 100, 100)
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise UnknownScenario(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError("need at least two non-empty classes")
        self.params = dict(self.params)

    def get(self, name, default):
        return self.params.get(name, default)

    def with_params(self, **updates) -> "ScenarioSpec":
        return ScenarioSpec(self.scenario, {**self.params, **updates}, self.sizes, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _mixture(rng, n, means, covs, weights):
    comp = rng.choice(len(weights), size=n, p=weights)
    chol = np.linalg.cholesky(covs)
    z = rng.standard_normal((n, means.shape[1]))
    return means[comp] + np.einsum("nij,nj->ni", chol[comp], z)


def _sphere(rng, n, d):
    u = rng.standard_normal((n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _uniform_shift_classes(eta, variant, d):
    """Offsets (as multiples of unit vectors) of unit-cube classes."""
    e = np.eye(max(d, 2))[:, :d]
    zero = np.zeros(d)
    table = {
        (1.0, "a"): [zero, e[0]],
        (1.0, "b"): [zero, e[0], e[1]],
        (0.5, "a"): [zero, 0.5 * e[0]],
        (0.5, "b"): [zero, zero, e[0]],
        (0.1, "a"): [zero, 0.1 * e[0]],
        (0.1, "b"): [zero, zero, 0.2 * e[0]],
    }
    key = (float(eta), variant)
    if key not in table:
        raise ValueError(f"uniform-shift supports eta in {{1, 0.5, 0.1}} and variant a/b, got {key}")
    if d == 1 and variant == "b" and eta == 1.0:
        raise ValueError("the eta=1 three-class setup needs d >= 2")
    return table[key]


def generate(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> LabeledDataset:
    """Draw one labeled sample; classes are stacked in order."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    sizes = spec.sizes
    m = len(sizes)
    sc = spec.scenario
    blocks = []
    if sc == "normal-location":
        d = int(spec.get("d", 2))
        for n_i, mu in zip(sizes, np.linspace(0.0, spec.get("delta", 0.2), m)):
            blocks.append(mu + rng.standard_normal((n_i, d)))
    elif sc == "normal-scale":
        d = int(spec.get("d", 2))
        for n_i, var in zip(sizes, np.linspace(1.0, spec.get("top", 2.0), m)):
            blocks.append(math.sqrt(var) * rng.standard_normal((n_i, d)))
    elif sc == "t-location":
        d, df = int(spec.get("d", 16)), float(spec.get("df", 1))
        for j, n_i in enumerate(sizes):
            shift = spec.get("delta", 0.0) if j == 0 else 0.0
            z = rng.standard_normal((n_i, d)) + shift
            blocks.append(z / np.sqrt(rng.chisquare(df, (n_i, d)) / df))
    elif sc == "u-shape-scale":
        for j, n_i in enumerate(sizes):
            y = _mixture(rng, n_i, _U_MEANS, _U_COVS, _U_WEIGHTS)
            blocks.append(y * spec.get("scale", 1.0) if j == m - 1 else y)
    elif sc == "s-shape-rotation":
        th = spec.get("theta", 0.0)
        rot = np.array([[math.cos(th), math.sin(th)], [-math.sin(th), math.cos(th)]])
        for j, n_i in enumerate(sizes):
            y = _mixture(rng, n_i, _S_MEANS, _S_COVS, _S_WEIGHTS)
            blocks.append(y @ rot.T if j == m - 1 else y)
    elif sc == "spherical":
        d, a = int(spec.get("d", 2)), float(spec.get("alpha", 0.0))
        if not 0.0 <= a < 1.0 or m != 3:
            raise ValueError("spherical needs 0 <= alpha < 1 and three classes")
        shapes = [(1.0, 1.0), (1.0 - a, 1.0 + a), (1.0 + a, 1.0 - a)]
        for n_i, (p, q) in zip(sizes, shapes):
            blocks.append(rng.beta(p, q, n_i)[:, None] * _sphere(rng, n_i, d))
    elif sc == "uniform-shift":
        d = int(spec.get("d", 1))
        offsets = _uniform_shift_classes(spec.get("eta", 0.5), spec.get("variant", "a"), d)
        if len(offsets) != m:
            raise ValueError(f"this uniform-shift setup has {len(offsets)} classes, sizes give {m}")
        for n_i, off in zip(sizes, offsets):
            blocks.append(rng.random((n_i, d)) + off)
    elif sc == "gaussian-scale-threshold":
        d, b = int(spec.get("d", 5)), float(spec.get("b", -0.25))
        if m != 2:
            raise ValueError("gaussian-scale-threshold has two classes")
        sds = (3.0, 3.0 + 2.0 * sum(sizes) ** b)
        for n_i, sd in zip(sizes, sds):
            blocks.append(sd * rng.standard_normal((n_i, d)))
    labels = np.repeat(np.arange(m), sizes)
    return LabeledDataset(PointSet.euclidean(np.vstack(blocks)), labels, tuple(range(1, m + 1)))


@dataclass
class StudyResult:
    """Rows of a study grid plus the configuration that produced them."""

    name: str
    config: dict
    rows: list
    runtime: float = 0.0
    extras: dict = field(default_factory=dict)

    def column(self, key: str) -> list:
        return [r[key] for r in self.rows]

    def to_csv(self, path: str) -> None:
        keys = list(dict.fromkeys(k for r in self.rows for k in r))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: json.dumps(v) if isinstance(v, (dict, list)) else v for k, v in r.items()})

    def manifest(self) -> dict:
        return {"name": self.name, "config": self.config, "runtime_seconds": self.runtime, "n_rows": len(self.rows)}

    def write(self, stem: str) -> tuple[str, str]:
        """Write ``stem.csv`` and ``stem.json``; return both paths."""
        os.makedirs(os.path.dirname(os.path.abspath(stem)), exist_ok=True)
        self.to_csv(stem + ".csv")
        with open(stem + ".json", "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, default=_json_default)
        return stem + ".csv", stem + ".json"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, LabelKernel):
        return obj.matrix.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def rep_rng(seed: int, cell: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, cell, rep])


def rep_seed(seed: int, cell: int, rep: int) -> int:
    """Integer seed for the test's own streams (permutations, ties)."""
    return int(np.random.SeedSequence([seed, cell, rep]).generate_state(1)[0])


def _map(fn, tasks, n_jobs):
    if n_jobs is None or n_jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, tasks))


def _reject_task(task):
    spec, cfg, seed, cell, reps, alpha, method = task
    hits = 0
    for r in range(reps):
        data = generate(spec, rep_rng(seed, cell, r))
        c = TestConfig(cfg.graph, cfg.k, cfg.kernel, cfg.n_perms if method == "permutation" else 0, rep_seed(seed, cell, r))
        rep = kmd_test(data, c)
        p = rep.p_permutation if method == "permutation" else rep.p_asymptotic
        hits += p is not None and p < alpha
    return hits


def run_power_study(
    specs,
    config: TestConfig | None = None,
    reps: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    method: str = "permutation",
    n_jobs: int = 1,
    name: str = "power",
) -> StudyResult:
    """Rejection rate of the KMD test at each scenario in ``specs``.

    ``method`` is ``"permutation"`` (``config.n_perms`` permutations) or
    ``"asymptotic"``.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    if method not in ("permutation", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    cfg = config or TestConfig()
    t0 = time.perf_counter()
    tasks = [(s, cfg, seed, cell, reps, alpha, method) for cell, s in enumerate(specs)]
    hits = _map(_reject_task, tasks, n_jobs)
    rows = []
    for s, h in zip(specs, hits):
        p = h / reps
        rows.append({
            "scenario": s.scenario, **s.params, "sizes": list(s.sizes),
            "power": p, "se": math.sqrt(p * (1 - p) / reps), "reps": reps,
        })
    conf = {
        "specs": [s.to_dict() for s in specs], "graph": cfg.graph, "k": cfg.k,
        "kernel": cfg.kernel, "n_perms": cfg.n_perms, "reps": reps, "seed": seed,
        "alpha": alpha, "method": method,
    }
    return StudyResult(name, conf, rows, time.perf_counter() - t0)


def predicted_threshold(d: int, pi1: float) -> float:
    """Exponent ``b`` at which power is predicted to switch on.

    ``-1/4`` up to dimension 8; above that ``-1/2 + 2/d`` when the smaller
    scale class dominates and ``-2/d`` otherwise.
    """
    if d <= 8:
        return -0.25
    return -0.5 + 2.0 / d if pi1 > 0.5 else -2.0 / d


def run_threshold_sweep(
    d: int,
    size_pairs=((4000, 2000), (2000, 4000)),
    b_grid=tuple(np.round(np.arange(-0.5, 0.001, 0.05), 3)),
    k_list=(1, 2, 3),
    reps: int = 200,
    seed: int = 0,
    alpha: float = 0.05,
    n_jobs: int = 1,
) -> StudyResult:
    """Power of the asymptotic test against ``N(0, 9 I)`` vs ``N(0, (3 + 2 n^b)^2 I)``."""
    specs, meta = [], []
    for pair in size_pairs:
        for k in k_list:
            for b in b_grid:
                if not -1.0 < b < 0.0:
                    raise ValueError("b must lie in (-1, 0)")
                specs.append((ScenarioSpec("gaussian-scale-threshold", {"d": d, "b": float(b)}, pair), k))
                meta.append((pair, k, float(b)))
    t0 = time.perf_counter()
    tasks = [
        (s, TestConfig("knn", k, None, 0), seed, cell, reps, alpha, "asymptotic")
        for cell, (s, k) in enumerate(specs)
    ]
    hits = _map(_reject_task, tasks, n_jobs)
    rows = []
    for (pair, k, b), h in zip(meta, hits):
        pi1 = pair[0] / sum(pair)
        p = h / reps
        rows.append({
            "d": d, "n1": pair[0], "n2": pair[1], "pi1": pi1, "k": k, "b": b,
            "power": p, "se": math.sqrt(p * (1 - p) / reps), "reps": reps,
            "predicted_b": predicted_threshold(d, pi1),
        })
    conf = {"d": d, "size_pairs": [list(p) for p in size_pairs], "b_grid": [float(b) for b in b_grid],
            "k_list": list(k_list), "reps": reps, "seed": seed, "alpha": alpha}
    return StudyResult("threshold", conf, rows, time.perf_counter() - t0)


def crossing_point(xs, ys, level: float = 0.5) -> float | None:
    """First ``x`` where the piecewise-linear curve reaches ``level``."""
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        if y0 < level <= y1:
            return x0 + (level - y0) * (x1 - x0) / (y1 - y0)
    return xs[0] if ys and ys[0] >= level else None


def run_k_study(spec: ScenarioSpec, k_grid, reps: int, seed: int = 0, eta_true: float | None = None,
                kernel: LabelKernel | None = None) -> StudyResult:
    """Mean and MSE of the 1-sample estimate across ``k``.

    Every ``k`` is evaluated on the same replicate samples. ``eta_true``
    defaults to the ``eta`` parameter of uniform-shift specs.
    """
    n = sum(spec.sizes)
    if any(k < 1 or k >= n for k in k_grid):
        raise ValueError(f"k values must lie in [1, {n - 1}]")
    if eta_true is None:
        eta_true = spec.get("eta", None)
    kern = kernel or make_discrete(len(spec.sizes))
    t0 = time.perf_counter()
    est = np.empty((len(k_grid), reps))
    for r in range(reps):
        data = generate(spec, rep_rng(seed, 0, r))
        s = rep_seed(seed, 0, r)
        for j, k in enumerate(k_grid):
            g = build_graph(data.points, "knn", k=int(k), seed=s)
            est[j, r] = eta_hat(g, data.labels, kern).eta_hat
    rows = []
    for j, k in enumerate(k_grid):
        row = {"k": int(k), "mean_eta_hat": float(est[j].mean()), "sd_eta_hat": float(est[j].std(ddof=1)) if reps > 1 else 0.0, "reps": reps}
        if eta_true is not None:
            row["mse"] = float(np.mean((est[j] - eta_true) ** 2))
            row["bias"] = row["mean_eta_hat"] - eta_true
        rows.append(row)
    conf = {"spec": spec.to_dict(), "k_grid": [int(k) for k in k_grid], "reps": reps, "seed": seed, "eta_true": eta_true}
    return StudyResult("k_study", conf, rows, time.perf_counter() - t0, {"estimates": est})


def null_z_scores(n_i: int, d: int, reps: int, seed: int = 0, m: int = 3, k: int = 1, cell: int = 0) -> np.ndarray:
    """Permutation-standardized estimates on ``m`` identical Gaussian samples."""
    spec = ScenarioSpec("normal-location", {"d": d, "delta": 0.0}, (n_i,) * m)
    z = np.empty(reps)
    for r in range(reps):
        data = generate(spec, rep_rng(seed, cell, r))
        rep = kmd_test(data, TestConfig("knn", k, None, 0, rep_seed(seed, cell, r)))
        z[r] = rep.z
    return z


def run_null_clt(n_grid, d: int = 2, reps: int = 2000, seed: int = 0, m: int = 3, k: int = 1,
                 alpha: float = 0.05, bins: int = 40) -> StudyResult:
    """Null distribution of the permutation z-score for each per-class size."""
    if reps < 100:
        raise ValueError("reps must be at least 100")
    t0 = time.perf_counter()
    rows, zs = [], {}
    edges = np.linspace(-4, 4, bins + 1)
    crit = stats.norm.isf(alpha)
    for cell, n_i in enumerate(n_grid):
        z = null_z_scores(n_i, d, reps, seed, m, k, cell)
        zs[int(n_i)] = z
        q = np.quantile(z, [0.025, 0.05, 0.5, 0.95, 0.975])
        rows.append({
            "n_i": int(n_i), "d": d, "k": k, "reps": reps,
            "ks": float(stats.kstest(z, "norm").statistic),
            "mean_z": float(z.mean()), "sd_z": float(z.std(ddof=1)),
            "reject_rate": float(np.mean(z > crit)),
            **{f"q{t}": float(v) for t, v in zip(("025", "05", "50", "95", "975"), q)},
            "hist": np.histogram(z, edges)[0].tolist(),
        })
    conf = {"n_grid": [int(n) for n in n_grid], "d": d, "reps": reps, "seed": seed, "m": m, "k": k,
            "alpha": alpha, "hist_edges": edges.tolist()}
    return StudyResult("null_clt", conf, rows, time.perf_counter() - t0, {"z": zs})
