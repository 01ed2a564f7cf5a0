"""Command-line front end.

Exit status is 0 on success, 2 for invalid input (including missing files)
and 1 for anything unexpected. The default seed is read from ``KMD_SEED``
and falls back to :data:`DEFAULT_SEED`.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback

import numpy as np

from . import __version__
from .asymptotics import cached_null_constants, compare_gtilde_convergence, mc_null_constants
from .errors import KmdError
from .estimator import SCHEMA_VERSION, TestConfig, eta_hat, kmd_test
from .graph import build_graph
from .harness import (
    ScenarioSpec,
    run_k_study,
    run_null_clt,
    run_power_study,
    run_threshold_sweep,
)
from .io import ingest_distance_csv, ingest_points_csv
from .kernels import from_matrix, make_discrete, parse_kernel
from .population import (
    Density1D,
    eta_exact_finite,
    eta_gaussian_location_curve,
    eta_gaussian_scale_curve,
    eta_two_sample_1d,
    model_from_json,
)

DEFAULT_SEED = 0
SEED_ENV = "KMD_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise KmdError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)


def _load_data(args):
    if args.points:
        return ingest_points_csv(args.points)
    if args.distances:
        if not args.labels:
            raise KmdError("--distances needs --labels")
        return ingest_distance_csv(args.distances, args.labels)
    raise KmdError("give --points FILE or --distances FILE --labels FILE")


def _add_data_args(p):
    src = p.add_argument_group("input")
    src.add_argument("points_pos", nargs="?", metavar="POINTS", help="points CSV (same as --points)")
    src.add_argument("--points", help="CSV with a header, a 'label' column and coordinate columns")
    src.add_argument("--distances", help="n x n distance matrix CSV without header")
    src.add_argument("--labels", help="labels file for --distances, one per line")
    p.add_argument("--graph", choices=("knn", "knn-undirected", "mst"), default="knn")
    p.add_argument("--k", type=int, help="neighbors per point")
    p.add_argument("--kernel", default="discrete", help="discrete | weighted:w1,...,wM | file:PATH")
    p.add_argument("--seed", type=int, help=f"seed for ties and permutations (default ${SEED_ENV} or {DEFAULT_SEED})")
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--dump-graph", metavar="PATH", help="write the graph as JSON")


def cmd_test(args) -> int:
    data = _load_data(args)
    kernel = parse_kernel(args.kernel, data.m)
    cfg = TestConfig(args.graph, args.k, kernel, args.perms, args.seed)
    report = kmd_test(data, cfg)
    if args.dump_graph:
        _write_json(build_graph(data.points, args.graph, k=report.k, seed=args.seed).to_dict(), args.dump_graph)
    if args.output:
        out = report.to_dict()
        out["kernel"] = kernel.matrix.tolist()
        _write_json(out, args.output)
    print(report.summary_line())
    return 0


def cmd_estimate(args) -> int:
    data = _load_data(args)
    kernel = parse_kernel(args.kernel, data.m)
    k = args.k if args.k is not None else 1
    g = build_graph(data.points, args.graph, k=k, seed=args.seed)
    est = eta_hat(g, data.labels, kernel)
    if args.dump_graph:
        _write_json(g.to_dict(), args.dump_graph)
    if args.output:
        _write_json({
            "schema_version": SCHEMA_VERSION, "eta_hat": est.eta_hat, "numerator": est.numerator,
            "denominator": est.denominator, "n": data.n, "counts": data.counts.tolist(),
            "graph": args.graph, "k": g.k, "seed": args.seed,
            "label_map": {str(c): code for code, c in enumerate(data.classes)},
        }, args.output)
    print(f"eta_hat={est.eta_hat:.6g}")
    return 0


def cmd_population(args) -> int:
    if args.model:
        with open(args.model, encoding="utf-8") as fh:
            model, kmat = model_from_json(json.load(fh))
        kernel = from_matrix(kmat) if kmat is not None else make_discrete(model.probs.shape[0])
        values = [eta_exact_finite(model, kernel)]
    elif args.uniform_shift is not None:
        base = Density1D.uniform(0.0, 1.0)
        values = [eta_two_sample_1d(base, base.affine(1.0, s), args.pi1) for s in _floats(args.uniform_shift)]
    elif args.gaussian_location is not None:
        values = eta_gaussian_location_curve(_floats(args.gaussian_location), args.pi1)
    elif args.gaussian_scale is not None:
        values = eta_gaussian_scale_curve(_floats(args.gaussian_scale), args.pi1)
    else:
        raise KmdError("give --model, --uniform-shift, --gaussian-location or --gaussian-scale")
    if args.output:
        _write_json({"eta": values}, args.output)
    print("eta=" + ",".join(f"{v:.10g}" for v in values))
    return 0


def cmd_constants(args) -> int:
    graph = args.graph
    if args.cache:
        res = cached_null_constants(args.cache, graph, args.k, args.d, args.reps, args.seed)
    else:
        res = mc_null_constants(graph, args.k, args.d, args.reps, args.seed)
    if args.m:
        pi = _floats(args.pi) if args.pi else [1.0 / args.m] * args.m
        kernel = parse_kernel(args.kernel, args.m)
        res = res.with_kernel(kernel, pi)
    row = res.to_dict()
    if args.convergence:
        rows = compare_gtilde_convergence(args.d, args.k, _ints(args.convergence), args.conv_reps, args.seed, res)
    else:
        rows = [row]
    if args.output:
        _write_csv(rows, args.output)
    tail = f" sigma_sq={res.sigma_sq:.6g}" if res.sigma_sq is not None else ""
    print(f"g1={res.g1:.6g} g2={res.g2:.6g} g3={res.g3:.6g} se3={res.se3:.3g} reps={res.reps}{tail}")
    return 0


def _write_csv(rows, path):
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise KmdError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            out[key] = float(val)
        except ValueError:
            out[key] = val
    return out


def cmd_simulate(args) -> int:
    params = _parse_params(args.param)
    sizes = tuple(_ints(args.sizes)) if args.sizes else (100, 100, 100)
    n_jobs = args.threads
    if args.study == "power":
        if not args.scenario:
            raise KmdError("power study needs --scenario")
        base = ScenarioSpec(args.scenario, params, sizes, args.seed)
        specs = [base]
        if args.grid:
            key, _, vals = args.grid.partition("=")
            specs = [base.with_params(**{key: v}) for v in _floats(vals)]
        kernel = parse_kernel(args.kernel, len(sizes))
        cfg = TestConfig("knn" if args.graph is None else args.graph, args.k, kernel, args.perms)
        res = run_power_study(specs, cfg, args.reps, args.seed, method=args.method, n_jobs=n_jobs)
        col = "power"
    elif args.study == "threshold":
        pairs = [tuple(_ints(p)) for p in args.pairs.split(";")] if args.pairs else ((4000, 2000), (2000, 4000))
        b_grid = _floats(args.b_grid) if args.b_grid else [-0.5, -0.4, -0.3, -0.25, -0.2, -0.15, -0.1, -0.05]
        res = run_threshold_sweep(int(params.get("d", 5)), pairs, b_grid, _ints(args.k_grid or "1"), args.reps, args.seed, n_jobs=n_jobs)
        col = "power"
    elif args.study == "k-study":
        spec = ScenarioSpec(args.scenario or "uniform-shift", params, sizes, args.seed)
        res = run_k_study(spec, _ints(args.k_grid or "1,2,5,10"), args.reps, args.seed)
        col = "mean_eta_hat"
    elif args.study == "null-clt":
        res = run_null_clt(_ints(args.n_grid or "100"), int(params.get("d", 2)), args.reps, args.seed,
                           k=args.k if args.k is not None else 1)
        col = "ks"
    else:  # pragma: no cover - argparse restricts choices
        raise KmdError(f"unknown study {args.study}")
    if args.output:
        res.write(args.output)
    vals = ",".join(f"{v:.4g}" for v in res.column(col))
    print(f"study={args.study} rows={len(res.rows)} {col}={vals} runtime={res.runtime:.1f}s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmd", description="Kernel measure of multi-sample dissimilarity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker processes for simulations")

    p = sub.add_parser("test", parents=[common], help="estimate KMD and test equality of the class distributions")
    _add_data_args(p)
    p.add_argument("--perms", type=int, default=500, help="permutations (0 skips the permutation test)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("estimate", parents=[common], help="estimate KMD (k defaults to 1)")
    _add_data_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("population-eta", parents=[common], help="population KMD of a finite model or a 1-d family")
    p.add_argument("--model", help="JSON with probs, optional pi and kernel")
    p.add_argument("--uniform-shift", metavar="S1,S2", help="U[0,1] against U[s,1+s]")
    p.add_argument("--gaussian-location", metavar="L1,L2", help="N(0,1) against N(lam,1)")
    p.add_argument("--gaussian-scale", metavar="L1,L2", help="N(0,1) against N(0,1/lam^2)")
    p.add_argument("--pi1", type=float, default=0.5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_population)

    p = sub.add_parser("constants", parents=[common], help="Monte Carlo null constants g1, g2, g3")
    p.add_argument("--graph", choices=("knn", "knn-undirected", "mst"), default="knn")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--cache", help="JSON cache file")
    p.add_argument("--m", type=int, help="number of classes; adds a, b, c and sigma_sq")
    p.add_argument("--pi", help="class proportions (default uniform)")
    p.add_argument("--kernel", default="discrete")
    p.add_argument("--convergence", metavar="N1,N2", help="also tabulate sample functionals at these n")
    p.add_argument("--conv-reps", type=int, default=100)
    p.add_argument("--output", help="CSV output")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    p.add_argument("study", choices=("power", "threshold", "k-study", "null-clt"))
    p.add_argument("--scenario")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--grid", metavar="KEY=V1,V2", help="power study grid over one parameter")
    p.add_argument("--sizes", help="per-class sizes, e.g. 100,100,100")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--graph", choices=("knn", "knn-undirected", "mst"))
    p.add_argument("--k", type=int)
    p.add_argument("--kernel", default="discrete")
    p.add_argument("--perms", type=int, default=500)
    p.add_argument("--method", choices=("permutation", "asymptotic"), default="permutation")
    p.add_argument("--pairs", help="threshold sizes, e.g. '4000,2000;2000,4000'")
    p.add_argument("--b-grid")
    p.add_argument("--k-grid")
    p.add_argument("--n-grid")
    p.add_argument("--output", help="output stem; writes STEM.csv and STEM.json")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "seed", None) is None and hasattr(args, "seed"):
            args.seed = _default_seed()
        if getattr(args, "points_pos", None) and not args.points:
            args.points = args.points_pos
        return args.func(args)
    except (KmdError, OSError) as exc:
        print(f"kmd: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc(file=sys.stderr)
        print(f"kmd: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
