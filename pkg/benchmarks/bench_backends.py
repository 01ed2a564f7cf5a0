"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_backends.py [--n 20000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from kmd._backend import available
from kmd.graph import PointSet, build_knn


def cases(n, k, seed):
    rng = np.random.default_rng(seed)
    g = build_knn(PointSet.euclidean(rng.standard_normal((n, 5))), k)
    labels = rng.integers(0, 3, n).astype(np.int64)
    kmat = np.eye(3)
    perms = np.stack([rng.permutation(labels) for _ in range(64)])
    m = min(n, 2000)
    x = rng.standard_normal((m, 3))
    sq = np.einsum("ij,ij->i", x, x)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0))
    pts = rng.uniform(-6, 6, (4000, 2))
    pts = np.vstack([[0.0, 0.0], pts[np.argsort(np.einsum("ij,ij->i", pts, pts))]])
    return {
        "graph_term": lambda mod: mod.graph_term(g.indptr, g.indices, labels, kmat),
        "graph_terms_batch(64)": lambda mod: mod.graph_terms_batch(g.indptr, g.indices, perms, kmat),
        "graph_moments": lambda mod: mod.graph_moments(g.indptr, g.indices),
        f"prim_mst(n={m})": lambda mod: mod.prim_mst(dist),
        "knn_origin_counts": lambda mod: mod.knn_origin_counts(pts, 200, 1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    mods = available()
    print(f"n={args.n} k={args.k} backends={','.join(mods)}")
    print(f"{'kernel':<24}" + "".join(f"{name:>12}" for name in mods) + f"{'speedup':>10}")
    for name, fn in cases(args.n, args.k, args.seed).items():
        times = {b: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for b, mod in mods.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<24}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
