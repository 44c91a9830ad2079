"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Numba timings exclude the first (compiling) call.  Each pair of results is
compared before timing so a fast but wrong kernel cannot win.
"""
import argparse
import time

import numpy as np

from slabcover import _kernels as K
from slabcover.cover import GraphStack, antichain_to_graph, build_cover
from slabcover.measures import gen_cantor_product
from slabcover.poset import _sheared, snap_to_grid


def cases(scale):
    rng = np.random.default_rng(0)
    m = max(200, int(2000 * scale))
    X = rng.random((m, 2))
    order = np.lexsort((X[:, 0], X[:, 1]))
    Xs = np.ascontiguousarray(X[order])

    big = gen_cantor_product(1 / 3, 8 if scale >= 1 else 6)
    _, branks, _, _ = _sheared(big.points, 0)
    nr = int(branks.max()) + 1
    w = rng.random(len(branks))

    fam = build_cover(snap_to_grid(gen_cantor_product(1 / 3, 5), 243), 1)
    stack = fam.stack
    p = np.ascontiguousarray(rng.random(int(20000 * scale)))
    C = np.ascontiguousarray(np.sort(stack.evaluate(p[:, None]), axis=1))
    zj = np.ascontiguousarray(rng.random(len(p)))

    X3 = rng.random((int(400 * scale) + 50, 3))
    g3 = [antichain_to_graph(X3[i:i + 1], 1) for i in range(0, 40)]
    s3 = GraphStack(g3)
    P3 = np.ascontiguousarray(rng.random((int(5000 * scale), 2)))

    A = np.ascontiguousarray(rng.random((int(1500 * scale), 1)))
    v = np.ascontiguousarray(rng.random(len(A)) * 1e-3)

    return {
        "levels_dp": (Xs, 1),
        "levels_sheared": (branks, nr),
        "max_antichain_sheared": (branks, nr, w),
        "graphs_envelope": (stack.Q, stack.V, stack.L, stack.R, stack.offs, stack.lip, p),
        "graphs_brute": (s3.AP, s3.Av, s3.offs, s3.lip, P3),
        "separate_rows": (C, 1e-3),
        "collapse_rows": (C, zj, 1e-4),
        "max_lip_excess": (A[:, :], v),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-12)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    if not K.HAS_NUMBA:
        raise SystemExit("numba is disabled (SLABCOVER_DISABLE_NUMBA set?)")
    nb, npy = K.backend("numba"), K.backend("numpy")
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, a in cases(args.scale).items():
        r_nb = nb[name](*a)  # compile + reference
        r_np = npy[name](*a)
        if not _same(r_nb, r_np):
            raise SystemExit(f"{name}: backends disagree")
        t_nb = best_of(nb[name], a, args.repeat)
        t_np = best_of(npy[name], a, args.repeat)
        print(f"{name:<24}{t_nb:>12.4f}{t_np:>12.4f}{t_np / max(t_nb, 1e-9):>9.1f}x")


if __name__ == "__main__":
    main()
