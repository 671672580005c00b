"""Timing comparison of the compiled and pure-python walk kernels.

Runs the same batch of corner-to-corner crossings through both backends
and prints a table with the speedup. The two must agree jump for jump,
so the comparison doubles as an equality check.

Usage: python benchmarks/bench_kernels.py [--level N] [--walks K]
"""

import argparse
import time

import numpy as np

import fractalrcm as fr
from fractalrcm import _kernels
from fractalrcm.streams import SeededStream


def batch(backend, field, n_walks, seed):
    g = field.graph
    indptr, indices, weights = _kernels.to_csr(g.n_vertices, g.edges, field.weights)
    nu = field.nu()
    hold = np.ones(g.n_vertices)
    mask = np.zeros(g.n_vertices, dtype=np.bool_)
    mask[g.boundary[1:]] = True
    start = int(g.boundary[0])
    stream = SeededStream(seed, "bench")
    out = np.empty((n_walks, 2))
    t0 = time.perf_counter()
    for i in range(n_walks):
        t, jumps, _, _ = _kernels.run_walk(
            indptr, indices, weights, nu, hold,
            stream.child(None, i).generator(), start,
            target_mask=mask, backend=backend)
        out[i] = (t, jumps)
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=4)
    ap.add_argument("--walks", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = fr.preset("sierpinski-gasket")
    g = fr.build_graph(spec, args.level)
    gen = SeededStream(args.seed, "bench-env").generator()
    w = (1 - gen.random(g.n_edges)) ** -2.0
    field = fr.ConductanceField(g, w)
    print(f"level {args.level}: {g.n_vertices} vertices, {g.n_edges} edges, "
          f"{args.walks} csrw crossings, pareto alpha = 0.5")

    batch("numba", field, 2, args.seed)  # compile before timing
    rows = []
    results = {}
    for backend in ("python", "numba"):
        dt, out = batch(backend, field, args.walks, args.seed)
        rows.append((backend, dt, args.walks / dt, out[:, 1].mean()))
        results[backend] = out

    same = np.array_equal(results["python"][:, 1], results["numba"][:, 1])
    print(f"{'backend':<8} {'seconds':>9} {'walks/s':>9} {'mean jumps':>11}")
    for backend, dt, rate, jumps in rows:
        print(f"{backend:<8} {dt:>9.3f} {rate:>9.1f} {jumps:>11.1f}")
    speedup = rows[0][1] / rows[1][1]
    print(f"speedup: {speedup:.1f}x, jump-for-jump equal: {same}")


if __name__ == "__main__":
    main()
