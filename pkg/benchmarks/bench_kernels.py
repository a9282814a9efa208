"""Benchmark the numba assembly kernels against the pure-numpy fallback.

The two backends share the same entry points in ndlod.kernels; which one is
active is decided at import time by NDLOD_NUMBA.  The operator matrix and
quadrature-load kernels are the hot loops of the solver; the sparse
factorizations downstream are unaffected by the choice.

Run: python benchmarks/bench_kernels.py [--fine-exp 7] [--repeats 5]
"""

import argparse
import time

import numpy as np

from ndlod import CoeffSet, MeshHierarchy
from ndlod import kernels
from ndlod.fespace import VectorFESpace


def element_data(fine_exp: int):
    mesh = MeshHierarchy(fine_exp + 1).levels[fine_exp]
    space = VectorFESpace(mesh)
    coeffs = CoeffSet.multiscale(seed=1, eps_exp=min(5, fine_exp))
    A, b = coeffs.eval_at_many(mesh.centroids)
    cA = np.ascontiguousarray(np.stack([A[:, 0, 0], A[:, 0, 1], A[:, 1, 1]], axis=1))
    cb = np.ascontiguousarray(b)
    pts = kernels.quad_points(mesh.vertices[mesh.triangles], kernels.QUAD7_BARY)
    fq = np.cos(np.pi * pts[:, :, 0]) * pts[:, :, 1] ** 3
    return mesh, space, cA, cb, fq


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--fine-exp", type=int, default=7)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    mesh, space, cA, cb, fq = element_data(args.fine_exp)
    grads, areas = mesh.grads, mesh.areas
    print(f"mesh 2^-{args.fine_exp}: {mesh.n_triangles} elements, "
          f"{space.ndof} dofs")

    variants = [("numpy", kernels._element_a_numpy, kernels._element_load_numpy)]
    if kernels._use_numba:
        def a_numba(g, ar, a, b, s):
            return kernels._element_a_numba(g, ar, a, b, s)

        def load_numba(g, ar, a, b, f):
            return kernels._element_load_numba(g, ar, a, b, f,
                                               kernels.QUAD7_BARY, kernels.QUAD7_W)

        a_numba(grads[:8], areas[:8], cA[:8], cb[:8], 1.0)   # warm the JIT
        load_numba(grads[:8], areas[:8], cA[:8], cb[:8], fq[:8])
        variants.append(("numba", a_numba, load_numba))
    else:
        print("numba backend disabled (NDLOD_NUMBA=0) -- benchmarking numpy only")

    results = {}
    for name, a_fn, load_fn in variants:
        ta = timeit(lambda: a_fn(grads, areas, cA, cb, 1.0), args.repeats)
        tl = timeit(lambda: load_fn(grads, areas, cA, cb, fq), args.repeats)
        results[name] = (ta, tl)
        print(f"{name:>6}: element matrices {ta * 1e3:8.2f} ms   "
              f"quadrature loads {tl * 1e3:8.2f} ms")
    if len(results) == 2:
        sa = results["numpy"][0] / results["numba"][0]
        sl = results["numpy"][1] / results["numba"][1]
        print(f"speedup numba vs numpy: element matrices {sa:.2f}x, loads {sl:.2f}x")

    ref_a = kernels._element_a_numpy(grads, areas, cA, cb, 1.0)
    got_a = kernels.element_a(grads, areas, cA, cb, 1.0)
    print(f"backend agreement (max |diff|): {np.abs(ref_a - got_a).max():.2e}")


if __name__ == "__main__":
    main()
