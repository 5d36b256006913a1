"""Time the numba and numpy element kernels on the same random batch.

    python benchmarks/bench_kernels.py [n_elements]
"""

import sys
import time

import numpy as np

from lsshell.fem import director_frames
from lsshell.kernels import _numba, _numpy


def batch(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, 3, 3))
    Vn = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])[:, None, :].repeat(3, axis=1)
    Vn /= np.linalg.norm(Vn, axis=2, keepdims=True)
    V1, V2 = director_frames(Vn.reshape(-1, 3))
    ue = rng.normal(size=(n, 15)) * 1e-3
    return X, Vn, V1.reshape(n, 3, 3), V2.reshape(n, 3, 3), ue


def best_of(fn, repeat=3):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(n=5000):
    X, Vn, V1, V2, ue = batch(n)
    mat = (0.01, 1e5, 0.3, 5 / 6)
    # warm up the JIT outside the timed region
    _numba.element_stiffness(X[:2], Vn[:2], V1[:2], V2[:2], *mat, True)
    _numba.offset_energy_derivatives(X[:2], Vn[:2], V1[:2], V2[:2], ue[:2], *mat, True, 5e-6)
    rows = []
    for name, mod in (("numpy", _numpy), ("numba", _numba)):
        tk = best_of(lambda: mod.element_stiffness(X, Vn, V1, V2, *mat, True))
        ts = best_of(lambda: mod.offset_energy_derivatives(X, Vn, V1, V2, ue, *mat, True, 5e-6), repeat=1)
        rows.append((name, tk, ts))
    print(f"{n} elements")
    print(f"{'backend':8s} {'stiffness [s]':>14s} {'offset dK [s]':>14s}")
    for name, tk, ts in rows:
        print(f"{name:8s} {tk:14.4f} {ts:14.4f}")
    print(f"speedup  {rows[0][1] / rows[1][1]:14.1f} {rows[0][2] / rows[1][2]:14.1f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5000)
