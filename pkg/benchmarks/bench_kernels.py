"""Compiled vs pure-numpy kernels: wall time per call and speedup.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from pilotwave import _kernels_py as pure
from pilotwave.problems import gaussian_ising, grid

try:
    from pilotwave import _kernels as compiled
except ImportError:
    compiled = None


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    seeds = pure.stream_seeds(1, 0, 1_000_000)
    small = gaussian_ising(grid(4, 5), 0)
    big = gaussian_ising(grid(10, 10), 0)
    indptr, indices, data = big.csr()
    spins = np.ones((256, big.n), dtype=np.int8)
    chain_seeds = pure.stream_seeds(2, 0, 256)
    betas = np.geomspace(0.1, 5, 50)
    J = np.ascontiguousarray(small.J)

    yield "stream_seeds 1e6", lambda k: k.stream_seeds(7, 0, 1_000_000)
    yield "uniforms 1e6", lambda k: k.uniforms(seeds, 3)
    yield "ground_state_gray n=20", lambda k: k.ground_state_gray(J, small.h, 1e-12)
    yield "metropolis 256x100, 50 sweeps", \
        lambda k: k.metropolis(indptr, indices, data, big.h, spins.copy(), betas, chain_seeds)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':32s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s}")
    for name, call in cases():
        tc = best_time(lambda: call(compiled), args.repeat)
        tp = best_time(lambda: call(pure), args.repeat)
        print(f"{name:32s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
