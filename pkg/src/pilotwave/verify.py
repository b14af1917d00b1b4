"""Quick end-to-end check of both samplers against the exact oracles."""

from __future__ import annotations

import math

import numpy as np

from . import noise as N
from . import oracle as O
from .circuit import circuit_stats, random_circuit
from .sampler import sample_arrays


def tvd_tolerance(n: int, shots: int) -> float:
    """Loose bound on the TVD expected from finite sampling alone, plus 0.01."""
    return 0.01 + math.sqrt((1 << n) / shots)


def run(circuits: int = 5, shots: int = 100_000, seed: int = 0, workers: int = 1, out=None) -> bool:
    rng = np.random.default_rng(seed)
    ok = True

    def report(name, passed, detail):
        nonlocal ok
        ok &= passed
        if out is not None:
            out.write(f"{'PASS' if passed else 'FAIL'} {name}: {detail}\n")

    for i in range(circuits):
        n = int(rng.integers(3, 8))
        c = random_circuit(n, int(rng.integers(10, 30)), rng)
        _, bits, calls = sample_arrays(c, shots, seed + i, workers)
        d = O.tvd(O.empirical_distribution(bits, n), O.exact_distribution(c))
        tol = tvd_tolerance(n, shots)
        budget = 2 * circuit_stats(c).qsize
        report(f"ideal[{i}] n={n} T={len(c)}", d <= tol and int(calls.max()) <= budget,
               f"tvd {d:.4f} (tol {tol:.4f}), max oracle calls {int(calls.max())} (budget {budget})")
    model = N.standard_model()
    for i in range(max(1, circuits // 2)):
        n = int(rng.integers(2, 5))
        c = random_circuit(n, int(rng.integers(6, 15)), rng, ["h", "rx", "rz", "rzz", "cnot", "crx"])
        noisy = N.insert_noise(c, model)
        _, bits, _ = N.noisy_sample_arrays(noisy, shots, seed + 1000 + i, workers)
        d = O.tvd(O.empirical_distribution(bits, n), O.noisy_exact_distribution(noisy))
        tol = tvd_tolerance(n, shots)
        report(f"noisy[{i}] n={n} T={len(c)}", d <= tol, f"tvd {d:.4f} (tol {tol:.4f})")
    return ok
