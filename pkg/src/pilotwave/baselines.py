"""Classical comparators: a one-line Hastings local update, uniform guessing and a
single-spin-flip Metropolis annealer.

Every routine has a scalar form returning one bitstring and a ``*_batch`` form
returning a ``(K, n)`` uint8 array; the scalar form is the batch form with K=1, so
the two agree draw for draw under the same generator.

The Hastings force is ``F = 2 J v + h`` which points up the energy gradient, so a
negative step ``c`` minimizes. Experiments use ``HASTINGS_C = -0.3``.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from . import kernels
from .problems import IsingModel, energies
from .sampler import bits_to_str

HASTINGS_C = -0.3
ANNEAL_SWEEPS = 200
ANNEAL_BETAS = (0.1, 5.0)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _to_bits(v: np.ndarray) -> np.ndarray:
    # sign(0) counts as +1, i.e. bit 0
    return (v < 0).astype(np.uint8)


def hastings_step(model: IsingModel, v: np.ndarray, c: float) -> np.ndarray:
    """One update ``v + c (2 J v + h)`` for a vector or a ``(K, n)`` stack."""
    return v + c * (2.0 * v @ model.J + model.h)


def hastings_batch(model: IsingModel, K: int, steps: int = 1, c: float = HASTINGS_C, rng=None) -> np.ndarray:
    if steps < 1:
        raise ValueError("steps must be at least 1")
    g = _generator(rng)
    v = 1.0 - 2.0 * g.integers(0, 2, size=(K, model.n))
    for _ in range(steps):
        v = hastings_step(model, v, c)
    return _to_bits(v)


def hastings(model: IsingModel, steps: int = 1, c: float = HASTINGS_C, rng=None) -> str:
    return bits_to_str(hastings_batch(model, 1, steps, c, rng)[0])


def uniform_batch(n: int, K: int, rng=None) -> np.ndarray:
    return _generator(rng).integers(0, 2, size=(K, n), dtype=np.uint8)


def uniform_sample(n: int, rng=None) -> str:
    return bits_to_str(uniform_batch(n, 1, rng)[0])


def geometric_schedule(sweeps: int, beta0: float = ANNEAL_BETAS[0], beta1: float = ANNEAL_BETAS[1]) -> np.ndarray:
    if sweeps < 1:
        raise ValueError("sweeps must be at least 1")
    if sweeps == 1:
        return np.array([beta1], dtype=float)
    return np.geomspace(beta0, beta1, sweeps)


def anneal_batch(model: IsingModel, K: int, sweeps: int = ANNEAL_SWEEPS, beta_schedule=None,
                 rng=None, init=None) -> np.ndarray:
    """``K`` independent Metropolis runs from uniform random starts, or from ``init`` bits.

    Sweeps visit spins in index order; ``beta_schedule`` holds one inverse
    temperature per sweep and defaults to a geometric ramp from 0.1 to 5.
    """
    betas = geometric_schedule(sweeps) if beta_schedule is None else np.asarray(beta_schedule, dtype=float)
    if betas.ndim != 1 or len(betas) < 1:
        raise ValueError("need at least one sweep")
    if np.any(np.diff(betas) < 0):
        raise ValueError("beta schedule must be nondecreasing")
    g = _generator(rng)
    if init is None:
        spins = (1 - 2 * g.integers(0, 2, size=(K, model.n))).astype(np.int8)
    else:
        spins = (1 - 2 * np.asarray(init, dtype=np.int8)).reshape(K, model.n)
    seeds = g.integers(0, 2**63, size=K, dtype=np.uint64)
    indptr, indices, data = model.csr()
    kernels.metropolis(indptr, indices, data, np.ascontiguousarray(model.h), spins, betas, seeds)
    return (spins < 0).astype(np.uint8)


def metropolis_anneal(model: IsingModel, sweeps: int = ANNEAL_SWEEPS, beta_schedule=None, rng=None) -> str:
    return bits_to_str(anneal_batch(model, 1, sweeps, beta_schedule, rng)[0])


def flip_delta(model: IsingModel, bits, k: int) -> float:
    """Energy change from flipping spin ``k``, from the local field only."""
    s = 1.0 - 2.0 * np.asarray([int(b) for b in bits], dtype=float)
    return float(-2.0 * s[k] * (2.0 * model.J[k] @ s + model.h[k]))


def best_of_batch(generator, model: IsingModel, batch_size: int = 100):
    """Lowest-energy draw among ``batch_size`` samples; the first one wins ties.

    ``generator`` is a zero-argument callable or an iterator yielding bitstrings.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    draw: Callable = generator if callable(generator) else iter(generator).__next__
    batch = [draw() for _ in range(batch_size)]
    arr = np.array([[int(ch) for ch in b] for b in batch], dtype=np.uint8).reshape(batch_size, model.n)
    e = energies(model, arr)
    i = int(np.argmin(e))
    return batch[i], float(e[i])


def best_of_batches(model: IsingModel, bits: np.ndarray, batch_size: int = 100):
    """Split ``(R * batch_size, n)`` draws into consecutive batches; best energy and index per batch."""
    bits = np.asarray(bits)
    if batch_size < 1 or len(bits) % batch_size:
        raise ValueError("sample count must be a positive multiple of batch_size")
    e = energies(model, bits).reshape(-1, batch_size)
    idx = np.argmin(e, axis=1)
    return e[np.arange(len(e)), idx], idx

