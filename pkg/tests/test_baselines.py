import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pilotwave import baselines as B
from pilotwave import oracle as O
from pilotwave.problems import (
    IsingModel,
    ProblemGraph,
    energies,
    energy,
    exhaustive_ground_state,
    gaussian_ising,
    grid,
)


def _pair_model():
    return IsingModel(ProblemGraph(2, ((0, 1),), "custom"), [0.5], [0.0, 0.0])


def _all_states(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def test_hastings_single_step_example():
    m = _pair_model()
    v1 = B.hastings_step(m, np.array([1.0, -1.0]), 0.3)
    assert v1 == pytest.approx([0.7, -0.7])
    assert "".join("1" if x < 0 else "0" for x in v1) == "01"


def test_hastings_sign_of_zero_is_plus():
    m = IsingModel(ProblemGraph(2, ((0, 1),), "custom"), [0.5], [0.0, 0.0])
    # v=(1,1): F=(1,1), c=-1 drives both entries to exactly zero
    v = B.hastings_step(m, np.array([[1.0, 1.0]]), -1.0)
    assert (v == 0).all()
    assert B._to_bits(v).tolist() == [[0, 0]]


def test_hastings_without_couplings_is_uniform():
    m = IsingModel(ProblemGraph(6, (), "custom"), [], np.zeros(6))
    bits = B.hastings_batch(m, 60_000, rng=1)
    assert np.abs(bits.mean(axis=0) - 0.5).max() <= 3 * np.sqrt(0.25 / 60_000)
    assert B.hastings(m, rng=3) == B.hastings(m, rng=3)
    with pytest.raises(ValueError):
        B.hastings_batch(m, 1, steps=0)


def test_hastings_beats_uniform_on_100_qubit_grid():
    m = gaussian_ising(grid(10, 10), 0)
    reps = 4000
    h, _ = B.best_of_batches(m, B.hastings_batch(m, reps * 100, rng=1), 100)
    u, _ = B.best_of_batches(m, B.uniform_batch(m.n, reps * 100, rng=2), 100)
    assert h.mean() < u.mean()


def test_hastings_locality():
    g = grid(5, 5)
    m = gaussian_ising(g, 3)
    dist = dict(nx.all_pairs_shortest_path_length(g.to_networkx()))
    rng = np.random.default_rng(0)
    for steps in (1, 2, 3):
        v0 = 1.0 - 2.0 * rng.integers(0, 2, size=m.n)
        for far in range(m.n):
            w0 = v0.copy()
            w0[far] = -w0[far]
            a, b = v0.copy(), w0.copy()
            for _ in range(steps):
                a, b = B.hastings_step(m, a, -0.3), B.hastings_step(m, b, -0.3)
            for i in range(m.n):
                if dist[i][far] > steps:
                    assert a[i] == b[i]


def test_uniform_examples():
    bits = B.uniform_batch(1, 10**6, rng=4)
    assert abs(bits.mean() - 0.5) <= 3 * np.sqrt(0.25 / 10**6)
    assert B.uniform_sample(12, rng=5) == B.uniform_sample(12, rng=5)
    assert B.uniform_sample(0, rng=5) == ""


def test_anneal_reaches_chain_ground_state():
    chain = IsingModel(grid(1, 12), -np.ones(11), np.zeros(12))
    gs, e0 = exhaustive_ground_state(chain)
    e = energies(chain, B.anneal_batch(chain, 1000, 200, rng=6))
    assert np.mean(np.abs(e - e0) < 1e-9) >= 0.99


def test_one_sweep_at_infinite_temperature_is_uniform():
    m = gaussian_ising(grid(2, 2), 0)
    bits = B.anneal_batch(m, 32_000, beta_schedule=[0.0], rng=7)
    counts = np.bincount(bits @ (1 << np.arange(3, -1, -1)), minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_schedule_validation():
    m = _pair_model()
    with pytest.raises(ValueError):
        B.anneal_batch(m, 2, beta_schedule=[1.0, 0.5])
    with pytest.raises(ValueError):
        B.geometric_schedule(0)
    s = B.geometric_schedule(200)
    assert s[0] == pytest.approx(0.1) and s[-1] == pytest.approx(5.0)


def test_detailed_balance_three_qubits():
    m = gaussian_ising(ProblemGraph(3, ((0, 1), (1, 2), (0, 2)), "custom"), 8)
    # at beta 0.3 the deepest well (dE ~ 7.4) is left every ~10 sweeps, so the
    # chains mix well within the burn-in
    beta = 0.3
    rng = np.random.default_rng(9)
    # 2000 chains, 100 burn-in sweeps, then the state after each of 167 sweeps:
    # about 1e6 recorded single-spin steps
    bits = B.anneal_batch(m, 2000, beta_schedule=np.full(100, beta), rng=rng)
    seen = []
    for _ in range(167):
        bits = B.anneal_batch(m, 2000, beta_schedule=[beta], rng=rng, init=bits)
        seen.append(bits)
    e = energies(m, _all_states(3))
    target = np.exp(-beta * (e - e.min()))
    target /= target.sum()
    assert O.tvd(O.empirical_distribution(np.concatenate(seen), 3), target) <= 0.05


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_incremental_delta_matches_recomputed(seed, n):
    rng = np.random.default_rng(seed)
    pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < 0.6]
    m = gaussian_ising(ProblemGraph(n, tuple(pairs), "custom"), seed)
    x = rng.integers(0, 2, size=n).astype(np.uint8)
    k = int(rng.integers(0, n))
    y = x.copy()
    y[k] ^= 1
    assert B.flip_delta(m, x, k) == pytest.approx(energy(m, y) - energy(m, x), abs=1e-10)


def test_best_of_batch_examples():
    m = _pair_model()
    assert B.best_of_batch(lambda: "10", m, 5) == ("10", -1.0)
    assert B.best_of_batch(iter(["00", "01", "10", "11"]), m, 4) == ("01", -1.0)
    rng = np.random.default_rng(10)
    wins = sum(B.best_of_batch(lambda: B.uniform_sample(2, rng), m, 100)[1] == -1 for _ in range(2000))
    assert wins >= 0.999 * 2000
    with pytest.raises(ValueError):
        B.best_of_batch(lambda: "00", m, 0)


def test_best_of_batches_matches_scalar_version():
    m = gaussian_ising(grid(3, 3), 1)
    bits = B.uniform_batch(9, 500, rng=11)
    best, idx = B.best_of_batches(m, bits, 50)
    for r in range(10):
        rows = ["".join(map(str, b)) for b in bits[r * 50:(r + 1) * 50]]
        s, e = B.best_of_batch(iter(rows), m, 50)
        assert e == pytest.approx(best[r]) and s == rows[idx[r]]
    with pytest.raises(ValueError):
        B.best_of_batches(m, bits[:7], 5)
