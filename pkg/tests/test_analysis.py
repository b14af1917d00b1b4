import numpy as np
import pytest

from pilotwave import analysis as A
from pilotwave import baselines as B
from pilotwave.problems import IsingModel, ProblemGraph, energies, exhaustive_ground_state, gaussian_ising, grid


def _all_states(n):
    return ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def _boltzmann(model, beta, K, seed):
    states = _all_states(model.n)
    e = energies(model, states)
    p = np.exp(-beta * (e - e.min()))
    p /= p.sum()
    return states[np.random.default_rng(seed).choice(len(p), size=K, p=p)]


def test_histogram_normalization():
    vals = np.random.default_rng(0).normal(size=12345)
    h = A.energy_histogram(vals, bins=37)
    assert h.counts.sum() == h.total == 12345
    assert abs(h.normalized.sum() - 1) <= 1e-12
    lines = h.to_csv().splitlines()
    assert lines[0] == "lo,hi,count,fraction" and len(lines) == 38
    with pytest.raises(ValueError):
        A.EnergyHistogram(np.array([0.0, 1.0]), np.array([3]), 4)


def test_fit_beta_recovers_boltzmann():
    m = gaussian_ising(grid(2, 5), 0)
    fit = A.fit_beta(_boltzmann(m, 0.8, 10**6, 1), m)
    assert fit.beta == pytest.approx(0.8, abs=0.05)
    assert fit.n_levels >= 5 and fit.window[0] <= fit.window[1]


@pytest.mark.parametrize("beta", [0.2, 0.5, 1.0])
def test_fit_beta_across_seeds(beta):
    for seed in range(5):
        m = gaussian_ising(grid(2, 5), seed)
        assert A.fit_beta(_boltzmann(m, beta, 10**6, seed), m).beta == pytest.approx(beta, abs=0.05)


def test_fit_beta_uniform_is_flat():
    m = gaussian_ising(grid(2, 5), 3)
    fit = A.fit_beta(B.uniform_batch(10, 10**6, rng=2), m)
    assert abs(fit.beta) <= 0.02


def test_fit_beta_accepts_strings_and_rejects_degenerate_input():
    m = gaussian_ising(grid(2, 5), 3)
    bits = _boltzmann(m, 0.2, 20000, 4)
    strs = ["".join(map(str, r)) for r in bits]
    assert A.fit_beta(strs, m).beta == A.fit_beta(bits, m).beta
    with pytest.raises(A.InsufficientDistinctStates):
        A.fit_beta(np.zeros((100, 10), dtype=np.uint8), m)
    with pytest.raises(A.InsufficientDistinctStates):
        A.fit_beta([], m)
    with pytest.raises(ValueError):
        A.fit_beta(bits, m, window_quantile=0.7)


def _gs_model():
    m = gaussian_ising(grid(2, 2), 5)
    return m, exhaustive_ground_state(m)


def test_gs_all_ground_state_stream():
    m, (gs, e0) = _gs_model()
    stream = iter([gs] * 50)
    est = A.gs_probability(stream, e0, m)
    assert est.estimate == 1.0 and est.hits == 10 and est.samples_used == 10 and not est.truncated


def test_gs_uniform_stream_n4():
    m, (gs, e0) = _gs_model()
    assert (np.abs(energies(m, _all_states(4)) - e0) < 1e-9).sum() == 1
    p = 1 / 16
    rng = np.random.default_rng(6)

    def chunks(size):
        while True:
            yield B.uniform_batch(4, size, rng)

    est = A.gs_probability(chunks(1000), e0, m)
    assert abs(est.estimate - p) <= 3 * p * np.sqrt((1 - p) / 9)
    est = A.gs_probability(chunks(1000), e0, m, min_hits=2000)
    assert abs(est.estimate - p) <= 3 * p * np.sqrt((1 - p) / 1999)


def test_gs_estimator_unbiased_on_bernoulli_streams():
    p = 0.05
    rng = np.random.default_rng(7)
    one = IsingModel(ProblemGraph(1, (), "custom"), [], [1.0])  # bit 1 is the ground state

    def stream():
        while True:
            yield (rng.random((256, 1)) < p).astype(np.uint8)

    ests = np.array([A.gs_probability(stream(), -1.0, one).estimate for _ in range(1000)])
    assert abs(ests.mean() - p) <= 3 * ests.std(ddof=1) / np.sqrt(len(ests))


def test_gs_cap_truncation():
    m, (gs, e0) = _gs_model()
    other = "1111" if gs != "1111" else "0000"
    est = A.gs_probability(iter([other] * 30 + [gs] * 5), e0, m, cap=20)
    assert est.truncated and est.samples_used == 20 and est.hits == 0 and est.estimate == 0.0
    est = A.gs_probability(iter([gs, other, gs]), e0, m)
    assert est.truncated and est.hits == 2 and est.estimate == pytest.approx(2 / 3)


def test_parse_algorithm():
    assert A.parse_algorithm("qaoa:p=2:noisy") == A.Algorithm("qaoa", p=2, noisy=True)
    assert A.parse_algorithm("hastings:steps=3").name == "hastings:steps=3"
    assert A.parse_algorithm("anneal").name == "anneal:sweeps=200"
    assert A.parse_algorithm("uniform").name == "uniform"
    for bad in ("sa", "qaoa:depth=2", "qaoa:p="):
        with pytest.raises(ValueError):
            A.parse_algorithm(bad)


def test_compare_anneal_beats_uniform_on_100_qubits():
    m = gaussian_ising(grid(10, 10), 1)
    res = A.compare_experiment(m, ["uniform", "anneal:sweeps=50"], repetitions=20, batch=100, seed=3)
    assert res["anneal:sweeps=50"].mean() < res["uniform"].mean()
    rows = {r["algorithm"]: r for r in A.compare_table(res)}
    assert rows["uniform"]["repetitions"] == 20
    assert isinstance(rows["uniform"]["se"], float)
    assert A.ks_statistic(res["uniform"], res["anneal:sweeps=50"]) == 1.0
    csv = A.best_energy_csv(res).splitlines()
    assert csv[0] == "algorithm,repetition,best_energy" and len(csv) == 41


def test_compare_is_seeded():
    m = gaussian_ising(grid(3, 3), 2)
    a = A.compare_experiment(m, ["qaoa:p=1", "hastings:steps=1"], repetitions=30, seed=9)
    b = A.compare_experiment(m, ["qaoa:p=1", "hastings:steps=1"], repetitions=30, seed=9)
    for k in a:
        assert np.array_equal(a[k], b[k])


def test_timing_small_grid_is_fast():
    rows = A.timing_sweep(["grid"], [4], instances=3)
    assert rows[0]["n"] == 4 and rows[0]["mean_s"] < 1.0
    csv = A.rows_to_csv(rows).splitlines()
    assert csv[0].startswith("topology,size,n,edges")


@pytest.mark.slow
def test_timing_grid_not_slower_than_king():
    rows = A.timing_sweep(["grid", "king"], [25], instances=3)
    t = {r["topology"]: r["mean_s"] for r in rows}
    assert t["grid"] <= t["king"]
