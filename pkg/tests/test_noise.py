import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilotwave import gates as G
from pilotwave import oracle as O
from pilotwave.circuit import Circuit, random_circuit
from pilotwave.noise import (
    ChannelEvent,
    GateEvent,
    KrausChannel,
    NoiseModel,
    NoisyCircuit,
    NonLSMChannel,
    NotSubmonomial,
    ParameterOutOfRange,
    amp_damp,
    apply_readout_error,
    depolarize1,
    depolarize2,
    dumps_noise_config,
    idle_channel,
    insert_noise,
    is_lsm,
    loads_noise_config,
    noisy_sample,
    noisy_sample_arrays,
    noisy_sample_reference,
    standard_model,
    phase_damp,
    propagate_x,
    same_shape,
    sample_kraus_index,
    step_networks,
)
from pilotwave.problems import gaussian_ising, grid
from pilotwave.qaoa import qaoa_circuit
from pilotwave.rng import StreamRNG, stream_seed
from pilotwave.sampler import sample_arrays

EYE = np.eye(2)


def _complete(ch):
    d = ch.operators[0].shape[0]
    return np.abs(sum(e.conj().T @ e for e in ch.operators) - np.eye(d)).max()


def test_channel_examples():
    assert _complete(amp_damp(0.1)) <= 1e-15
    assert len(depolarize1(0).operators) == 1
    assert np.allclose(depolarize1(0).operators[0], EYE)
    assert len(depolarize2(0.01).operators) == 16


@pytest.mark.parametrize("p", [0.0, 0.003, 0.2, 0.75, 1.0])
def test_standard_channels_complete(p):
    m = standard_model()
    for ch in (depolarize1(p), depolarize2(p), amp_damp(p), phase_damp(p),
               idle_channel(m.t_gate1, m.T1, m.T2), idle_channel(m.t_gate2, m.T1, m.T2)):
        assert _complete(ch) <= 1e-10


def test_parameter_checks():
    for bad in (-0.1, 1.5):
        with pytest.raises(ParameterOutOfRange):
            depolarize1(bad)
    with pytest.raises(ParameterOutOfRange):
        NoiseModel(T1=1.0, T2=3.0)
    with pytest.raises(ParameterOutOfRange):
        NoiseModel(t_gate1=0.0)
    with pytest.raises(ParameterOutOfRange):
        KrausChannel((0.5 * EYE,))


def test_idle_formula():
    t, T1, T2 = 80e-9, 100e-6, 50e-6
    gamma = 1 - math.exp(-t / T1)
    lam = 1 - math.exp(-2 * t * (1 / T2 - 1 / (2 * T1)))
    ch = idle_channel(t, T1, T2)
    rho1 = np.diag([0.0, 1.0]).astype(complex)
    out = sum(e @ rho1 @ e.conj().T for e in ch.operators)
    assert out[1, 1].real == pytest.approx(1 - gamma, abs=1e-15)
    plus = np.full((2, 2), 0.5, dtype=complex)
    out = sum(e @ plus @ e.conj().T for e in ch.operators)
    assert abs(out[0, 1]) == pytest.approx(0.5 * math.sqrt((1 - gamma) * (1 - lam)), abs=1e-15)


def test_is_lsm_examples():
    for ch in (depolarize1(0.1), depolarize2(0.1), amp_damp(0.3), phase_damp(0.4),
               KrausChannel((EYE,)), idle_channel(30e-9, 100e-6, 50e-6)):
        assert is_lsm(ch)
    assert not is_lsm(KrausChannel((G.H,)))
    assert not is_lsm(KrausChannel((G.controlled(G.X),)))


def test_insert_noise_examples():
    c = random_circuit(3, 10, np.random.default_rng(0))
    bare = insert_noise(c, NoiseModel())
    assert all(isinstance(e, GateEvent) for e in bare.events)
    assert [e.gate for e in bare.events] == list(c.gates)
    one = insert_noise(Circuit(2, [G.cnot(0, 1)]), NoiseModel(p2=0.01, T1=100e-6, T2=50e-6))
    kinds = [type(e).__name__ if isinstance(e, GateEvent) else e.channel.tag for e in one.events]
    assert kinds == ["GateEvent", "depolarize2", "idle", "idle"]
    assert [e.targets for e in one.events[2:]] == [(0,), (1,)]
    allq = insert_noise(Circuit(3, [G.h(0)]), NoiseModel(T1=1.0, T2=1.0, idle_all_qubits=True))
    assert [e.targets for e in allq.channel_events()] == [(0,), (1,), (2,)]


def test_kraus_index_probabilities():
    p = amp_damp(0.1).index_probabilities()
    assert p[:, 1] == pytest.approx([0.9, 0.1])
    assert p[:, 0] == pytest.approx([1.0, 0.0])
    assert depolarize1(0.06).index_probabilities()[:, 1] == pytest.approx([0.94, 0.02, 0.02, 0.02])
    draws = [sample_kraus_index(amp_damp(0.1), "1", StreamRNG(stream_seed(1, i))) for i in range(20000)]
    assert abs(np.mean(draws) - 0.1) <= 3 * math.sqrt(0.09 / 20000)
    assert all(sample_kraus_index(amp_damp(0.3), 0, StreamRNG(i)) == 0 for i in range(200))
    with pytest.raises(NotSubmonomial):
        sample_kraus_index(KrausChannel((G.H,)), "0", StreamRNG(0))


def test_propagate_x_examples():
    g = G.rzz(0.7, 0, 1)
    out = propagate_x("10", g)
    d = np.diag(g.matrix)
    assert np.allclose(np.diag(out.matrix), d[[2, 3, 0, 1]])
    assert out.is_diagonal
    assert propagate_x("00", g) is g
    assert np.allclose(propagate_x([1], G.z(0)).matrix, np.diag([-1, 1]))
    assert np.allclose(propagate_x("01", G.cnot(0, 1)).matrix, G.controlled(G.X))


def test_readout_error_examples():
    bits = "0110100"
    assert apply_readout_error(bits, 0.0, np.random.default_rng(0)) == bits
    assert apply_readout_error(bits, 1.0, np.random.default_rng(0)) == "1001011"
    flips = apply_readout_error(np.zeros(10**6, dtype=np.uint8), 0.05, np.random.default_rng(1).random(10**6))
    assert abs(flips.mean() - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / 10**6)


def test_noiseless_noisy_circuit_is_the_ideal_sampler():
    c = random_circuit(4, 20, np.random.default_rng(1))
    nz = insert_noise(c, NoiseModel())
    a = noisy_sample_arrays(nz, 2000, 3)
    b = sample_arrays(c, 2000, 3)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_pure_x_channel_is_frame_bookkeeping():
    nz = NoisyCircuit(1, [ChannelEvent(KrausChannel((G.X,), "flip"), (0,))])
    _, bits, calls = noisy_sample_arrays(nz, 500, 4)
    assert (bits == 1).all() and calls.max() == 0
    rec = noisy_sample_reference(nz, StreamRNG(3))
    assert rec.bits == "1" and rec.oracle_calls == 0


def test_non_lsm_channel_rejected():
    nz = NoisyCircuit(1, [GateEvent(G.h(0)), ChannelEvent(KrausChannel((G.H,), "had"), (0,))])
    with pytest.raises(NonLSMChannel):
        noisy_sample(nz, StreamRNG(0))


def test_amp_damp_oracle_on_one():
    nz = NoisyCircuit(1, [GateEvent(G.x(0)), ChannelEvent(amp_damp(0.3), (0,))])
    assert O.noisy_exact_distribution(nz) == pytest.approx([0.3, 0.7])
    _, bits, _ = noisy_sample_arrays(nz, 50_000, 6)
    assert abs(bits.mean() - 0.7) <= 3 * math.sqrt(0.21 / 50_000)


def _tvd_noisy(nz, K, seed):
    _, bits, _ = noisy_sample_arrays(nz, K, seed)
    return O.tvd(O.empirical_distribution(bits, nz.n_qubits), O.noisy_exact_distribution(nz))


def test_qaoa_2x2_standard_noise_matches_density_matrix():
    m = gaussian_ising(grid(2, 2), 0)
    nz = insert_noise(qaoa_circuit(m, 1), standard_model())
    assert _tvd_noisy(nz, 10**6, 1) <= 0.02


def test_heavier_noise_random_circuit_matches_density_matrix():
    # strong noise makes the frame and diagonal factors matter
    c = random_circuit(4, 25, np.random.default_rng(2), ["h", "rx", "rz", "rzz", "cnot", "fsim", "crx"])
    model = NoiseModel(p1=0.05, p2=0.1, p_readout=0.03, t_gate1=1.0, t_gate2=2.0, T1=10.0, T2=12.0)
    nz = insert_noise(c, model)
    assert _tvd_noisy(nz, 10**6, 2) <= 0.02


def test_channels_never_query_amplitudes():
    m = gaussian_ising(grid(2, 3), 1)
    c = qaoa_circuit(m, 2)
    nz = insert_noise(c, standard_model())
    for i in range(30):
        rec = noisy_sample_reference(nz, StreamRNG(stream_seed(8, i)))
        assert rec.channel_calls == 0
    _, _, calls = noisy_sample_arrays(nz, 300, 8)
    _, _, ideal = sample_arrays(c, 300, 8)
    assert np.array_equal(calls, ideal)


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("open_outputs", [True, False])
def test_shape_invariance_every_step(p, open_outputs):
    m = gaussian_ising(grid(2, 3), 3)
    nz = insert_noise(qaoa_circuit(m, p), standard_model())
    steps = 0
    for _, noisy_net, base_net in step_networks(nz, StreamRNG(17), open_outputs):
        assert same_shape(noisy_net, base_net)
        steps += 1
    assert steps == m.n * (p + 1)


def test_same_shape_detects_difference():
    from pilotwave.tensornet import build_network, fuse_vectors

    a = fuse_vectors(build_network(Circuit(2, [G.h(0), G.h(1), G.rzz(0.3, 0, 1)])))
    b = fuse_vectors(build_network(Circuit(2, [G.h(0), G.h(1)])))
    assert not same_shape(a, b)


def test_noise_config_round_trip():
    m = standard_model()
    assert loads_noise_config(dumps_noise_config(m)) == m
    text = "p1 = 0.001\np2=0.002 # comment\np_readout=0\nt_gate1=1e-8\nt_gate2=2e-8\nT1=1e-4\nT2=1e-4\n"
    assert loads_noise_config(text).p2 == 0.002
    with pytest.raises(ParameterOutOfRange):
        loads_noise_config("p1 = 0.1\n")
    with pytest.raises(ParameterOutOfRange):
        loads_noise_config(text + "gamma = 3\n")


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 12))
def test_vectorized_noisy_chain_equals_literal_chain(seed, n, depth):
    c = random_circuit(n, depth, np.random.default_rng(seed))
    model = NoiseModel(p1=0.2, p2=0.3, p_readout=0.1, t_gate1=1.0, t_gate2=1.0, T1=2.0, T2=3.0)
    nz = insert_noise(c, model)
    for mode in ("open", "entries"):
        seeds, bits, calls = noisy_sample_arrays(nz, 6, seed, mode=mode)
        for s, b, k in zip(seeds, bits, calls):
            ref = noisy_sample_reference(nz, StreamRNG(int(s)))
            assert ref.bits == "".join(map(str, b)) and ref.oracle_calls == k


def test_noisy_oracle_trace_preserved():
    c = random_circuit(3, 15, np.random.default_rng(9))
    nz = insert_noise(c, NoiseModel(p1=0.1, p2=0.2, p_readout=0.2, T1=3.0, T2=4.0))
    p = O.noisy_exact_distribution(nz)
    assert abs(p.sum() - 1) <= 1e-9
    assert np.allclose(O.noisy_exact_distribution(insert_noise(c, NoiseModel())), O.exact_distribution(c))
