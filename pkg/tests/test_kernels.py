import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilotwave import _kernels_py as pure
from pilotwave import kernels
from pilotwave.problems import gaussian_ising, grid, king
from pilotwave.rng import MASK64, StreamRNG, stream_seed, stream_seeds, uniforms

compiled = pytest.importorskip("pilotwave._kernels")


def _splitmix(state):
    # textbook SplitMix64 step: returns (next state, output)
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def test_stream_seeds_are_splitmix_outputs():
    state, outs = 12345, []
    for _ in range(5):
        state, z = _splitmix(state)
        outs.append(z)
    assert stream_seeds(12345, 0, 5).tolist() == outs
    assert stream_seed(12345, 3) == outs[3]


def test_uniform_is_top_53_bits():
    seed = stream_seed(7, 0)
    state = seed
    for c in range(4):
        state, z = _splitmix(state)
        assert StreamRNG(seed).uniform_at(c) == (z >> 11) * 2.0**-53


def test_stream_rng_sequential_matches_random_access():
    r = StreamRNG(99)
    seq = [r.random() for _ in range(5)]
    assert seq == [StreamRNG(99).uniform_at(c) for c in range(5)]
    r2 = StreamRNG(99)
    assert r2.random(size=(5,)).tolist() == seq


def test_uniforms_are_uniform():
    u = uniforms(stream_seeds(1, 0, 200_000), 3)
    assert (u >= 0).all() and (u < 1).all()
    assert abs(u.mean() - 0.5) <= 3 * np.sqrt(1 / 12 / len(u))
    v = uniforms(stream_seeds(1, 0, 200_000), 4)
    assert abs(np.corrcoef(u, v)[0, 1]) <= 3 / np.sqrt(len(u))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 300), st.integers(0, 2**40))
def test_rng_backends_identical(master, start, count, counter):
    a = compiled.stream_seeds(master, start, count)
    b = pure.stream_seeds(master, start, count)
    assert np.array_equal(a, b)
    assert np.array_equal(compiled.uniforms(a, counter), pure.uniforms(b, counter))


@pytest.mark.parametrize("seed", range(6))
def test_ground_state_backends_identical(seed):
    m = gaussian_ising(king(3, 4) if seed % 2 else grid(3, 4), seed)
    args = (np.ascontiguousarray(m.J), m.h, 1e-12)
    ia, ea = compiled.ground_state_gray(*args)
    ib, eb = pure.ground_state_gray(*args)
    assert ia == ib and ea == pytest.approx(eb, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_metropolis_backends_identical(seed):
    m = gaussian_ising(grid(4, 5), seed)
    indptr, indices, data = m.csr()
    rng = np.random.default_rng(seed)
    spins = (1 - 2 * rng.integers(0, 2, size=(64, m.n))).astype(np.int8)
    seeds = rng.integers(0, 2**63, size=64, dtype=np.uint64)
    betas = np.geomspace(0.1, 5, 30)
    a, b = spins.copy(), spins.copy()
    compiled.metropolis(indptr, indices, data, m.h, a, betas, seeds)
    pure.metropolis(indptr, indices, data, m.h, b, betas, seeds)
    assert np.array_equal(a, b)


def test_backend_selection_and_override():
    assert kernels.BACKEND == "cython"
    env = dict(os.environ, PILOTWAVE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from pilotwave import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_sampler_output_independent_of_backend():
    code = ("from pilotwave.circuit import random_circuit; import numpy as np;"
            "from pilotwave.sampler import sample_arrays;"
            "c = random_circuit(5, 20, np.random.default_rng(3));"
            "print(sample_arrays(c, 200, 11)[1].tobytes().hex())")
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, PILOTWAVE_PURE=flag)
        r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(r.stdout)
    assert outs[0] == outs[1]
