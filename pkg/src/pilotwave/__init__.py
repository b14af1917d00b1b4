"""Pilot-wave exact sampler for ideal and noisy quantum circuits."""

from .circuit import Circuit, Gate, circuit_stats, prefix, random_circuit
from .kernels import BACKEND
from .noise import NoiseModel, NoisyCircuit, insert_noise, noisy_sample, noisy_sample_arrays, standard_model
from .problems import IsingModel, energies, energy, exhaustive_ground_state, gaussian_ising
from .qaoa import QaoaParams, default_schedule, qaoa_circuit
from .rng import StreamRNG
from .sampler import sample, sample_arrays, sample_batch, sample_stream
from .tensornet import amp, multi_amp

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Circuit", "Gate", "IsingModel", "NoiseModel", "NoisyCircuit", "QaoaParams", "StreamRNG",
    "amp", "circuit_stats", "default_schedule", "energies", "energy", "exhaustive_ground_state",
    "gaussian_ising", "insert_noise", "multi_amp", "noisy_sample", "noisy_sample_arrays", "standard_model",
    "prefix", "qaoa_circuit", "random_circuit", "sample", "sample_arrays", "sample_batch", "sample_stream",
]
