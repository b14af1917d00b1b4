"""Brute-force references: statevector and density-matrix evolution, TVD."""

from __future__ import annotations

import numpy as np

from .circuit import Circuit

MAX_STATEVECTOR_QUBITS = 22
MAX_DENSITY_QUBITS = 10


class TooLarge(ValueError):
    pass


class NonCompleteChannel(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def apply_matrix(state: np.ndarray, matrix: np.ndarray, targets, n: int, axis_offset: int = 0):
    """Apply ``matrix`` to ``targets`` of a tensor with ``n`` qubit axes starting at ``axis_offset``."""
    m = len(targets)
    axes = [axis_offset + q for q in targets]
    psi = np.moveaxis(state, axes, list(range(m)))
    shape = psi.shape
    out = (matrix @ psi.reshape(1 << m, -1)).reshape(shape)
    return np.moveaxis(out, list(range(m)), axes)


def statevector(circuit: Circuit, max_qubits: int = MAX_STATEVECTOR_QUBITS) -> np.ndarray:
    n = circuit.n_qubits
    if n > max_qubits:
        raise TooLarge(f"{n} qubits exceeds the statevector cap of {max_qubits}")
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for g in circuit.gates:
        psi = apply_matrix(psi, g.matrix, g.targets, n)
    return psi.reshape(-1)


def exact_distribution(circuit: Circuit, max_qubits: int = MAX_STATEVECTOR_QUBITS) -> np.ndarray:
    return np.abs(statevector(circuit, max_qubits)) ** 2


def _check_complete(ops, tol=1e-10):
    dim = ops[0].shape[0]
    acc = sum(e.conj().T @ e for e in ops)
    if np.abs(acc - np.eye(dim)).max() > tol:
        raise NonCompleteChannel("Kraus operators do not satisfy sum E^dag E = I")


def apply_channel(rho: np.ndarray, ops, targets, n: int) -> np.ndarray:
    """``rho <- sum_i E_i rho E_i^dag`` on a density tensor with ``2n`` axes."""
    out = np.zeros_like(rho)
    for e in ops:
        left = apply_matrix(rho, e, targets, n, 0)
        out += apply_matrix(left, e.conj(), targets, n, n)
    return out


def noisy_exact_distribution(noisy, max_qubits: int = MAX_DENSITY_QUBITS) -> np.ndarray:
    """Exact output distribution of a ``NoisyCircuit`` including readout flips."""
    from .noise import ChannelEvent

    n = noisy.n_qubits
    if n > max_qubits:
        raise TooLarge(f"{n} qubits exceeds the density-matrix cap of {max_qubits}")
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    for ev in noisy.events:
        if isinstance(ev, ChannelEvent):
            _check_complete(ev.channel.operators)
            rho = apply_channel(rho, ev.channel.operators, ev.targets, n)
        else:
            g = ev.gate
            rho = apply_matrix(rho, g.matrix, g.targets, n, 0)
            rho = apply_matrix(rho, g.matrix.conj(), g.targets, n, n)
    p = np.real(np.diagonal(rho.reshape(1 << n, 1 << n))).copy()
    p = np.clip(p, 0.0, None)
    r = noisy.p_readout
    if r > 0:
        flip = np.array([[1 - r, r], [r, 1 - r]])
        pt = p.reshape((2,) * n)
        for q in range(n):
            pt = np.moveaxis(np.tensordot(flip, pt, axes=([1], [q])), 0, q)
        p = pt.reshape(-1)
    return p


def tvd(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatch(f"length mismatch: {p.shape} vs {q.shape}")
    for v in (p, q):
        if abs(v.sum() - 1.0) > 1e-6:
            raise ValueError("probability vectors must sum to 1")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_distribution(bits: np.ndarray, n: int) -> np.ndarray:
    """Histogram of a ``(K, n)`` 0/1 array over the ``2**n`` big-endian indices."""
    bits = np.asarray(bits, dtype=np.int64)
    idx = bits @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64)) if n else np.zeros(len(bits), int)
    return np.bincount(idx, minlength=1 << n) / max(len(bits), 1)
