# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. ``_kernels_py`` holds the reference implementations."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _unit(uint64_t seed, uint64_t counter) nogil:
    return <double>(_mix64(seed + (counter + 1) * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)


def stream_seeds(uint64_t master, uint64_t start, Py_ssize_t count):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(count, dtype=np.uint64)
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            out[i] = _mix64(master + (start + <uint64_t>i + 1) * GOLDEN)
    return out


def uniforms(cnp.ndarray[cnp.uint64_t, ndim=1] seeds, uint64_t counter):
    cdef Py_ssize_t n = seeds.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    with nogil:
        for i in range(n):
            out[i] = _unit(seeds[i], counter)
    return out


def ground_state_gray(cnp.ndarray[cnp.float64_t, ndim=2] J, cnp.ndarray[cnp.float64_t, ndim=1] h,
                      double tol):
    """Exhaustive minimum of ``s.J.s + h.s`` over s in {+1,-1}^n in Gray-code order.

    Bit ``b`` of the state index is qubit ``n - 1 - b``; bit value 1 means spin -1.
    """
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t i, j, k, q
    cdef uint64_t step, total = (<uint64_t>1) << n
    cdef uint64_t gray = 0, best_idx = 0
    cdef double energy = 0.0, best, sk, delta
    cdef cnp.ndarray[cnp.float64_t, ndim=1] field = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] spin = np.ones(n)
    for i in range(n):
        energy += h[i]
        for j in range(n):
            field[i] += J[i, j]
            energy += J[i, j]
    best = energy
    with nogil:
        for step in range(1, total):
            k = 0
            while not ((step >> k) & 1):
                k += 1
            q = n - 1 - k
            sk = spin[q]
            delta = -2.0 * sk * (2.0 * field[q] + h[q])
            energy += delta
            for j in range(n):
                field[j] -= 2.0 * J[j, q] * sk
            spin[q] = -sk
            gray ^= (<uint64_t>1) << k
            if energy < best - tol or (fabs(energy - best) <= tol and gray < best_idx):
                best = energy
                best_idx = gray
    return int(best_idx), best


def metropolis(cnp.ndarray[cnp.int64_t, ndim=1] indptr,
               cnp.ndarray[cnp.int64_t, ndim=1] indices,
               cnp.ndarray[cnp.float64_t, ndim=1] weights,
               cnp.ndarray[cnp.float64_t, ndim=1] h,
               cnp.ndarray[cnp.int8_t, ndim=2] spins,
               cnp.ndarray[cnp.float64_t, ndim=1] betas,
               cnp.ndarray[cnp.uint64_t, ndim=1] seeds):
    """Sequential single-spin-flip sweeps for each chain (row of ``spins``), in place.

    The acceptance draw for spin ``k`` in sweep ``s`` of chain ``r`` is
    ``uniform(seeds[r], s * n + k)``.
    """
    cdef Py_ssize_t R = spins.shape[0], n = spins.shape[1], S = betas.shape[0]
    cdef Py_ssize_t r, s, k, p
    cdef double f, delta, u, beta
    cdef int sk
    with nogil:
        for r in range(R):
            for s in range(S):
                beta = betas[s]
                for k in range(n):
                    f = 0.0
                    for p in range(indptr[k], indptr[k + 1]):
                        f = f + weights[p] * spins[r, indices[p]]
                    sk = spins[r, k]
                    delta = -2.0 * sk * (2.0 * f + h[k])
                    if delta <= 0.0:
                        spins[r, k] = -sk
                    else:
                        u = _unit(seeds[r], <uint64_t>(s * n + k))
                        if u < exp(-beta * delta):
                            spins[r, k] = -sk
    return spins
