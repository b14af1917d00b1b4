"""Pure numpy implementations of the compiled kernels, same signatures and results."""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))


def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_seeds(master, start, count):
    i = np.arange(count, dtype=np.uint64) + np.uint64(start) + np.uint64(1)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(master) + i * GOLDEN)


def uniforms(seeds, counter):
    seeds = np.asarray(seeds, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64(seeds + (np.uint64(counter) + np.uint64(1)) * GOLDEN)
    return (z >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def ground_state_gray(J, h, tol, chunk=1 << 18):
    # Direct chunked enumeration; same minimizer and tie rule as the Gray-code loop.
    n = h.shape[0]
    iu, ju = np.nonzero(np.triu(J, 1))
    w = 2.0 * J[iu, ju]
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best, best_idx = np.inf, 0
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        spins = 1.0 - 2.0 * ((idx[:, None] >> shifts) & 1)
        e = spins @ h
        for a, b, c in zip(iu, ju, w):
            e += c * spins[:, a] * spins[:, b]
        lo = e.min()
        cand = int(np.flatnonzero(e <= lo + tol)[0])
        ec = e[cand]
        if ec < best - tol or (abs(ec - best) <= tol and idx[cand] < best_idx):
            best, best_idx = ec, int(idx[cand])
    return best_idx, float(best)


def metropolis(indptr, indices, weights, h, spins, betas, seeds):
    R, n = spins.shape
    s = spins.astype(np.float64)
    for sweep, beta in enumerate(betas):
        for k in range(n):
            f = np.zeros(R)
            for p in range(indptr[k], indptr[k + 1]):
                f = f + weights[p] * s[:, indices[p]]
            sk = s[:, k]
            delta = -2.0 * sk * (2.0 * f + h[k])
            u = uniforms(seeds, sweep * n + k)
            with np.errstate(over="ignore"):
                accept = (delta <= 0.0) | (u < np.exp(-beta * delta))
            s[:, k] = np.where(accept, -sk, sk)
    spins[...] = s.astype(np.int8)
    return spins
