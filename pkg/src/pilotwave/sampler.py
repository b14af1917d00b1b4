"""The pilot-wave Markov chain.

Each gate moves the bitstring ``s``. A monomial gate maps it through its
permutation. A general gate picks the block of its nonzero pattern
containing ``s`` restricted to the targets and redraws the target bits
inside that block with probabilities ``|<x|C_t|0>|^2`` renormalized over the
block. Block members are visited in ascending label order and one uniform
decides the draw.

Randomness: sample ``i`` of a batch with master seed ``M`` uses stream seed
``stream_seed(M, i)``; the uniform for gate ``t`` (0-based) is
``uniform(seed, t)``. Batches are cut into fixed blocks of ``BLOCK`` samples
regardless of the worker count, so results do not depend on parallelism.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as R
from .circuit import Circuit, General, global_block, LocalBlock
from .tensornet import get_engine, multi_amp

ZERO_MASS = 1e-300
BLOCK = 1 << 16
OPEN_MAX_QUBITS = 20
STATE_CACHE_BYTES = 1 << 30


class ZeroMassBlock(RuntimeError):
    pass


@dataclass
class SampleRecord:
    bits: str
    seed: int
    oracle_calls: int
    energy: float | None = None

    def to_json(self) -> dict:
        return {"bits": self.bits, "seed": self.seed, "oracle_calls": self.oracle_calls}


@dataclass
class SamplerState:
    s: str
    t: int = 0
    rng: object = None
    oracle_calls: int = 0


# -- per-gate tables ---------------------------------------------------------------


@dataclass
class GateTable:
    targets: np.ndarray
    m: int
    general: bool
    perm: np.ndarray  # local label -> image (monomial gates)
    members: np.ndarray  # (2^m, bmax) block members of each label, ascending, padded -1
    sizes: np.ndarray  # (2^m,)
    offsets: np.ndarray  # (2^m,) big-endian global index contribution of each label
    tmask: int = 0

    @classmethod
    def build(cls, gate, n: int):
        m = gate.m
        dim = 1 << m
        targets = np.array(gate.targets, dtype=np.intp)
        general = isinstance(gate.cls, General)
        perm = np.arange(dim) if general else np.asarray(gate.cls.perm if gate.cls.kind == "monomial"
                                                         else np.arange(dim))
        comp = gate.blocks
        groups = [np.flatnonzero(comp == c) for c in range(comp.max() + 1)]
        bmax = max(len(g) for g in groups)
        members = np.full((dim, bmax), -1, dtype=np.int64)
        sizes = np.zeros(dim, dtype=np.int64)
        for g in groups:
            for a in g:
                members[a, : len(g)] = g
                sizes[a] = len(g)
        offsets = np.zeros(dim, dtype=np.int64)
        tmask = 0
        if n <= 62:
            for a in range(dim):
                for j, q in enumerate(gate.targets):
                    if (a >> (m - 1 - j)) & 1:
                        offsets[a] |= 1 << (n - 1 - q)
            for q in gate.targets:
                tmask |= 1 << (n - 1 - q)
        return cls(targets, m, general, perm.astype(np.int64), members, sizes, offsets, tmask)


def gate_tables(circuit: Circuit) -> list:
    root = circuit.root
    tabs = root._cache.get("tables")
    if tabs is None or len(tabs) < len(circuit):
        tabs = [GateTable.build(g, circuit.n_qubits) for g in root.gates]
        root._cache["tables"] = tabs
    return tabs


def local_labels(states: np.ndarray, targets) -> np.ndarray:
    out = np.zeros(states.shape[0], dtype=np.int64)
    for q in targets:
        out = (out << 1) | states[:, q]
    return out


def write_labels(states: np.ndarray, targets, labels: np.ndarray) -> None:
    m = len(targets)
    for j, q in enumerate(targets):
        states[:, q] = (labels >> (m - 1 - j)) & 1


def draw_in_block(amps: np.ndarray, members: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pick one member per row with probability ``|amp|^2`` renormalized over the row.

    ``amps`` and ``members`` are ``(K, bmax)``; padded members are ``-1``.
    Returns the column index drawn.
    """
    p = np.abs(amps) ** 2
    p[members < 0] = 0.0
    cum = np.cumsum(p, axis=1)
    mass = cum[:, -1]
    bad = ~(mass > ZERO_MASS)
    if bad.any():
        raise ZeroMassBlock(f"{int(bad.sum())} chains reached a block of mass {mass[bad].min():.3g}")
    thresh = u * mass
    col = (cum <= thresh[:, None]).sum(axis=1)
    last = (members >= 0).sum(axis=1) - 1
    return np.minimum(col, last)


# -- reference single-chain step ----------------------------------------------------


def _uniform(rng, counter: int) -> float:
    if isinstance(rng, R.StreamRNG):
        return rng.uniform_at(counter)
    return float(rng.random())


def transition(prefix: Circuit, s: str, u: float, stats: SamplerState | None = None) -> str:
    """One step with an explicit uniform ``u``; the active gate is the last gate."""
    if len(prefix) == 0:
        raise ValueError("prefix must contain the active gate")
    g = prefix[len(prefix) - 1]
    m = g.m
    label = 0
    for q in g.targets:
        label = (label << 1) | (s[q] == "1")
    if not isinstance(g.cls, General):
        img = int(g.cls.perm[label]) if g.cls.kind == "monomial" else label
        return "".join(global_block(LocalBlock((img,), m), s, g.targets))
    members = tuple(int(a) for a in np.flatnonzero(g.blocks == g.blocks[label]))
    if len(members) == 1:
        return "".join(global_block(LocalBlock(members, m), s, g.targets))
    xs = [next(iter(global_block(LocalBlock((a,), m), s, g.targets))) for a in members]
    amps = np.array(multi_amp(prefix, xs))
    if stats is not None:
        stats.oracle_calls += len(xs)
    col = draw_in_block(amps[None, :], np.array([members]), np.array([u]))[0]
    return xs[col]


def update_state(prefix: Circuit, s: str, rng, stats: SamplerState | None = None) -> str:
    """Successor of ``s`` under the last gate of ``prefix``; uniform counter ``len(prefix) - 1``."""
    if len(prefix) == 0:
        raise ValueError("prefix must contain the active gate")
    return transition(prefix, s, _uniform(rng, len(prefix) - 1), stats)


def sample_reference(circuit: Circuit, rng) -> SampleRecord:
    """Literal chain built from ``update_state`` on explicit prefixes (slow, for tests)."""
    from .circuit import prefix as take

    st = SamplerState("0" * circuit.n_qubits, 0, rng, 0)
    for t in range(1, len(circuit) + 1):
        st.s = update_state(take(circuit, t), st.s, rng, st)
        st.t = t
    return SampleRecord(st.s, getattr(rng, "seed", 0), st.oracle_calls)


# -- the lockstep engine -------------------------------------------------------------


def _cleared_keys(states, idx, tab, n):
    if idx is not None:
        return idx & ~np.int64(tab.tmask)
    cl = states.copy()
    cl[:, tab.targets] = 0
    return np.packbits(cl, axis=1)


def _unique_rows(keys):
    if keys.ndim == 1:
        return np.unique(keys, return_index=True, return_inverse=True)[1:]
    v = np.ascontiguousarray(keys).view(np.dtype((np.void, keys.shape[1])))[:, 0]
    return np.unique(v, return_index=True, return_inverse=True)[1:]


def _choose_mode(circuit: Circuit, mode: str) -> str:
    if mode == "auto":
        return "open" if circuit.n_qubits <= OPEN_MAX_QUBITS else "entries"
    if mode not in ("open", "entries"):
        raise ValueError(f"unknown amplitude mode {mode!r}")
    return mode


def run_chains(circuit: Circuit, seeds: np.ndarray, mode: str = "auto"):
    """Advance one chain per seed through every gate; returns ``(bits, oracle_calls)``."""
    n = circuit.n_qubits
    K = len(seeds)
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    states = np.zeros((K, n), dtype=np.uint8)
    idx = np.zeros(K, dtype=np.int64) if n <= 62 else None
    calls = np.zeros(K, dtype=np.int64)
    if K == 0 or n == 0:
        return states, calls
    mode = _choose_mode(circuit, mode)
    eng = get_engine(circuit)
    tabs = gate_tables(circuit)
    cache_states = mode == "open" and (sum(t.general for t in tabs) << n) * 16 <= STATE_CACHE_BYTES
    for t, tab in enumerate(tabs[: len(circuit)]):
        labels = local_labels(states, tab.targets)
        if not tab.general:
            new = tab.perm[labels]
        else:
            new = labels.copy()
            sizes = tab.sizes[labels]
            need = np.flatnonzero(sizes > 1)
            if len(need):
                mem = tab.members[labels[need]]
                u = R.uniforms(seeds[need], t)
                if mode == "open":
                    psi = eng.prefix_state(t + 1)
                    base = idx[need] & ~np.int64(tab.tmask)
                    amps = psi[base[:, None] + tab.offsets[np.maximum(mem, 0)]]
                    if not cache_states:
                        eng.drop_states()
                else:
                    keys = _cleared_keys(states[need], None if idx is None else idx[need], tab, n)
                    first, inv = _unique_rows(keys)
                    rows = states[need][first].copy()
                    rows[:, tab.targets] = 0
                    ta = eng.amplitudes(t + 1, rows, tuple(int(q) for q in tab.targets))
                    amps = ta[inv[:, None], np.maximum(mem, 0)]
                col = draw_in_block(amps, mem, u)
                new[need] = mem[np.arange(len(need)), col]
                calls[need] += sizes[need]
        changed = np.flatnonzero(new != labels)
        if len(changed):
            sub = states[changed]
            write_labels(sub, tab.targets, new[changed])
            states[changed] = sub
            if idx is not None:
                idx[changed] = (idx[changed] & ~np.int64(tab.tmask)) | tab.offsets[new[changed]]
    return states, calls


def bits_to_str(row) -> str:
    return (np.asarray(row, dtype=np.uint8) + 48).tobytes().decode()


def sample(circuit: Circuit, rng) -> SampleRecord:
    seed = rng.seed if isinstance(rng, R.StreamRNG) else int(rng.integers(0, 2**63))
    bits, calls = run_chains(circuit, np.array([seed], dtype=np.uint64))
    return SampleRecord(bits_to_str(bits[0]), int(seed), int(calls[0]))


# -- batches ---------------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(payload):
    _WORKER["payload"] = payload


def _run_block(args):
    kind, start, count, master, mode = args
    payload = _WORKER["payload"]
    seeds = R.stream_seeds(master, start, count)
    if kind == "ideal":
        bits, calls = run_chains(payload, seeds, mode)
    else:
        from .noise import run_noisy_chains

        bits, calls = run_noisy_chains(payload, seeds, mode)
    return start, seeds, bits, calls


def run_blocks(kind: str, payload, K: int, master_seed: int, workers: int = 1, mode: str = "auto",
               start: int = 0, block: int = BLOCK):
    """Chains ``start .. start+K-1`` in blocks of ``block``, serially or on a process pool.

    Block boundaries fall on ``start + j * block`` whatever ``workers`` is, so
    results are identical for every worker count.
    """
    end = start + K
    jobs = [(kind, s, min(block, end - s), int(master_seed), mode) for s in range(start, end, block)]
    workers = max(1, int(workers))
    if workers == 1 or len(jobs) == 1:
        _WORKER["payload"] = payload
        results = [_run_block(j) for j in jobs]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker,
                                 initargs=(payload,)) as ex:
            results = list(ex.map(_run_block, jobs))
    results.sort(key=lambda r: r[0])
    n = payload.n_qubits
    if not results:
        return np.zeros(0, np.uint64), np.zeros((0, n), np.uint8), np.zeros(0, np.int64)
    return (np.concatenate([r[1] for r in results]), np.concatenate([r[2] for r in results]),
            np.concatenate([r[3] for r in results]))


def sample_arrays(circuit: Circuit, K: int, master_seed: int, workers: int = 1, mode: str = "auto"):
    """``(seeds, bits (K, n) uint8, oracle_calls)`` for ``K`` chains."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return run_blocks("ideal", circuit, K, master_seed, workers, mode)


def sample_batch(circuit: Circuit, K: int, master_seed: int, workers: int = 1,
                 mode: str = "auto") -> list:
    seeds, bits, calls = sample_arrays(circuit, K, master_seed, workers, mode)
    return [SampleRecord(bits_to_str(b), int(s), int(c)) for s, b, c in zip(seeds, bits, calls)]


def sample_stream(payload, master_seed: int, chunk: int = BLOCK, workers: int = 1,
                  kind: str | None = None):
    """Endless generator of ``(chunk, n)`` sample arrays, chain indices continuing.

    ``payload`` is a Circuit or a NoisyCircuit. Chunks of ``workers * chunk``
    chains are split into blocks, so the sequence does not depend on ``workers``.
    """
    if kind is None:
        kind = "ideal" if isinstance(payload, Circuit) else "noisy"
    step = chunk * max(1, int(workers))
    start = 0
    while True:
        _, bits, _ = run_blocks(kind, payload, step, master_seed, workers, start=start, block=chunk)
        start += step
        for i in range(0, step, chunk):
            yield bits[i:i + chunk]


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
