"""Noisy sampling with local-submonomial (LSM) Kraus channels.

Each chain carries, besides its bitstring ``s``, a Pauli-X frame ``x``: the
physical state is ``X^x |psi''>`` where ``psi''`` is the state of a modified
circuit ``C''``. A unitary gate ``G`` enters ``C''`` as ``X^x G X^x``. A Kraus
operator is drawn with probability ``|<.|E_i|(s xor x)>|^2`` on its targets,
conjugated into the frame and split into one 2x2 factor per qubit; an
antidiagonal factor ``X D`` contributes ``D`` to ``C''`` and flips the frame
bit. So noise only ever appends 1-qubit diagonal gates to ``C''``, which the
engine multiplies into the tensor that owns the qubit's current leg. The
tensor network keeps exactly the noiseless structure and the noiseless plans
apply unchanged. Channels never query amplitudes.

Randomness: event ``e`` of the event list uses ``uniform(seed, e)``; readout
flips on qubit ``q`` use counter ``len(events) + q``.

Idle decoherence for a duration ``t``: amplitude damping with
``gamma = 1 - exp(-t/T1)`` followed by phase damping with
``lambda = 1 - exp(-2t * max(0, 1/T2 - 1/(2 T1)))``, merged into one channel
(zero products dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as R
from .circuit import Circuit, Gate, General, prefix
from .gates import I2, X, Y, Z
from .sampler import (
    SampleRecord,
    SamplerState,
    bits_to_str,
    draw_in_block,
    gate_tables,
    local_labels,
    run_blocks,
    transition,
    write_labels,
)
from .tensornet import get_engine

COMPLETENESS_TOL = 1e-10
OVERRIDE_CAP = 1 << 23  # per-entry tensor entries materialized per amplitude call


class ParameterOutOfRange(ValueError):
    pass


class NotSubmonomial(ValueError):
    pass


class NonLSMChannel(ValueError):
    pass


# -- channels ---------------------------------------------------------------------


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple
    tag: str = "kraus"

    def __post_init__(self):
        ops = tuple(np.array(e, dtype=complex) for e in self.operators)
        if not ops:
            raise ParameterOutOfRange("a channel needs at least one operator")
        dim = ops[0].shape[0]
        if any(e.shape != (dim, dim) for e in ops) or dim & (dim - 1):
            raise ParameterOutOfRange("Kraus operators must be square of equal power-of-two size")
        for e in ops:
            e.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        err = np.abs(sum(e.conj().T @ e for e in ops) - np.eye(dim)).max()
        if err > COMPLETENESS_TOL:
            raise ParameterOutOfRange(f"channel {self.tag!r} is not trace preserving ({err:.2e})")

    @property
    def m(self) -> int:
        return self.operators[0].shape[0].bit_length() - 1

    def is_trivial(self) -> bool:
        return len(self.operators) == 1 and np.allclose(
            self.operators[0], np.eye(self.operators[0].shape[0]), atol=1e-15, rtol=0)

    def index_probabilities(self) -> np.ndarray:
        """``P[i, s] = <s|E_i^dag E_i|s>`` for every local basis label ``s``."""
        return np.array([(np.abs(e) ** 2).sum(axis=0) for e in self.operators])


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ParameterOutOfRange(f"{name}={p} outside [0, 1]")


def _drop_zero(ops):
    return [e for e in ops if np.abs(e).max() > 0]


def depolarize1(p: float) -> KrausChannel:
    _check_prob("p", p)
    ops = [math.sqrt(1 - p) * I2] + [math.sqrt(p / 3) * P for P in (X, Y, Z)]
    return KrausChannel(tuple(_drop_zero(ops)), "depolarize1")


def depolarize2(p: float) -> KrausChannel:
    _check_prob("p", p)
    paulis = (I2, X, Y, Z)
    ops = [math.sqrt(1 - p) * np.kron(I2, I2)]
    ops += [math.sqrt(p / 15) * np.kron(a, b) for i, a in enumerate(paulis)
            for j, b in enumerate(paulis) if i or j]
    return KrausChannel(tuple(_drop_zero(ops)), "depolarize2")


def amp_damp(gamma: float) -> KrausChannel:
    _check_prob("gamma", gamma)
    e0 = np.diag([1.0, math.sqrt(1 - gamma)]).astype(complex)
    e1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel(tuple(_drop_zero([e0, e1])), "amp_damp")


def phase_damp(lam: float) -> KrausChannel:
    _check_prob("lambda", lam)
    e0 = np.diag([1.0, math.sqrt(1 - lam)]).astype(complex)
    e1 = np.diag([0.0, math.sqrt(lam)]).astype(complex)
    return KrausChannel(tuple(_drop_zero([e0, e1])), "phase_damp")


def compose(second: KrausChannel, first: KrausChannel, tag: str = "composed") -> KrausChannel:
    """Channel applying ``first`` then ``second``; vanishing products are dropped."""
    ops = [b @ a for b in second.operators for a in first.operators]
    return KrausChannel(tuple(e for e in ops if np.abs(e).max() > 1e-15), tag)


def idle_parameters(t: float, T1: float, T2: float):
    gamma = 1.0 - math.exp(-t / T1) if T1 > 0 else 1.0
    rate = max(0.0, 1.0 / T2 - 1.0 / (2.0 * T1))
    lam = 1.0 - math.exp(-2.0 * t * rate)
    return gamma, lam


def idle_channel(t: float, T1: float, T2: float) -> KrausChannel:
    gamma, lam = idle_parameters(t, T1, T2)
    return compose(phase_damp(lam), amp_damp(gamma), "idle")


# -- model and config --------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 0.0
    p2: float = 0.0
    p_readout: float = 0.0
    t_gate1: float = 1.0
    t_gate2: float = 1.0
    T1: float = math.inf
    T2: float = math.inf
    idle_all_qubits: bool = False

    def __post_init__(self):
        for name in ("p1", "p2", "p_readout"):
            _check_prob(name, getattr(self, name))
        if self.t_gate1 <= 0 or self.t_gate2 <= 0:
            raise ParameterOutOfRange("gate durations must be positive")
        if self.T1 <= 0 or self.T2 <= 0:
            raise ParameterOutOfRange("T1 and T2 must be positive")
        if self.T2 > 2 * self.T1:
            raise ParameterOutOfRange("T2 must not exceed 2*T1")

    def standard_channels(self) -> dict:
        return {
            "depolarize1": depolarize1,
            "depolarize2": depolarize2,
            "amp_damp": amp_damp,
            "phase_damp": phase_damp,
            "idle1": lambda: idle_channel(self.t_gate1, self.T1, self.T2),
            "idle2": lambda: idle_channel(self.t_gate2, self.T1, self.T2),
        }


def standard_model() -> NoiseModel:
    """Device parameters used for the noisy QAOA experiments."""
    return NoiseModel(p1=0.005, p2=0.01, p_readout=0.05, t_gate1=30e-9, t_gate2=80e-9,
                      T1=100e-6, T2=50e-6)


CONFIG_KEYS = ("p1", "p2", "p_readout", "t_gate1", "t_gate2", "T1", "T2")


def loads_noise_config(text: str) -> NoiseModel:
    vals = {}
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        key, sep, val = ln.partition("=")
        key = key.strip()
        if not sep or key not in CONFIG_KEYS:
            raise ParameterOutOfRange(f"unknown or malformed config line {ln!r}")
        vals[key] = float(val)
    missing = [k for k in CONFIG_KEYS if k not in vals]
    if missing:
        raise ParameterOutOfRange(f"missing config keys: {', '.join(missing)}")
    return NoiseModel(**vals)


def dumps_noise_config(model: NoiseModel) -> str:
    return "".join(f"{k} = {getattr(model, k)!r}\n" for k in CONFIG_KEYS)


def load_noise_config(path) -> NoiseModel:
    with open(path) as fh:
        return loads_noise_config(fh.read())


# -- LSM decomposition ----------------------------------------------------------------


def _kron_factors(e: np.ndarray, tol: float):
    """Split ``e`` into 2x2 Kronecker factors, or ``None`` if it is not a product."""
    dim = e.shape[0]
    if dim == 1:
        return []
    if dim == 2:
        return [e.copy()]
    r = dim // 2
    t = e.reshape(2, r, 2, r).transpose(0, 2, 1, 3).reshape(4, r * r)
    u, s, vh = np.linalg.svd(t)
    if s[0] == 0 or (len(s) > 1 and s[1] > tol * max(1.0, s[0])):
        return None
    a = (u[:, 0] * math.sqrt(s[0])).reshape(2, 2)
    b = (vh[0] * math.sqrt(s[0])).reshape(r, r)
    rest = _kron_factors(b, tol)
    if rest is None:
        return None
    return [a] + rest


def _clean(f: np.ndarray, tol: float) -> np.ndarray:
    f = f.copy()
    f[np.abs(f) <= tol * max(1.0, np.abs(f).max())] = 0
    return f


def factor_kind(f: np.ndarray) -> str:
    """``'diag'``, ``'anti'`` or ``'none'`` for a 2x2 matrix."""
    off = f[0, 1] != 0 or f[1, 0] != 0
    on = f[0, 0] != 0 or f[1, 1] != 0
    if not off:
        return "diag"
    if not on:
        return "anti"
    return "none"


def lsm_decompose(channel: KrausChannel, tol: float = 1e-10):
    """Per operator, its list of 2x2 submonomial factors; raises ``NonLSMChannel``."""
    out = []
    for e in channel.operators:
        fac = _kron_factors(e, tol)
        if fac is None:
            raise NonLSMChannel(f"operator of {channel.tag!r} is not a tensor product of 2x2 factors")
        fac = [_clean(f, tol) for f in fac]
        prod = fac[0] if fac else np.ones((1, 1))
        for f in fac[1:]:
            prod = np.kron(prod, f)
        if np.abs(prod - e).max() > 1e-9:
            raise NonLSMChannel(f"factorization of {channel.tag!r} does not reproduce the operator")
        if any(factor_kind(f) == "none" for f in fac):
            raise NonLSMChannel(f"channel {channel.tag!r} has a non-submonomial factor")
        out.append(fac)
    return out


def is_lsm(channel: KrausChannel) -> bool:
    try:
        lsm_decompose(channel)
    except NonLSMChannel:
        return False
    return True


def frame_factor(f: np.ndarray, xbit: int):
    """Diagonal part and frame flip of factor ``f`` seen through ``X^xbit``."""
    if xbit:
        f = X @ f @ X
    if factor_kind(f) == "anti":
        return np.diag(X @ f).copy(), 1
    return np.diag(f).copy(), 0


# -- noisy circuits -------------------------------------------------------------------


@dataclass(frozen=True)
class GateEvent:
    gate: Gate


@dataclass(frozen=True)
class ChannelEvent:
    channel: KrausChannel
    targets: tuple


@dataclass
class NoisyCircuit:
    n_qubits: int
    events: tuple
    p_readout: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.events = tuple(self.events)
        for ev in self.events:
            t = ev.gate.targets if isinstance(ev, GateEvent) else ev.targets
            if max(t, default=-1) >= self.n_qubits:
                raise ValueError(f"event on {t} does not fit in {self.n_qubits} qubits")
        _check_prob("p_readout", self.p_readout)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    @property
    def base(self) -> Circuit:
        c = self._cache.get("base")
        if c is None:
            c = Circuit(self.n_qubits, [e.gate for e in self.events if isinstance(e, GateEvent)])
            self._cache["base"] = c
        return c

    def channel_events(self):
        return [e for e in self.events if isinstance(e, ChannelEvent)]


def insert_noise(circuit: Circuit, model: NoiseModel) -> NoisyCircuit:
    idle1 = idle_channel(model.t_gate1, model.T1, model.T2)
    idle2 = idle_channel(model.t_gate2, model.T1, model.T2)
    dep1, dep2 = depolarize1(model.p1), depolarize2(model.p2)
    events = []
    for g in circuit.gates:
        if g.m > 2:
            raise ValueError(f"noise insertion supports 1- and 2-qubit gates, got {g!r}")
        events.append(GateEvent(g))
        dep, idle = (dep1, idle1) if g.m == 1 else (dep2, idle2)
        if not dep.is_trivial():
            events.append(ChannelEvent(dep, g.targets))
        idle_on = range(circuit.n_qubits) if model.idle_all_qubits else g.targets
        if not idle.is_trivial():
            events += [ChannelEvent(idle, (q,)) for q in idle_on]
    return NoisyCircuit(circuit.n_qubits, events, model.p_readout)


def propagate_x(xmask, gate: Gate) -> Gate:
    """``X^x G X^x`` restricted to the gate's targets."""
    xmask = [int(c) for c in xmask] if isinstance(xmask, str) else list(np.asarray(xmask).ravel())
    flips = [bool(xmask[q]) for q in gate.targets]
    if not any(flips):
        return gate
    px = np.array([[1.0]])
    for f in flips:
        px = np.kron(px, X if f else I2)
    return Gate(px @ gate.matrix @ px, gate.targets, gate.label, unitary=gate.unitary)


def _kraus_draw(probs: np.ndarray, labels: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs[:, labels], axis=0)
    idx = (cum <= (u * cum[-1])[None, :]).sum(axis=0)
    return np.minimum(idx, probs.shape[0] - 1)


def sample_kraus_index(channel: KrausChannel, s_local, rng) -> int:
    try:
        lsm_decompose(channel)
    except NonLSMChannel as exc:
        raise NotSubmonomial(str(exc)) from exc
    m = channel.m
    label = int(s_local, 2) if isinstance(s_local, str) else int(s_local)
    if not 0 <= label < 1 << m:
        raise ValueError("local state out of range")
    u = rng.random() if not isinstance(rng, float) else rng
    return int(_kraus_draw(channel.index_probabilities(), np.array([label]), np.array([u]))[0])


def apply_readout_error(bits, p: float, rng):
    """Flip each bit with probability ``p``; ``rng`` is a generator or a ``(n,)`` uniform array."""
    _check_prob("p_readout", p)
    arr = np.frombuffer(bits.encode(), dtype=np.uint8) - 48 if isinstance(bits, str) else np.asarray(bits)
    u = rng if isinstance(rng, np.ndarray) else np.array([rng.random() for _ in range(len(arr))])
    out = arr ^ (u < p).astype(arr.dtype)
    return bits_to_str(out) if isinstance(bits, str) else out


# -- reference chain ------------------------------------------------------------------


def noisy_sample_reference(noisy: NoisyCircuit, rng, trace=None) -> SampleRecord:
    """Algorithm with an explicit ``C''`` circuit rebuilt at every step (for tests).

    ``trace`` (a list) receives ``(event_index, C''_prefix, s)`` before each
    amplitude-driven step.
    """
    n = noisy.n_qubits
    seed = rng.seed
    gates: list = []
    x = np.zeros(n, dtype=np.uint8)
    st = SamplerState("0" * n, 0, rng, 0)
    channel_calls = 0
    for e, ev in enumerate(noisy.events):
        u = rng.uniform_at(e)
        if isinstance(ev, GateEvent):
            g = propagate_x(x, ev.gate)
            gates.append(g)
            if not g.is_diagonal:
                cpp = Circuit(n, gates)
                if trace is not None and isinstance(g.cls, General):
                    trace.append((e, cpp, st.s))
                st.s = transition(cpp, st.s, u, st)
            continue
        before = st.oracle_calls
        fac = lsm_decompose(ev.channel)
        label = 0
        for q in ev.targets:
            label = (label << 1) | (int(st.s[q]) ^ int(x[q]))
        i = int(_kraus_draw(ev.channel.index_probabilities(), np.array([label]), np.array([u]))[0])
        for j, q in enumerate(ev.targets):
            d, flip = frame_factor(fac[i][j], int(x[q]))
            gates.append(Gate(np.diag(d), (q,), "K", unitary=False))
            x[q] ^= flip
        channel_calls += st.oracle_calls - before
    E = len(noisy.events)
    out = (np.frombuffer(st.s.encode(), dtype=np.uint8) - 48) ^ x
    u = np.array([rng.uniform_at(E + q) for q in range(n)])
    out = apply_readout_error(out, noisy.p_readout, u)
    rec = SampleRecord(bits_to_str(out), seed, st.oracle_calls)
    rec.channel_calls = channel_calls
    return rec


def step_networks(noisy: NoisyCircuit, rng, open_outputs: bool = True):
    """Fused networks met by one reference noisy chain, next to the noiseless ones.

    Yields ``(event_index, noisy_network, noiseless_network)`` at every
    amplitude-driven step. The noisy network is built from ``C''``, the
    noiseless one from the matching prefix of the base circuit; both have
    their rank-1 tensors fused. With ``open_outputs`` false the outputs are
    fixed to the chain's current bits.
    """
    from .tensornet import build_network, fuse_vectors

    trace: list = []
    noisy_sample_reference(noisy, rng, trace)
    for e, cpp, s in trace:
        k = sum(1 for g in cpp if g.label != "K")
        bits = None if open_outputs else s
        yield (e, fuse_vectors(build_network(cpp, bits)),
               fuse_vectors(build_network(prefix(noisy.base, k), bits)))


def same_shape(a, b) -> bool:
    """Structural equality of two networks: isomorphic tensor/leg incidence graphs."""
    import networkx as nx

    from .tensornet import network_graph

    ga, gb = network_graph(a), network_graph(b)
    if sorted(d for _, d in ga.degree()) != sorted(d for _, d in gb.degree()):
        return False
    return nx.is_isomorphic(ga, gb, node_match=lambda x, y: x["kind"] == y["kind"])


# -- vectorized engine -----------------------------------------------------------------


@dataclass
class _Slot:
    event: int
    qubit: int
    host: int | None  # gate index owning the qubit's leg, None on the input leg
    axis: int
    vecs: np.ndarray  # (ncodes, 2) diagonal factors, code = kraus_index * 2 + frame bit
    flips: np.ndarray  # (ncodes,)


@dataclass
class _Program:
    gate_of_event: list  # gate index or -1
    chan: dict  # event -> (probs, slot ids, targets)
    slots: list
    host_slots: dict  # gate -> slot ids ascending by event
    slot_events: np.ndarray = None  # slots are numbered in event order
    slot_hosts: np.ndarray = None  # -1 on the input leg
    entry_sizes: np.ndarray = None  # per-entry tensor entries of gates 0..k


def _program(noisy: NoisyCircuit) -> _Program:
    prog = noisy._cache.get("program")
    if prog is not None:
        return prog
    base = noisy.base
    sk = get_engine(base).skeleton
    n = noisy.n_qubits
    leg_owner = {}
    for k in range(len(base)):
        for j, q in enumerate(sk.targets[k]):
            leg = sk.legs[k][sk.out_axis[k][j]]
            if leg >= n:
                leg_owner[leg] = k
    gate_of_event, chan, slots, host_slots = [], {}, [], {}
    k = 0
    for e, ev in enumerate(noisy.events):
        if isinstance(ev, GateEvent):
            gate_of_event.append(k)
            k += 1
            continue
        gate_of_event.append(-1)
        fac = lsm_decompose(ev.channel)
        ids = []
        for j, q in enumerate(ev.targets):
            leg = sk.wires[k][q]
            host = leg_owner.get(leg)
            axis = sk.slot_axis(host, q) if host is not None else -1
            vecs, flips = [], []
            for i in range(len(fac)):
                for xb in (0, 1):
                    d, fl = frame_factor(fac[i][j], xb)
                    vecs.append(d)
                    flips.append(fl)
            ids.append(len(slots))
            slots.append(_Slot(e, q, host, axis, np.array(vecs), np.array(flips, dtype=np.uint8)))
            if host is not None:
                host_slots.setdefault(host, []).append(ids[-1])
        chan[e] = (ev.channel.index_probabilities(), ids, np.array(ev.targets, dtype=np.intp))
    prog = _Program(gate_of_event, chan, slots, host_slots,
                    np.array([s.event for s in slots], dtype=np.int64),
                    np.array([-1 if s.host is None else s.host for s in slots], dtype=np.int64),
                    np.cumsum([sk.variants(k)[0].size for k in range(len(base))], dtype=np.int64))
    noisy._cache["program"] = prog
    return prog


def _combine(hist: np.ndarray, codes: np.ndarray) -> np.ndarray:
    key = hist * np.int64(int(codes.max()) + 1) + codes
    return np.unique(key, return_inverse=True)[1].astype(np.int64).reshape(-1)


def _overrides(prog, sk, gate_codes, slot_codes, reps, upto_gate, before_event):
    """Per-entry tensors of gates ``0..upto_gate`` for the chains ``reps``."""
    nslot = int(np.searchsorted(prog.slot_events, before_event))
    gc = gate_codes[reps, :upto_gate + 1]
    sc = slot_codes[reps, :nslot]
    gate_same = (gc == gc[:1]).all(axis=0)
    slot_same = (sc == sc[:1]).all(axis=0)
    hosts = prog.slot_hosts[:nslot]
    touched = gc.any(axis=0)
    touched[hosts[(hosts >= 0) & (hosts <= upto_gate)]] = True
    out = {}
    for k in np.flatnonzero(touched).tolist():
        sl = [s for s in prog.host_slots.get(k, ()) if s < nslot]
        if gate_same[k] and all(slot_same[s] for s in sl):
            data = sk.variants(k)[int(gc[0, k])].copy()
            for s in sl:
                shape = [1] * data.ndim
                shape[prog.slots[s].axis] = 2
                data = data * prog.slots[s].vecs[int(sc[0, s])].reshape(shape)
            out[k] = (data, False)
            continue
        data = sk.variants(k)[gc[:, k]]
        for s in sl:
            shape = [1] * data.ndim
            shape[prog.slots[s].axis + 1] = 2
            if slot_same[s]:
                data = data * prog.slots[s].vecs[int(sc[0, s])].reshape(shape)
            else:
                shape[0] = len(reps)
                data = data * prog.slots[s].vecs[sc[:, s]].reshape(shape)
        out[k] = (data, True)
    return out


def run_noisy_chains(noisy: NoisyCircuit, seeds: np.ndarray, mode: str = "auto"):
    """Vectorized noisy chains; returns ``(bits after readout, oracle_calls)``.

    Amplitudes come from the base circuit's engine with per-entry tensors
    (frame-conjugated gate variants times fused diagonal factors), keyed by a
    per-chain history id so chains with equal histories share entries.
    """
    n = noisy.n_qubits
    K = len(seeds)
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    states = np.zeros((K, n), dtype=np.uint8)
    mask = np.zeros((K, n), dtype=np.uint8)
    calls = np.zeros(K, dtype=np.int64)
    if K == 0 or n == 0:
        return states, calls
    base = noisy.base
    prog = _program(noisy)
    eng = get_engine(base)
    sk = eng.skeleton
    tabs = gate_tables(base)
    gate_codes = np.zeros((K, len(base)), dtype=np.int64)
    slot_codes = np.zeros((K, len(prog.slots)), dtype=np.int64)
    hist = np.zeros(K, dtype=np.int64)
    for e, ev in enumerate(noisy.events):
        k = prog.gate_of_event[e]
        if k >= 0:
            tab = tabs[k]
            xm = local_labels(mask, tab.targets)
            gate_codes[:, k] = xm
            if xm.any():
                hist = _combine(hist, xm)
            if ev.gate.is_diagonal:
                continue
            labels = local_labels(states, tab.targets)
            if not tab.general:
                new = tab.perm[labels ^ xm] ^ xm
            else:
                la = labels ^ xm
                sizes = tab.sizes[la]
                new = labels.copy()
                need = np.flatnonzero(sizes > 1)
                if len(need):
                    raw = tab.members[la[need]]
                    mem = np.where(raw >= 0, raw ^ xm[need, None], np.int64(1) << 62)
                    mem.sort(axis=1)
                    mem[mem == np.int64(1) << 62] = -1
                    sub = states[need]
                    cleared = sub.copy()
                    cleared[:, tab.targets] = 0
                    keys = np.concatenate([hist[need, None].view(np.uint8).reshape(len(need), 8),
                                           np.packbits(cleared, axis=1)], axis=1)
                    v = np.ascontiguousarray(keys).view(np.dtype((np.void, keys.shape[1])))[:, 0]
                    _, first, inv = np.unique(v, return_index=True, return_inverse=True)
                    inv = inv.reshape(-1)
                    reps = need[first]
                    tq = tuple(int(q) for q in tab.targets)
                    step = max(1, OVERRIDE_CAP // int(prog.entry_sizes[k]))
                    ta = np.concatenate([
                        eng.amplitudes(k + 1, cleared[first[lo:lo + step]], tq, cache_static=False,
                                       overrides=_overrides(prog, sk, gate_codes, slot_codes,
                                                            reps[lo:lo + step], k, e))
                        for lo in range(0, len(first), step)])
                    amps = ta[inv[:, None], np.maximum(mem, 0)]
                    u = R.uniforms(seeds[need], e)
                    col = draw_in_block(amps, mem, u)
                    new[need] = mem[np.arange(len(need)), col]
                    calls[need] += sizes[need]
            changed = np.flatnonzero(new != labels)
            if len(changed):
                sub = states[changed]
                write_labels(sub, tab.targets, new[changed])
                states[changed] = sub
            continue
        probs, ids, targets = prog.chan[e]
        labels = local_labels(states ^ mask, targets)
        u = R.uniforms(seeds, e)
        i = _kraus_draw(probs, labels, u)
        for s, q in zip(ids, targets):
            code = i * 2 + mask[:, q]
            slot_codes[:, s] = code
            mask[:, q] ^= prog.slots[s].flips[code]
            if prog.slots[s].host is not None:
                hist = _combine(hist, code)
    out = states ^ mask
    if noisy.p_readout > 0:
        E = len(noisy.events)
        for q in range(n):
            out[:, q] ^= (R.uniforms(seeds, E + q) < noisy.p_readout).astype(np.uint8)
    return out, calls


def noisy_sample(noisy: NoisyCircuit, rng) -> SampleRecord:
    seed = rng.seed if isinstance(rng, R.StreamRNG) else int(rng.integers(0, 2**63))
    bits, calls = run_noisy_chains(noisy, np.array([seed], dtype=np.uint64))
    return SampleRecord(bits_to_str(bits[0]), int(seed), int(calls[0]))


def noisy_sample_arrays(noisy: NoisyCircuit, K: int, master_seed: int, workers: int = 1,
                        mode: str = "auto"):
    if K < 1:
        raise ValueError("K must be at least 1")
    return run_blocks("noisy", noisy, K, master_seed, workers, mode)


def noisy_sample_batch(noisy: NoisyCircuit, K: int, master_seed: int, workers: int = 1) -> list:
    seeds, bits, calls = noisy_sample_arrays(noisy, K, master_seed, workers)
    return [SampleRecord(bits_to_str(b), int(s), int(c)) for s, b, c in zip(seeds, bits, calls)]
