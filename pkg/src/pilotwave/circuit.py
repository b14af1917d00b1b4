"""Circuits, gates and the combinatorial structure the sampler relies on.

Local basis labels are integers in ``[0, 2**m)`` where ``targets[0]`` is the
most significant bit. Global bitstrings list qubit 0 first, so the same
big-endian convention holds for statevector indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NONZERO_TOL = 1e-12
UNITARY_TOL = 1e-10


class CircuitError(ValueError):
    pass


class NonSquare(CircuitError):
    pass


class NonPowerOfTwoDimension(CircuitError):
    pass


@dataclass(frozen=True)
class Diagonal:
    phases: np.ndarray

    kind = "diagonal"


@dataclass(frozen=True)
class Monomial:
    """``matrix[perm[a], a] == phases[a]``; every other entry is zero."""

    perm: np.ndarray
    phases: np.ndarray

    kind = "monomial"


@dataclass(frozen=True)
class General:
    kind = "general"


GateClass = Diagonal | Monomial | General


def _check_square(matrix: np.ndarray) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonSquare(f"gate matrix must be square, got shape {matrix.shape}")
    dim = matrix.shape[0]
    if dim < 1 or dim & (dim - 1):
        raise NonPowerOfTwoDimension(f"gate dimension {dim} is not a power of two")
    return dim


def classify_gate(matrix, tol: float = NONZERO_TOL) -> GateClass:
    matrix = np.asarray(matrix, dtype=complex)
    _check_square(matrix)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    nz = np.abs(matrix) > tol
    off = nz.copy()
    np.fill_diagonal(off, False)
    if not off.any():
        return Diagonal(np.diag(matrix).copy())
    if (nz.sum(axis=0) == 1).all() and (nz.sum(axis=1) == 1).all():
        perm = np.argmax(nz, axis=0)
        phases = matrix[perm, np.arange(matrix.shape[0])]
        return Monomial(perm, phases)
    return General()


@dataclass(frozen=True)
class LocalBlock:
    labels: tuple[int, ...]
    m: int

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def bitstrings(self) -> list[str]:
        return [format(a, f"0{self.m}b") if self.m else "" for a in self.labels]


def _as_label(local_state, m: int) -> int:
    if isinstance(local_state, str):
        if len(local_state) != m:
            raise ValueError(f"local state {local_state!r} has wrong length for m={m}")
        return int(local_state, 2) if m else 0
    label = int(local_state)
    if not 0 <= label < (1 << m):
        raise ValueError(f"local label {label} out of range for m={m}")
    return label


def block_partition(matrix, tol: float = NONZERO_TOL) -> np.ndarray:
    """Component id of every local label in the nonzero-pattern graph.

    Components are numbered by their smallest label, in increasing order.
    """
    matrix = np.asarray(matrix, dtype=complex)
    dim = _check_square(matrix)
    adj = np.abs(matrix) > tol
    adj = adj | adj.T
    comp = np.full(dim, -1, dtype=np.int64)
    ncomp = 0
    for start in range(dim):
        if comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = ncomp
        while stack:
            a = stack.pop()
            for b in np.flatnonzero(adj[a]):
                if comp[b] < 0:
                    comp[b] = ncomp
                    stack.append(b)
        ncomp += 1
    return comp


def block_decompose(matrix, local_state, tol: float = NONZERO_TOL) -> LocalBlock:
    matrix = np.asarray(matrix, dtype=complex)
    dim = _check_square(matrix)
    m = dim.bit_length() - 1
    label = _as_label(local_state, m)
    comp = block_partition(matrix, tol)
    return LocalBlock(tuple(int(a) for a in np.flatnonzero(comp == comp[label])), m)


def global_block(block: LocalBlock, s: str, targets: Sequence[int]) -> set[str]:
    if len(targets) != block.m:
        raise ValueError("block width does not match number of targets")
    out = set()
    chars = list(s)
    for label in block.labels:
        for j, q in enumerate(targets):
            chars[q] = "1" if (label >> (block.m - 1 - j)) & 1 else "0"
        out.add("".join(chars))
    return out


class Gate:
    """Dense gate matrix on an ordered tuple of target qubits.

    Classification and the block partition are computed once at construction.
    Kraus fragments pass ``unitary=False`` to skip the unitarity check.
    """

    __slots__ = ("matrix", "targets", "label", "unitary", "cls", "blocks", "diag_on")

    def __init__(self, matrix, targets: Iterable[int], label: str = "U", unitary: bool = True):
        matrix = np.array(matrix, dtype=complex)
        matrix.setflags(write=False)
        dim = _check_square(matrix)
        targets = tuple(int(q) for q in targets)
        if dim != 1 << len(targets):
            raise CircuitError(f"matrix of dimension {dim} does not act on {len(targets)} qubits")
        if len(set(targets)) != len(targets):
            raise CircuitError(f"repeated target in {targets}")
        if any(q < 0 for q in targets):
            raise CircuitError(f"negative target in {targets}")
        if unitary:
            err = np.abs(matrix.conj().T @ matrix - np.eye(dim)).max()
            if err > UNITARY_TOL:
                raise CircuitError(f"gate {label!r} is not unitary (deviation {err:.2e})")
        self.matrix = matrix
        self.targets = targets
        self.label = str(label)
        self.unitary = unitary
        self.cls = classify_gate(matrix)
        self.blocks = block_partition(matrix)
        self.diag_on = _diagonal_qubits(matrix, len(targets))

    @property
    def m(self) -> int:
        return len(self.targets)

    @property
    def is_diagonal(self) -> bool:
        return isinstance(self.cls, Diagonal)

    @property
    def is_monomial(self) -> bool:
        return not isinstance(self.cls, General)

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return NotImplemented
        return (
            self.targets == other.targets
            and self.label == other.label
            and np.array_equal(self.matrix, other.matrix)
        )

    def __hash__(self):
        return hash((self.targets, self.label, self.matrix.tobytes()))

    def __repr__(self):
        return f"Gate({self.label!r}, targets={self.targets}, class={self.cls.kind})"


def _diagonal_qubits(matrix: np.ndarray, m: int) -> tuple[bool, ...]:
    """For each target, whether entries with differing in/out bit vanish."""
    t = np.abs(matrix.reshape((2,) * (2 * m))) > NONZERO_TOL
    out = []
    for j in range(m):
        moved = np.moveaxis(t, (j, m + j), (0, 1))
        out.append(not (moved[0, 1].any() or moved[1, 0].any()))
    return tuple(out)


class Circuit:
    """Immutable ordered gate list on ``n_qubits`` qubits.

    ``prefix(t)`` circuits keep a reference to the root circuit so that
    amplitude plans built for one prefix are shared by all of them.
    """

    def __init__(self, n_qubits: int, gates: Iterable[Gate] = (), *, _root=None):
        if n_qubits < 0:
            raise CircuitError("negative qubit count")
        self.n_qubits = int(n_qubits)
        self.gates = tuple(gates)
        for g in self.gates:
            if not isinstance(g, Gate):
                raise TypeError(f"expected Gate, got {type(g).__name__}")
            if max(g.targets, default=-1) >= self.n_qubits:
                raise CircuitError(f"{g!r} does not fit in {self.n_qubits} qubits")
        self._root = _root if _root is not None else self
        self._cache: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __getitem__(self, i):
        return self.gates[i]

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self.gates == other.gates

    def __hash__(self):
        return hash((self.n_qubits, self.gates))

    def __repr__(self):
        return f"Circuit(n_qubits={self.n_qubits}, gates={len(self.gates)})"

    @property
    def root(self) -> "Circuit":
        return self._root

    def append(self, gate: Gate) -> "Circuit":
        return Circuit(self.n_qubits, self.gates + (gate,))


def prefix(circuit: Circuit, t: int) -> Circuit:
    if not 0 <= t <= len(circuit):
        raise IndexError(f"prefix length {t} outside [0, {len(circuit)}]")
    if t == len(circuit):
        return circuit
    root = circuit.root
    return Circuit(circuit.n_qubits, circuit.gates[:t], _root=root)


@dataclass(frozen=True)
class CircuitStats:
    qsize: int
    locality: int
    max_block_size: int


def circuit_stats(circuit: Circuit) -> CircuitStats:
    qsize = 0
    locality = 0
    max_block = 1
    for g in circuit.gates:
        locality = max(locality, g.m)
        if isinstance(g.cls, General):
            qsize += 1
            max_block = max(max_block, int(np.bincount(g.blocks).max()))
    return CircuitStats(qsize, locality, max_block)


def random_circuit(n: int, depth: int, rng, gate_set: Sequence[str] | None = None) -> Circuit:
    """Random circuit over the standard gate families, for test corpora."""
    from . import gates as G

    gate_set = list(gate_set or ["h", "rx", "rz", "rzz", "cnot", "fsim", "crx"])
    one_qubit = [k for k in gate_set if k in ("h", "rx", "rz")]
    if n < 2:
        gate_set = one_qubit
    out = []
    for _ in range(depth):
        kind = gate_set[rng.integers(len(gate_set))]
        if kind in ("h", "rx", "rz"):
            q = int(rng.integers(n))
            if kind == "h":
                out.append(G.h(q))
            elif kind == "rx":
                out.append(G.rx(rng.uniform(0, 2 * np.pi), q))
            else:
                out.append(G.rz(rng.uniform(0, 2 * np.pi), q))
            continue
        a, b = (int(v) for v in rng.choice(n, size=2, replace=False))
        if kind == "rzz":
            out.append(G.rzz(rng.uniform(0, 2 * np.pi), a, b))
        elif kind == "cnot":
            out.append(G.cnot(a, b))
        elif kind == "fsim":
            out.append(G.fsim(rng.uniform(0.1, np.pi - 0.1), rng.uniform(0, 2 * np.pi), a, b))
        else:
            out.append(G.crx(rng.uniform(0.1, 2 * np.pi - 0.1), a, b))
    return Circuit(n, out)


# -- text serialization -----------------------------------------------------


def dumps(circuit: Circuit) -> str:
    lines = [f"qubits {circuit.n_qubits}"]
    for g in circuit.gates:
        entries = " ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in g.matrix.ravel())
        targets = ",".join(str(q) for q in g.targets)
        lines.append(f"{g.label} {targets} {entries}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Circuit:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise CircuitError("empty circuit file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "qubits":
        raise CircuitError(f"bad header line {lines[0]!r}")
    n = int(head[1])
    gates = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) < 3:
            raise CircuitError(f"bad gate line {ln!r}")
        label, targets = parts[0], tuple(int(q) for q in parts[1].split(","))
        vals = []
        for pair in parts[2:]:
            re, im = pair.split(",")
            vals.append(complex(float(re), float(im)))
        dim = 1 << len(targets)
        if len(vals) != dim * dim:
            raise CircuitError(f"gate line {ln!r} has {len(vals)} entries, expected {dim * dim}")
        gates.append(Gate(np.array(vals).reshape(dim, dim), targets, label))
    return Circuit(n, gates)


def save(circuit: Circuit, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(circuit))


def load(path) -> Circuit:
    with open(path) as fh:
        return loads(fh.read())
