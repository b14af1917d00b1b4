"""Ising instances on the benchmark topologies.

Energy convention: ``E(s) = sum_{i != j} J_ij s_i s_j + sum_i h_i s_i`` with the
double sum over ordered pairs, so a stored undirected edge of weight ``w``
contributes ``2 w s_i s_j``. Bit 0 is spin +1.

Heavy-hex of distance ``d``: ``d`` rows of ``2d + 1`` qubits joined in a line,
and between consecutive rows one bridge qubit at every column congruent to
0 mod 4 (even gaps) or 2 mod 4 (odd gaps). For odd ``d`` this gives
``(5 d^2 + 2 d - 1) / 2`` qubits (25 for d=3, 67 for d=5), max degree 3.

Chimera ``(m, n, t)``: ``m x n`` cells of ``K_{t,t}``; vertex
``((i*n + j)*2 + u)*t + k``. Side ``u=0`` couples to the cell below, ``u=1``
to the cell on the right, giving ``m n t^2 + (m-1) n t + m (n-1) t`` edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

MAX_EXHAUSTIVE = 30


class InvalidParams(ValueError):
    pass


class TooLarge(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ProblemGraph:
    n: int
    edges: tuple
    kind: str
    params: tuple = ()

    def __post_init__(self):
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise InvalidParams(f"self-loop at {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise InvalidParams(f"edge ({a}, {b}) outside {self.n} vertices")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InvalidParams(f"duplicate edge {key}")
            seen.add(key)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


def _norm(edges):
    return tuple(sorted((min(a, b), max(a, b)) for a, b in edges))


def grid(rows: int, cols: int) -> ProblemGraph:
    if rows < 1 or cols < 1:
        raise InvalidParams("grid needs positive dimensions")
    idx = lambda r, c: r * cols + c
    edges = [(idx(r, c), idx(r, c + 1)) for r in range(rows) for c in range(cols - 1)]
    edges += [(idx(r, c), idx(r + 1, c)) for r in range(rows - 1) for c in range(cols)]
    return ProblemGraph(rows * cols, _norm(edges), "grid", (rows, cols))


def king(rows: int, cols: int) -> ProblemGraph:
    if rows < 1 or cols < 1:
        raise InvalidParams("king graph needs positive dimensions")
    idx = lambda r, c: r * cols + c
    edges = list(grid(rows, cols).edges)
    for r in range(rows - 1):
        for c in range(cols - 1):
            edges.append((idx(r, c), idx(r + 1, c + 1)))
            edges.append((idx(r, c + 1), idx(r + 1, c)))
    return ProblemGraph(rows * cols, _norm(edges), "king", (rows, cols))


def chimera(m: int, n: int, t: int) -> ProblemGraph:
    if min(m, n, t) < 1:
        raise InvalidParams("chimera needs positive m, n, t")
    v = lambda i, j, u, k: ((i * n + j) * 2 + u) * t + k
    edges = []
    for i in range(m):
        for j in range(n):
            edges += [(v(i, j, 0, a), v(i, j, 1, b)) for a in range(t) for b in range(t)]
            if i + 1 < m:
                edges += [(v(i, j, 0, k), v(i + 1, j, 0, k)) for k in range(t)]
            if j + 1 < n:
                edges += [(v(i, j, 1, k), v(i, j + 1, 1, k)) for k in range(t)]
    return ProblemGraph(2 * m * n * t, _norm(edges), "chimera", (m, n, t))


def heavy_hex(distance: int) -> ProblemGraph:
    d = int(distance)
    if d < 1:
        raise InvalidParams("heavy-hex distance must be positive")
    width = 2 * d + 1
    row = lambda r, c: r * width + c
    nxt = d * width
    edges = [(row(r, c), row(r, c + 1)) for r in range(d) for c in range(width - 1)]
    for gap in range(d - 1):
        for c in range(width):
            if c % 4 == (0 if gap % 2 == 0 else 2):
                edges += [(row(gap, c), nxt), (nxt, row(gap + 1, c))]
                nxt += 1
    return ProblemGraph(nxt, _norm(edges), "heavy_hex", (d,))


def random_3_regular(n: int, seed: int, max_tries: int = 10_000) -> ProblemGraph:
    """Pairing model: match ``3n`` half-edges uniformly, reject loops and multi-edges."""
    if n < 4 or n % 2:
        raise InvalidParams("random 3-regular graphs need even n >= 4")
    rng = np.random.default_rng(seed)
    points = np.repeat(np.arange(n), 3)
    for _ in range(max_tries):
        perm = rng.permutation(points)
        pairs = perm.reshape(-1, 2)
        if (pairs[:, 0] == pairs[:, 1]).any():
            continue
        keys = {(min(a, b), max(a, b)) for a, b in pairs.tolist()}
        if len(keys) == len(pairs):
            return ProblemGraph(n, _norm(keys), "random_3_regular", (n, seed))
    raise InvalidParams("pairing model did not produce a simple graph")


_KINDS = {
    "grid": grid,
    "king": king,
    "chimera": chimera,
    "heavy_hex": heavy_hex,
    "random_3_regular": random_3_regular,
}


def build_topology(kind: str, *params, **kw) -> ProblemGraph:
    kind = kind.replace("-", "_")
    if kind not in _KINDS:
        raise InvalidParams(f"unknown topology {kind!r}")
    try:
        return _KINDS[kind](*params, **kw)
    except TypeError as exc:
        raise InvalidParams(str(exc)) from None


def topology_for_size(kind: str, n: int, seed: int = 0) -> ProblemGraph:
    """Instance of ``kind`` with roughly ``n`` vertices (square where applicable)."""
    kind = kind.replace("-", "_")
    if kind in ("grid", "king"):
        r = max(1, int(round(np.sqrt(n))))
        return build_topology(kind, r, max(1, int(np.ceil(n / r))))
    if kind == "heavy_hex":
        d = min(range(1, 40, 2), key=lambda d: abs((5 * d * d + 2 * d - 1) // 2 - n))
        return heavy_hex(d)
    if kind == "chimera":
        c = max(1, int(round(np.sqrt(n / 8))))
        return chimera(c, c, 4)
    if kind == "random_3_regular":
        return random_3_regular(n + (n % 2), seed)
    raise InvalidParams(f"unknown topology {kind!r}")


@dataclass(frozen=True)
class IsingModel:
    """Couplings per stored undirected edge (``weights``) and fields ``h``."""

    graph: ProblemGraph
    weights: np.ndarray
    h: np.ndarray
    _J: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if w.shape != (len(self.graph.edges),) or h.shape != (self.graph.n,):
            raise InvalidParams("weights/h shapes do not match the graph")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "h", h)
        J = np.zeros((self.graph.n, self.graph.n))
        for (a, b), v in zip(self.graph.edges, w):
            J[a, b] = J[b, a] = v
        object.__setattr__(self, "_J", J)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def J(self) -> np.ndarray:
        return self._J

    def edge_arrays(self):
        e = np.array(self.graph.edges, dtype=np.int64).reshape(-1, 2)
        return e[:, 0], e[:, 1], self.weights

    def csr(self):
        """Adjacency of ``J`` as ``(indptr, indices, data)`` int64/float64 arrays."""
        n = self.n
        rows = [[] for _ in range(n)]
        for (a, b), v in zip(self.graph.edges, self.weights):
            rows[a].append((b, v))
            rows[b].append((a, v))
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices, data = [], []
        for i, r in enumerate(rows):
            r.sort()
            indices += [j for j, _ in r]
            data += [v for _, v in r]
            indptr[i + 1] = len(indices)
        return indptr, np.array(indices, dtype=np.int64), np.array(data, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, IsingModel):
            return NotImplemented
        return (self.graph.n == other.graph.n and self.graph.edges == other.graph.edges
                and np.array_equal(self.weights, other.weights) and np.array_equal(self.h, other.h))

    def __hash__(self):
        return hash((self.graph.n, self.graph.edges, self.weights.tobytes(), self.h.tobytes()))


def gaussian_ising(graph: ProblemGraph, seed) -> IsingModel:
    rng = np.random.default_rng(seed)
    w = rng.normal(size=len(graph.edges))
    h = rng.normal(size=graph.n)
    return IsingModel(graph, w, h)


def spins(bits) -> np.ndarray:
    """``1 - 2*bit`` for a bitstring or a 0/1 array (any leading shape)."""
    if isinstance(bits, str):
        bits = np.frombuffer(bits.encode(), dtype=np.uint8) - 48
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def energy(model: IsingModel, bits) -> float:
    s = spins(bits)
    if s.shape != (model.n,):
        raise LengthMismatch(f"expected {model.n} bits, got {s.shape}")
    a, b, w = model.edge_arrays()
    return float(2.0 * np.sum(w * s[a] * s[b]) + model.h @ s)


def energies(model: IsingModel, bits: np.ndarray) -> np.ndarray:
    """Energies of a ``(K, n)`` 0/1 array."""
    s = spins(bits)
    if s.ndim != 2 or s.shape[1] != model.n:
        raise LengthMismatch(f"expected shape (K, {model.n}), got {s.shape}")
    a, b, w = model.edge_arrays()
    return 2.0 * (s[:, a] * s[:, b]) @ w + s @ model.h


def exhaustive_ground_state(model: IsingModel, max_n: int = MAX_EXHAUSTIVE):
    """Exact minimizer by Gray-code enumeration; ties go to the smaller bitstring."""
    n = model.n
    if n > max_n:
        raise TooLarge(f"{n} spins exceeds the enumeration cap of {max_n}")
    if n == 0:
        return "", 0.0
    scale = np.abs(model.weights).sum() * 2 + np.abs(model.h).sum() + 1.0
    idx, _ = kernels.ground_state_gray(np.ascontiguousarray(model.J), model.h, 1e-12 * scale)
    bits = format(idx, f"0{n}b")
    return bits, energy(model, bits)


# -- model files -------------------------------------------------------------------


def dumps_model(model: IsingModel) -> str:
    lines = [f"ising {model.n}"]
    lines += [f"h {i} {v!r}" for i, v in enumerate(model.h.tolist())]
    lines += [f"J {a} {b} {v!r}" for (a, b), v in zip(model.graph.edges, model.weights.tolist())]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> IsingModel:
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0][0] != "ising" or len(lines[0]) != 2:
        raise InvalidParams("model file must start with 'ising <n>'")
    n = int(lines[0][1])
    h = np.zeros(n)
    edges, w = [], []
    for parts in lines[1:]:
        if parts[0] == "h" and len(parts) == 3:
            h[int(parts[1])] = float(parts[2])
        elif parts[0] == "J" and len(parts) == 4:
            a, b = int(parts[1]), int(parts[2])
            edges.append((min(a, b), max(a, b)))
            w.append(float(parts[3]))
        else:
            raise InvalidParams(f"bad model line {' '.join(parts)!r}")
    order = sorted(range(len(edges)), key=lambda i: edges[i])
    graph = ProblemGraph(n, tuple(edges[i] for i in order), "custom")
    return IsingModel(graph, np.array([w[i] for i in order]), h)


def save_model(model: IsingModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> IsingModel:
    with open(path) as fh:
        return loads_model(fh.read())
