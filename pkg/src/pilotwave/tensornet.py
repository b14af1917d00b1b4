"""Tensor-network amplitudes ``<x|C_t|0^n>`` with diagonal-leg identification.

Legs are wire segments. Qubit ``q`` starts on leg ``q`` (the input leg, fixed
to 0). A gate that is non-diagonal on ``q`` ends the current segment and
opens a new leg; a gate diagonal on ``q`` touches the current leg only, so a
leg may be shared by many tensors (a hyperedge).

Every prefix ``C_t`` of one root circuit is described by the same skeleton:
gate ``k`` always owns the same legs, and the prefix only decides which legs
are outputs. Plans are therefore cached per ``(t, open qubits)`` and reused for
every bit assignment. Bits enter as a batch: each output leg is fixed per
entry by a gather on the tensors touching it, and tensors that touch no
per-entry data stay unbatched, so the x-independent part of the network is
contracted once per call (and once per layout for ideal circuits).
"""

from __future__ import annotations

import functools
import heapq
import itertools
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import Circuit

DEFAULT_BUDGET = 30
DEFAULT_MEMORY_CAP = 1 << 24
DEFAULT_SLICE_CAP = 1 << 26
MAX_SLICED_LEGS = 8


class EmptyNetwork(ValueError):
    pass


class UnassignedOpenLeg(ValueError):
    pass


class RankBudgetExceeded(MemoryError):
    pass


# -- public network type ------------------------------------------------------


@dataclass
class Tensor:
    legs: tuple
    data: np.ndarray


@dataclass
class TensorNetwork:
    """Tensors after fixing input (and, if given, output) legs.

    ``open_legs[i]`` is the output leg of qubit ``open_qubits[i]``. A leg may
    appear on any number of tensors.
    """

    tensors: list
    open_legs: tuple = ()
    open_qubits: tuple = ()

    @property
    def legs(self) -> dict:
        inc: dict = {}
        for i, t in enumerate(self.tensors):
            for ax, leg in enumerate(t.legs):
                inc.setdefault(leg, []).append((i, ax))
        return inc

    def leg_sets(self) -> list:
        return [frozenset(t.legs) for t in self.tensors]


@dataclass
class ContractionPlan:
    steps: tuple
    n_leaves: int
    peak_rank: int
    est_cost: int
    breach: bool = False
    sliced_legs: tuple = ()
    step_ranks: tuple = ()
    step_unions: tuple = ()

    def dumps(self) -> str:
        lines = [
            f"leaves {self.n_leaves} steps {len(self.steps)} peak_rank {self.peak_rank} "
            f"est_cost {self.est_cost} breach {int(self.breach)} "
            f"sliced {','.join(map(str, self.sliced_legs)) or '-'}"
        ]
        for i, ((a, b), r, u) in enumerate(zip(self.steps, self.step_ranks, self.step_unions)):
            lines.append(f"{self.n_leaves + i} = {a} * {b}  rank {r}  cost {1 << u}")
        return "\n".join(lines) + "\n"


# -- skeleton -----------------------------------------------------------------


def _gate_tensor(matrix: np.ndarray, diag_on: Sequence[bool]):
    """Tensor of one gate: one axis per target input, then one per non-diagonal output."""
    m = len(diag_on)
    t = matrix.reshape((2,) * (2 * m))
    letters = "abcdefghijklmnopqrstuvwxyz"
    outs = [letters[j] for j in range(m)]
    ins = [letters[j] if diag_on[j] else letters[m + j] for j in range(m)]
    rhs = "".join(ins) + "".join(outs[j] for j in range(m) if not diag_on[j])
    return np.einsum("".join(outs) + "".join(ins) + "->" + rhs, t).copy()


class Skeleton:
    """Leg bookkeeping for every prefix of a root circuit."""

    def __init__(self, circuit: Circuit, identify_diagonal: bool = True):
        n = circuit.n_qubits
        self.n = n
        self.identify = identify_diagonal
        wire = list(range(n))
        nxt = n
        self.legs = []  # full legs of each gate tensor, axis order
        self.data = []  # full data
        self.out_axis = []  # per target: axis carrying the qubit's post-gate leg
        self.in_legs = []
        self.wires = [tuple(wire)]
        for g in circuit.gates:
            diag = g.diag_on if identify_diagonal else (False,) * g.m
            ins = [wire[q] for q in g.targets]
            outs, out_axis = [], []
            for j, q in enumerate(g.targets):
                if diag[j]:
                    out_axis.append(j)
                else:
                    out_axis.append(g.m + len(outs))
                    outs.append(nxt)
                    wire[q] = nxt
                    nxt += 1
            self.legs.append(tuple(ins + outs))
            self.data.append(_gate_tensor(g.matrix, diag))
            self.out_axis.append(tuple(out_axis))
            self.in_legs.append(tuple(ins))
            self.wires.append(tuple(wire))
        self.n_legs = nxt
        self.targets = [g.targets for g in circuit.gates]
        self.m = [g.m for g in circuit.gates]
        self.sliced = [self._slice_inputs(k, self.data[k]) for k in range(len(self.data))]
        self.slegs = [tuple(leg for leg in self.legs[k] if leg >= n) for k in range(len(self.data))]
        self._variants: dict = {}

    def _slice_inputs(self, k, data):
        idx = tuple(0 if leg < self.n else slice(None) for leg in self.legs[k])
        return np.array(data[idx], dtype=complex, order="C")

    def variants(self, k) -> np.ndarray:
        """Input-sliced data of ``X^c G X^c`` for every local mask ``c``, stacked."""
        if k not in self._variants:
            m = self.m[k]
            out = []
            for c in range(1 << m):
                d = self.data[k]
                axes = set()
                for j in range(m):
                    if (c >> (m - 1 - j)) & 1:
                        axes.add(j)
                        axes.add(self.out_axis[k][j])
                if axes:
                    d = np.flip(d, axis=tuple(sorted(axes)))
                out.append(self._slice_inputs(k, d))
            self._variants[k] = np.stack(out)
        return self._variants[k]

    def slot_axis(self, k, q) -> int:
        """Axis of gate ``k``'s sliced tensor holding its output leg on qubit ``q``."""
        j = self.targets[k].index(q)
        leg = self.legs[k][self.out_axis[k][j]]
        return self.slegs[k].index(leg)


# -- planning -----------------------------------------------------------------


def greedy_plan(leg_sets: Sequence[frozenset], open_legs=frozenset(), budget: int = DEFAULT_BUDGET,
                strategy: str = "size", jitter: float = 0.0, seed: int = 0):
    """Deterministic greedy pairwise order over tensors given by their free legs.

    With ``strategy="size"`` a pair is scored by (result rank, union rank,
    smaller id, larger id). ``"reduce"`` ranks first by the change in stored
    entries, ``2^result - 2^a - 2^b``. A shared leg is summed once no other
    live tensor carries it and it is not open. Pieces that share no leg are
    joined last, smallest first.
    """
    if strategy not in ("size", "reduce"):
        raise ValueError(f"unknown planner strategy {strategy!r}")
    noise_rng = np.random.default_rng(seed) if jitter else None
    noise: dict = {}
    n0 = len(leg_sets)
    if n0 == 0:
        raise EmptyNetwork("network has no tensors")
    open_legs = frozenset(open_legs)
    alive = {i: frozenset(s) for i, s in enumerate(leg_sets)}
    where: dict = {}
    for i, s in alive.items():
        for leg in s:
            where.setdefault(leg, set()).add(i)

    def score(a, b):
        la, lb = alive[a], alive[b]
        union = la | lb
        summed = {l for l in la & lb if l not in open_legs and len(where[l]) == 2}
        rank = len(union) - len(summed)
        if strategy == "reduce":
            gain = (1 << rank) - (1 << len(la)) - (1 << len(lb))
            if noise_rng is not None:
                key = (min(a, b), max(a, b))
                if key not in noise:
                    noise[key] = float(noise_rng.gumbel())
                gain = gain - jitter * noise[key] * (1 << rank)
            return (gain, rank, len(union), min(a, b), max(a, b))
        return (rank, len(union), min(a, b), max(a, b))

    current: dict = {}
    heap: list = []

    def push(a, b):
        key = (min(a, b), max(a, b))
        s = score(*key)
        if current.get(key) != s:
            current[key] = s
            heapq.heappush(heap, s)

    for leg in sorted(where):
        for a, b in itertools.combinations(sorted(where[leg]), 2):
            push(a, b)

    steps, ranks, unions = [], [], []
    nxt = n0
    breach = False

    def merge(a, b, rank, union):
        nonlocal nxt
        la, lb = alive.pop(a), alive.pop(b)
        for l in la:
            where[l].discard(a)
        for l in lb:
            where[l].discard(b)
        res = frozenset(l for l in la | lb if l in open_legs or where[l])
        alive[nxt] = res
        for l in res:
            where[l].add(nxt)
        steps.append((a, b))
        ranks.append(rank)
        unions.append(union)
        nxt += 1
        return la | lb

    while heap:
        s = heapq.heappop(heap)
        key = (s[-2], s[-1])
        if current.get(key) != s or key[0] not in alive or key[1] not in alive:
            continue
        del current[key]
        rank, union = s[-4], s[-3]
        if rank > budget:
            if strategy == "reduce":
                fits = [v for v in current.values() if v[-4] <= budget
                        and v[-2] in alive and v[-1] in alive and score(v[-2], v[-1]) == v]
                if fits:
                    heapq.heappush(heap, s)
                    current[key] = s
                    s = min(fits)
                    key = (s[-2], s[-1])
                    del current[key]
                    rank, union = s[-4], s[-3]
                else:
                    breach = True
            else:
                breach = True
        touched = merge(key[0], key[1], rank, union)
        new = nxt - 1
        for leg in sorted(touched):
            ids = sorted(where.get(leg, ()))
            for a, b in itertools.combinations(ids, 2):
                push(a, b)
    # disconnected pieces
    while len(alive) > 1:
        a, b = sorted(alive, key=lambda i: (len(alive[i]), i))[:2]
        union = len(alive[a] | alive[b])
        if union > budget:
            breach = True
        merge(min(a, b), max(a, b), union, union)
    peak = max([len(s) for s in leg_sets] + ranks)
    cost = sum(1 << u for u in unions)
    return ContractionPlan(tuple(steps), n0, peak, cost, breach, (), tuple(ranks), tuple(unions))


SEARCH_TRIALS = 8
SEARCH_JITTER = 0.02
SEARCH_MIN_COST = 1 << 14


def search_plan(leg_sets, open_legs=frozenset(), budget: int = DEFAULT_BUDGET,
                trials: int = SEARCH_TRIALS, jitter: float = SEARCH_JITTER,
                min_cost: int = SEARCH_MIN_COST) -> ContractionPlan:
    """Cheapest of the two greedy scores plus seeded perturbed "reduce" runs.

    Perturbed runs are only tried when the best plain plan costs more than
    ``min_cost`` per entry. Seeds are fixed, so the result is deterministic.
    """
    cands = [greedy_plan(leg_sets, open_legs, budget, "size"),
             greedy_plan(leg_sets, open_legs, budget, "reduce")]
    if min(p.est_cost for p in cands) > min_cost:
        cands += [greedy_plan(leg_sets, open_legs, budget, "reduce", jitter, seed)
                  for seed in range(trials)]
    return min(cands, key=lambda p: (p.breach, p.est_cost))


PLANNERS = {
    "size": greedy_plan,
    "reduce": functools.partial(greedy_plan, strategy="reduce"),
    "search": search_plan,
}


def _choose_slices(leg_sets, open_legs, budget, cap_rank, planner=greedy_plan):
    sliced: list = []
    plan = planner(leg_sets, open_legs, budget)
    while plan.peak_rank > cap_rank:
        if len(sliced) >= MAX_SLICED_LEGS:
            raise RankBudgetExceeded(
                f"peak rank {plan.peak_rank} exceeds cap 2^{cap_rank} after slicing {len(sliced)} legs"
            )
        sets = list(leg_sets)
        live = [frozenset(s) for s in sets]
        counts: dict = {}
        for (a, b), r in zip(plan.steps, plan.step_ranks):
            res = live[a] | live[b]
            live.append(res)
            if r > cap_rank or len(res) > cap_rank:
                for l in res:
                    if l not in open_legs:
                        counts[l] = counts.get(l, 0) + 1
        if not counts:
            raise RankBudgetExceeded("oversized intermediate consists of open legs only")
        leg = min(counts, key=lambda l: (-counts[l], l))
        sliced.append(leg)
        leg_sets = [frozenset(s - {leg}) for s in leg_sets]
        plan = planner(leg_sets, open_legs, budget)
    plan.sliced_legs = tuple(sliced)
    return plan


def plan_contraction(network: TensorNetwork, budget: int = DEFAULT_BUDGET,
                     slice_cap: int | None = None) -> ContractionPlan:
    if budget < max((len(t.legs) for t in network.tensors), default=0):
        raise ValueError("budget is below the rank of an input tensor")
    if slice_cap is None:
        return greedy_plan(network.leg_sets(), frozenset(network.open_legs), budget)
    return _choose_slices(network.leg_sets(), frozenset(network.open_legs), budget,
                          int(slice_cap).bit_length() - 1)


def restrict_plan(full: ContractionPlan, keep: Sequence[int], leg_sets: Sequence[frozenset],
                  open_legs=frozenset()) -> ContractionPlan:
    """Replay ``full`` on the leaves listed in ``keep`` (full-plan ids, ascending).

    ``leg_sets[i]`` are the free legs of restricted leaf ``i`` (full leaf
    ``keep[i]``). Merges with a missing operand pass the other one through.
    """
    mapping: dict = {k: i for i, k in enumerate(keep)}
    alive = {i: frozenset(s) for i, s in enumerate(leg_sets)}
    if not alive:
        raise EmptyNetwork("restriction keeps no tensors")
    where: dict = {}
    for i, s in alive.items():
        for l in s:
            where.setdefault(l, set()).add(i)
    open_legs = frozenset(open_legs)
    steps, ranks, unions = [], [], []
    nxt = len(leg_sets)
    for i, (a, b) in enumerate(full.steps):
        pa, pb = mapping.get(a), mapping.get(b)
        c = full.n_leaves + i
        if pa is None or pb is None:
            if pa is not None or pb is not None:
                mapping[c] = pa if pa is not None else pb
            continue
        la, lb = alive.pop(pa), alive.pop(pb)
        for l in la:
            where[l].discard(pa)
        for l in lb:
            where[l].discard(pb)
        res = frozenset(l for l in la | lb if l in open_legs or where[l])
        alive[nxt] = res
        for l in res:
            where[l].add(nxt)
        steps.append((pa, pb))
        ranks.append(len(res))
        unions.append(len(la | lb))
        mapping[c] = nxt
        nxt += 1
    peak = max([len(s) for s in leg_sets] + ranks)
    return ContractionPlan(tuple(steps), len(leg_sets), peak, sum(1 << u for u in unions), False,
                           (), tuple(ranks), tuple(unions))


# -- execution ----------------------------------------------------------------


def _pair(a, b, keep_legs):
    """Contract two working tensors ``(legs, data, batched)``."""
    la, da, ba = a
    lb, db, bb = b
    sa, sb = set(la), set(lb)
    shared = [l for l in la if l in sb]
    keep = [l for l in shared if l in keep_legs]
    summed = [l for l in shared if l not in keep_legs]
    a_only = [l for l in la if l not in sb]
    b_only = [l for l in lb if l not in sa]
    K, S = 1 << len(keep), 1 << len(summed)
    LA, LB = 1 << len(a_only), 1 << len(b_only)
    oa, ob = int(ba), int(bb)
    pa = [la.index(l) + oa for l in keep + a_only + summed]
    pb = [lb.index(l) + ob for l in keep + summed + b_only]
    out_legs = tuple(keep + a_only + b_only)
    rank_shape = (2,) * len(out_legs)
    if ba and bb:
        E = da.shape[0]
        A = da.transpose([0] + pa).reshape(E, K, LA, S)
        B = db.transpose([0] + pb).reshape(E, K, S, LB)
        return out_legs, np.matmul(A, B).reshape((E,) + rank_shape), True
    if not ba and not bb:
        A = da.transpose(pa).reshape(K, LA, S)
        B = db.transpose(pb).reshape(K, S, LB)
        return out_legs, np.matmul(A, B).reshape(rank_shape), False
    if ba:
        E = da.shape[0]
        A = da.transpose([1 + i - 1 for i in pa[:len(keep)]] + [0] +
                         [i for i in pa[len(keep):]]).reshape(K, E * LA, S)
        B = db.transpose(pb).reshape(K, S, LB)
        R = np.matmul(A, B).reshape(K, E, LA, LB).transpose(1, 0, 2, 3)
        return out_legs, R.reshape((E,) + rank_shape), True
    E = db.shape[0]
    A = da.transpose(pa).reshape(K, LA, S)
    B = db.transpose(pb[:len(keep)] + pb[len(keep):len(keep) + len(summed)] + [0] +
                     pb[len(keep) + len(summed):]).reshape(K, S, E * LB)
    R = np.matmul(A, B).reshape(K, LA, E, LB).transpose(2, 0, 1, 3)
    return out_legs, R.reshape((E,) + rank_shape), True


def _keep_sets(plan: ContractionPlan, leaf_legs, open_legs):
    """Legs each step must keep: open, or still carried by another live tensor."""
    live = [set(l) for l in leaf_legs]
    alive = set(range(len(live)))
    count: dict = {}
    for i in alive:
        for l in live[i]:
            count[l] = count.get(l, 0) + 1
    keeps = []
    for a, b in plan.steps:
        shared = live[a] & live[b]
        for l in live[a]:
            count[l] -= 1
        for l in live[b]:
            count[l] -= 1
        keep = frozenset(l for l in shared if l in open_legs or count[l] > 0)
        res = (live[a] | live[b]) - (shared - keep)
        for l in res:
            count[l] = count.get(l, 0) + 1
        live.append(res)
        keeps.append(keep)
    return keeps


def _live_peak(plan: ContractionPlan, batched) -> int:
    """Most per-entry elements held at once by batched intermediates.

    Counts the live intermediates plus the new result and the two operand
    copies a step makes.
    """
    n0 = plan.n_leaves
    live, cur, top = {}, 0, 1
    for i, (a, b) in enumerate(plan.steps):
        if not batched[n0 + i]:
            continue
        r = 1 << plan.step_ranks[i]
        ops = live.pop(a, 0) + live.pop(b, 0)
        top = max(top, cur + r + 2 * max(ops, r))
        cur += r - ops
        live[n0 + i] = r
    return top


def run_plan(plan: ContractionPlan, leaves: list, open_legs, keeps=None, static_cache=None,
             memory_cap: int = DEFAULT_MEMORY_CAP):
    """Execute ``plan`` on leaves ``(legs, data, batched)``; returns the root tensor.

    Steps whose operands are both unbatched are evaluated once (and stored in
    ``static_cache`` when given); the rest run over batch chunks sized so no
    intermediate exceeds ``memory_cap`` entries.
    """
    open_legs = frozenset(open_legs)
    if keeps is None:
        keeps = _keep_sets(plan, [l[0] for l in leaves], open_legs)
    n0 = plan.n_leaves
    batched = [l[2] for l in leaves]
    for a, b in plan.steps:
        batched.append(batched[a] or batched[b])
    work: dict = dict(enumerate(leaves))
    for i, (a, b) in enumerate(plan.steps):
        if batched[n0 + i]:
            continue
        if static_cache is not None and i in static_cache:
            work[n0 + i] = static_cache[i]
        else:
            work[n0 + i] = _pair(work[a], work[b], keeps[i])
            if static_cache is not None:
                static_cache[i] = work[n0 + i]
    root = n0 + len(plan.steps) - 1 if plan.steps else 0
    if not batched[root]:
        return work[root]
    E = next(l[1].shape[0] for l in leaves if l[2])
    chunk = max(1, memory_cap // _live_peak(plan, batched))
    if chunk >= E:
        for i, (a, b) in enumerate(plan.steps):
            if batched[n0 + i]:
                work[n0 + i] = _pair(work[a], work[b], keeps[i])
                work[a] = work[b] = None
        return work[root]
    parts = []
    for lo in range(0, E, chunk):
        w = {k: (v if not v[2] else (v[0], v[1][lo:lo + chunk], True))
             for k, v in work.items() if v is not None and (k < n0 or not batched[k])}
        for i, (a, b) in enumerate(plan.steps):
            if batched[n0 + i]:
                w[n0 + i] = _pair(w[a], w[b], keeps[i])
                w[a] = w[b] = None
        parts.append(w[root])
    return parts[0][0], np.concatenate([p[1] for p in parts]), True


def _fix_axes(data, batched, axes, values):
    """Gather ``data`` at per-entry ``values`` on ``axes``; result is batched."""
    if not axes:
        return data, batched
    r = data.ndim - int(batched)
    off = int(batched)
    rest = [i for i in range(r) if i not in axes]
    if batched:
        d = data.transpose([0] + [a + off for a in axes] + [a + off for a in rest])
        E = values[0].shape[0]
        return d[(np.arange(E),) + tuple(values)], True
    d = data.transpose(list(axes) + rest)
    return d[tuple(values)], True


def _slice_leaf(legs, data, batched, leg, val):
    if leg not in legs:
        return legs, data
    ax = legs.index(leg) + int(batched)
    idx = [slice(None)] * data.ndim
    idx[ax] = val
    return tuple(l for l in legs if l != leg), data[tuple(idx)]


def contract_tensor(network: TensorNetwork, plan: ContractionPlan,
                    memory_cap: int = DEFAULT_MEMORY_CAP) -> np.ndarray:
    """Contract to an array over ``network.open_legs`` (in that order)."""
    leaves = [(tuple(t.legs), np.asarray(t.data, dtype=complex), False) for t in network.tensors]
    return _execute(plan, leaves, tuple(network.open_legs), memory_cap)


def _execute(plan, leaves, open_legs, memory_cap=DEFAULT_MEMORY_CAP, static_cache=None, keeps=None):
    if plan.sliced_legs:
        total = None
        for vals in itertools.product((0, 1), repeat=len(plan.sliced_legs)):
            sl = []
            for legs, data, bt in leaves:
                for leg, v in zip(plan.sliced_legs, vals):
                    legs, data = _slice_leaf(legs, data, bt, leg, v)
                sl.append((legs, data, bt))
            part = _finish(run_plan(plan, sl, open_legs, None, None, memory_cap), open_legs)
            total = part if total is None else total + part
        return total
    return _finish(run_plan(plan, leaves, open_legs, keeps, static_cache, memory_cap), open_legs)


def _finish(root, open_legs):
    legs, data, batched = root
    perm = [legs.index(l) + int(batched) for l in open_legs]
    if batched:
        perm = [0] + perm
    return data.transpose(perm) if perm else data


def contract(network: TensorNetwork, plan: ContractionPlan,
             memory_cap: int = DEFAULT_MEMORY_CAP) -> complex:
    if network.open_legs:
        raise UnassignedOpenLeg(f"open legs {network.open_legs} must be assigned before contraction")
    return complex(contract_tensor(network, plan, memory_cap))


# -- building networks ----------------------------------------------------------


def build_network(circuit: Circuit, output_bits: str | None = None,
                  identify_diagonal: bool = True) -> TensorNetwork:
    """Network for ``<x|C|0^n>``; output legs fixed to ``output_bits`` or left open."""
    sk = Skeleton(circuit, identify_diagonal)
    n = circuit.n_qubits
    wires = sk.wires[-1]
    if output_bits is not None and len(output_bits) != n:
        raise ValueError(f"expected {n} output bits, got {len(output_bits)}")
    fixed = {}
    if output_bits is not None:
        fixed = {wires[q]: int(output_bits[q]) for q in range(n) if wires[q] >= n}
    tensors = []
    for k in range(len(circuit)):
        legs, data = sk.slegs[k], sk.sliced[k]
        for leg in [l for l in legs if l in fixed]:
            legs, data = _slice_leaf(legs, data, False, leg, fixed[leg])
        tensors.append(Tensor(legs, data))
    open_legs, open_qubits = [], []
    fresh = sk.n_legs
    for q in range(n):
        if wires[q] >= n:
            if output_bits is None:
                open_legs.append(wires[q])
                open_qubits.append(q)
            continue
        if output_bits is None:
            tensors.append(Tensor((fresh,), np.array([1.0, 0.0], dtype=complex)))
            open_legs.append(fresh)
            open_qubits.append(q)
            fresh += 1
        else:
            tensors.append(Tensor((), np.array(1.0 if output_bits[q] == "0" else 0.0, dtype=complex)))
    return TensorNetwork(tensors, tuple(open_legs), tuple(open_qubits))


def fuse_vectors(network: TensorNetwork) -> TensorNetwork:
    """Absorb rank-1 tensors into a neighbour, then fold scalars.

    A vector multiplies elementwise into the highest-rank other tensor carrying
    its leg (lowest id on ties), which is valid for shared hyperedge legs too;
    the leg is summed away when that tensor was its only other carrier.
    Scalars are folded into the first remaining tensor of nonzero rank, or into
    one scalar when nothing else is left.
    """
    tensors = [Tensor(t.legs, t.data) for t in network.tensors]
    alive = list(range(len(tensors)))
    changed = True
    while changed:
        changed = False
        for i in list(alive):
            t = tensors[i]
            if len(t.legs) != 1:
                continue
            leg = t.legs[0]
            hosts = [j for j in alive if j != i and leg in tensors[j].legs]
            if not hosts:
                continue
            j = min(hosts, key=lambda h: (-len(tensors[h].legs), h))
            h = tensors[j]
            ax = h.legs.index(leg)
            shape = [1] * h.data.ndim
            shape[ax] = 2
            data = h.data * t.data.reshape(shape)
            alive.remove(i)
            if leg not in network.open_legs and len(hosts) == 1:
                # the host was the leg's last other carrier, so the leg closes here
                tensors[j] = Tensor(h.legs[:ax] + h.legs[ax + 1:], data.sum(axis=ax))
            else:
                tensors[j] = Tensor(h.legs, data)
            changed = True
    scalars = [i for i in alive if not tensors[i].legs]
    ranked = [i for i in alive if tensors[i].legs]
    if scalars and (ranked or len(scalars) > 1):
        factor = np.prod([complex(tensors[i].data) for i in scalars])
        if ranked:
            tensors[ranked[0]] = Tensor(tensors[ranked[0]].legs, tensors[ranked[0]].data * factor)
            alive = ranked
        else:
            tensors[scalars[0]] = Tensor((), np.array(factor, dtype=complex))
            alive = scalars[:1]
    return TensorNetwork([tensors[i] for i in alive], network.open_legs, network.open_qubits)


def network_graph(network: TensorNetwork):
    """Bipartite tensor/leg incidence graph (networkx) for structural comparison."""
    import networkx as nx

    g = nx.Graph()
    for i, t in enumerate(network.tensors):
        g.add_node(("t", i), kind="tensor", rank=len(t.legs))
        for leg in t.legs:
            g.add_node(("l", leg), kind="leg")
            g.add_edge(("t", i), ("l", leg))
    return g


# -- the cached amplitude engine --------------------------------------------------


@dataclass
class Layout:
    t: int
    open_qubits: tuple
    leaf_gates: tuple  # gate index per gate leaf
    leaf_legs: list  # free legs per leaf (gate leaves then open-consistency leaves)
    fixed_axes: list  # per gate leaf: axes fixed per entry
    fixed_qubits: list  # per gate leaf: qubits supplying those values
    cons_open: tuple  # qubits on the input leg whose output is open
    cons_fixed: tuple  # qubits on the input leg whose output is fixed
    open_legs: tuple
    plan: ContractionPlan
    keeps: list = field(default_factory=list)
    static_cache: dict = field(default_factory=dict)


class AmplitudeEngine:
    """Batched amplitudes of the prefixes of one root circuit."""

    def __init__(self, circuit: Circuit, budget: int = DEFAULT_BUDGET,
                 memory_cap: int = DEFAULT_MEMORY_CAP, slice_cap: int = DEFAULT_SLICE_CAP,
                 planner: str = "search"):
        if planner not in PLANNERS:
            raise ValueError(f"unknown planner {planner!r}")
        self.circuit = circuit
        self.planner = planner
        self.n = circuit.n_qubits
        self.skeleton = Skeleton(circuit)
        self.budget = budget
        self.memory_cap = memory_cap
        self.slice_cap = slice_cap
        self._layouts: dict = {}
        self._states: dict = {}
        self._lock = threading.Lock()

    def layout(self, t: int, open_qubits: tuple = ()) -> Layout:
        key = (t, tuple(open_qubits))
        lay = self._layouts.get(key)
        if lay is None:
            lay = self._build_layout(t, tuple(open_qubits))
            with self._lock:
                lay = self._layouts.setdefault(key, lay)
        return lay

    def _build_layout(self, t, open_qubits):
        sk, n = self.skeleton, self.n
        wires = sk.wires[t]
        open_set = set(open_qubits)
        fixed = {wires[q]: q for q in range(n) if wires[q] >= n and q not in open_set}
        leaf_gates, leaf_legs, fixed_axes, fixed_qubits = [], [], [], []
        for k in range(t):
            legs = sk.slegs[k]
            axes = tuple(i for i, l in enumerate(legs) if l in fixed)
            leaf_gates.append(k)
            leaf_legs.append(frozenset(l for l in legs if l not in fixed))
            fixed_axes.append(axes)
            fixed_qubits.append(tuple(fixed[legs[i]] for i in axes))
        cons_open = tuple(q for q in open_qubits if wires[q] < n)
        cons_fixed = tuple(q for q in range(n) if wires[q] < n and q not in open_set)
        open_legs = []
        for q in open_qubits:
            open_legs.append(wires[q] if wires[q] >= n else -1 - q)
        for q in cons_open:
            leaf_legs.append(frozenset([-1 - q]))
        if not leaf_legs:
            plan = ContractionPlan((), 0, 0, 0)
        else:
            plan = _choose_slices(leaf_legs, frozenset(open_legs), self.budget,
                                  int(self.slice_cap).bit_length() - 1, PLANNERS[self.planner])
        lay = Layout(t, open_qubits, tuple(leaf_gates), leaf_legs, fixed_axes, fixed_qubits,
                     cons_open, cons_fixed, tuple(open_legs), plan)
        if plan.steps and not plan.sliced_legs:
            lay.keeps = _keep_sets(plan, leaf_legs, frozenset(open_legs))
        return lay

    def amplitudes(self, t: int, xs, open_qubits: Sequence[int] = (), overrides=None,
                   cache_static: bool | None = None) -> np.ndarray:
        """Amplitudes of prefix ``t`` with per-entry bits ``xs`` (E, n).

        Output qubits in ``open_qubits`` are left open, giving shape
        ``(E, 2**len(open_qubits))`` in big-endian order of ``open_qubits``;
        with none open the shape is ``(E,)``. ``overrides`` maps gate index
        to ``(data, batched)`` replacing the input-sliced gate tensor.
        ``xs=None`` is allowed when every qubit is open.
        """
        lay = self.layout(t, tuple(open_qubits))
        sk = self.skeleton
        if xs is not None:
            xs = np.asarray(xs, dtype=np.uint8)
            E = xs.shape[0]
            if E == 0:
                return np.zeros((0,) + ((1 << len(open_qubits)),) * bool(open_qubits), complex)
        elif len(open_qubits) != self.n:
            raise UnassignedOpenLeg("bits are required unless every output is open")
        overrides = overrides or {}
        leaves = []
        for i, k in enumerate(lay.leaf_gates):
            data, bt = overrides.get(k, (sk.sliced[k], False))
            if lay.fixed_axes[i]:
                vals = [xs[:, q].astype(np.intp) for q in lay.fixed_qubits[i]]
                data, bt = _fix_axes(data, bt, lay.fixed_axes[i], vals)
            leaves.append((tuple(l for j, l in enumerate(sk.slegs[k]) if j not in lay.fixed_axes[i]),
                           data, bt))
        for q in lay.cons_open:
            leaves.append(((-1 - q,), np.array([1.0, 0.0], dtype=complex), False))
        if cache_static is None:
            cache_static = not overrides
        if leaves:
            out = _execute(lay.plan, leaves, lay.open_legs, self.memory_cap,
                           lay.static_cache if cache_static and not lay.plan.sliced_legs else None,
                           lay.keeps or None)
            batched_out = out.ndim > len(lay.open_legs)
        else:
            out, batched_out = np.array(1.0 + 0j), False
        if xs is None:
            return out.reshape(-1)
        if not batched_out:
            out = np.broadcast_to(out, (E,) + out.shape)
        out = np.asarray(out, dtype=complex).reshape(E, -1) if open_qubits else \
            np.asarray(out, dtype=complex).reshape(E)
        if lay.cons_fixed:
            ok = ~xs[:, list(lay.cons_fixed)].any(axis=1)
            out = out * (ok[:, None] if open_qubits else ok)
        return out

    def prefix_state(self, t: int) -> np.ndarray:
        """Full ``C_t|0^n>`` by contracting with every output open (cached)."""
        st = self._states.get(t)
        if st is None:
            st = self.amplitudes(t, None, tuple(range(self.n)))
            st.setflags(write=False)
            with self._lock:
                st = self._states.setdefault(t, st)
        return st

    def drop_states(self):
        self._states.clear()


def get_engine(circuit: Circuit) -> AmplitudeEngine:
    root = circuit.root
    eng = root._cache.get("engine")
    if eng is None:
        eng = root._cache.setdefault("engine", AmplitudeEngine(root))
    return eng


def _bits_array(xs, n):
    arr = np.zeros((len(xs), n), dtype=np.uint8)
    for i, x in enumerate(xs):
        if len(x) != n:
            raise ValueError(f"bitstring {x!r} does not have length {n}")
        arr[i] = np.frombuffer(x.encode(), dtype=np.uint8) - 48
    return arr


def amp(prefix: Circuit, x: str) -> complex:
    return multi_amp(prefix, [x])[0]


def multi_amp(prefix: Circuit, xs: Sequence[str]) -> list:
    n = prefix.n_qubits
    xs = list(xs)
    if n == 0:
        return [1.0 + 0j for _ in xs]
    eng = get_engine(prefix)
    return [complex(a) for a in eng.amplitudes(len(prefix), _bits_array(xs, n))]
