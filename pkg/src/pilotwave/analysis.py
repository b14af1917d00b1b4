"""Sample statistics and experiment drivers.

Energy histograms, effective inverse temperature fits on the low-energy tail,
ground-state probability estimates with a hit-count stopping rule, best-of-batch
comparisons against classical baselines and wall-clock timing sweeps.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines as B
from .noise import insert_noise, NoiseModel, noisy_sample_arrays, standard_model
from .problems import IsingModel, energies, gaussian_ising, topology_for_size
from .qaoa import qaoa_circuit
from .sampler import sample_arrays

GS_SAMPLE_CAP = 10**8
DEFAULT_WINDOW = 0.25
MIN_LEVELS = 5


class InsufficientDistinctStates(ValueError):
    pass


# -- histograms ------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        if int(np.sum(self.counts)) != self.total:
            raise ValueError("counts do not sum to total")

    @property
    def normalized(self) -> np.ndarray:
        return self.counts / self.total if self.total else np.zeros(len(self.counts))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lo", "hi", "count", "fraction"])
        for lo, hi, c, f in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts, self.normalized):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(f))])
        return buf.getvalue()


def energy_histogram(values, bins=50) -> EnergyHistogram:
    """Histogram of energies; every value falls in some bin (the last bin is closed)."""
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    return EnergyHistogram(edges, counts.astype(np.int64), int(len(values)))


# -- state counting ----------------------------------------------------------------------


def as_bit_array(samples, n: int | None = None) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples.astype(np.uint8, copy=False)
    rows = list(samples)
    if not rows:
        return np.zeros((0, n or 0), dtype=np.uint8)
    return np.frombuffer("".join(rows).encode(), dtype=np.uint8).reshape(len(rows), -1) - 48


def count_states(bits: np.ndarray):
    """Distinct rows of a ``(K, n)`` 0/1 array and their multiplicities."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[1] <= 63:
        w = np.uint64(1) << np.arange(bits.shape[1] - 1, -1, -1, dtype=np.uint64)
        keys, first, counts = np.unique(bits.astype(np.uint64) @ w, return_index=True, return_counts=True)
        return bits[first], counts
    rows, counts = np.unique(bits, axis=0, return_counts=True)
    return rows, counts


def _quantile_threshold(e: np.ndarray, w: np.ndarray, q: float) -> float:
    # inverse empirical CDF of the energies ``e`` with weights ``w``
    order = np.argsort(e, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, q * cum[-1], side="left"))
    return float(e[order][min(k, len(e) - 1)])


# -- effective temperature -----------------------------------------------------------------


@dataclass(frozen=True)
class BetaFit:
    beta: float
    window: tuple
    r2: float
    n_states: int
    n_levels: int
    intercept: float = field(default=0.0, compare=False)


def fit_beta_counts(rows: np.ndarray, counts: np.ndarray, model: IsingModel, total: int | None = None,
                    window_quantile: float = DEFAULT_WINDOW) -> BetaFit:
    """Fit ``log(frequency) = a - beta E`` over distinct states in the low-energy tail.

    The tail holds the states with energy at or below the ``window_quantile``
    quantile of the sample energies. When that leaves fewer than ``MIN_LEVELS``
    distinct energies (a cold distribution whose ground state carries most of
    the mass) the window is widened to the ``MIN_LEVELS`` lowest observed
    levels. Points are weighted by their counts.
    """
    if not 0 < window_quantile <= 0.5:
        raise ValueError("window_quantile must lie in (0, 0.5]")
    counts = np.asarray(counts, dtype=float)
    if len(counts) == 0:
        raise InsufficientDistinctStates("no samples")
    total = float(counts.sum()) if total is None else float(total)
    e = energies(model, rows)
    scale = 1e-9 * (1.0 + np.abs(e).max())
    thr = _quantile_threshold(e, counts, window_quantile)
    keys = np.unique(np.round(e / scale))
    if (keys <= np.round(thr / scale)).sum() < MIN_LEVELS:
        if len(keys) < MIN_LEVELS:
            raise InsufficientDistinctStates(f"only {len(keys)} distinct energy levels (need {MIN_LEVELS})")
        thr = float(keys[MIN_LEVELS - 1] * scale)
    sel = e <= thr + scale
    x, c = e[sel], counts[sel]
    levels = len(np.unique(np.round(x / scale)))
    y = np.log(c / total)
    W = c.sum()
    xm, ym = (c @ x) / W, (c @ y) / W
    sxx = c @ (x - xm) ** 2
    slope = (c @ ((x - xm) * (y - ym))) / sxx
    icpt = ym - slope * xm
    ss_res = c @ (y - icpt - slope * x) ** 2
    ss_tot = c @ (y - ym) ** 2
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return BetaFit(float(-slope), (float(x.min()), float(thr)), float(r2), int(sel.sum()), levels, float(icpt))


def fit_beta(samples, model: IsingModel, window_quantile: float = DEFAULT_WINDOW) -> BetaFit:
    bits = as_bit_array(samples, model.n)
    if len(bits) == 0:
        raise InsufficientDistinctStates("no samples")
    rows, counts = count_states(bits)
    return fit_beta_counts(rows, counts, model, len(bits), window_quantile)


# -- ground-state probability -----------------------------------------------------------------


@dataclass(frozen=True)
class GsEstimate:
    estimate: float
    hits: int
    samples_used: int
    truncated: bool


def gs_probability(sample_stream, gs_energy: float, model: IsingModel, min_hits: int = 10,
                   cap: int = GS_SAMPLE_CAP, tol: float = 1e-9) -> GsEstimate:
    """Consume samples until ``min_hits`` ground-energy hits or ``cap`` samples.

    ``sample_stream`` yields bitstrings or ``(k, n)`` arrays. When the stream
    stops at the ``r``-th hit after ``N`` samples the estimate is
    ``(r - 1) / (N - 1)``, the unbiased estimator for this stopping rule
    (``r / N`` overestimates by roughly ``1 / (r - 1)``). With ``min_hits < 2``
    or on truncation it is ``hits / N``.
    """
    if min_hits < 1:
        raise ValueError("min_hits must be positive")
    thr = gs_energy + tol * (1.0 + abs(gs_energy))
    hits = used = 0
    for chunk in sample_stream:
        bits = as_bit_array([chunk] if isinstance(chunk, str) else chunk, model.n)
        bits = bits[: cap - used]
        if len(bits) == 0:
            break
        hit_idx = np.flatnonzero(energies(model, bits) <= thr)
        need = min_hits - hits
        if len(hit_idx) >= need:
            used += int(hit_idx[need - 1]) + 1
            hits = min_hits
            break
        hits += len(hit_idx)
        used += len(bits)
        if used >= cap:
            break
    done = hits >= min_hits
    if done and min_hits >= 2:
        est = (hits - 1) / (used - 1)
    else:
        est = hits / used if used else 0.0
    return GsEstimate(float(est), hits, used, not done)


# -- algorithm comparison ------------------------------------------------------------------------


@dataclass(frozen=True)
class Algorithm:
    kind: str
    p: int = 1
    noisy: bool = False
    steps: int = 1
    sweeps: int = B.ANNEAL_SWEEPS

    @property
    def name(self) -> str:
        if self.kind == "qaoa":
            return f"qaoa:p={self.p}" + (":noisy" if self.noisy else "")
        if self.kind == "hastings":
            return f"hastings:steps={self.steps}"
        if self.kind == "anneal":
            return f"anneal:sweeps={self.sweeps}"
        return self.kind


def parse_algorithm(text: str) -> Algorithm:
    """``qaoa:p=1[:noisy]``, ``hastings:steps=1``, ``uniform`` or ``anneal[:sweeps=200]``."""
    kind, *parts = text.strip().split(":")
    if kind not in ("qaoa", "hastings", "uniform", "anneal"):
        raise ValueError(f"unknown algorithm {kind!r}")
    kw = {}
    for part in parts:
        if part == "noisy":
            kw["noisy"] = True
            continue
        key, _, val = part.partition("=")
        if key not in ("p", "steps", "sweeps") or not val:
            raise ValueError(f"bad algorithm option {part!r}")
        kw[key] = int(val)
    return Algorithm(kind, **kw)


def draw_samples(alg: Algorithm, model: IsingModel, K: int, seed: int, workers: int = 1,
                 noise_model: NoiseModel | None = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if alg.kind == "uniform":
        return B.uniform_batch(model.n, K, rng)
    if alg.kind == "hastings":
        return B.hastings_batch(model, K, alg.steps, B.HASTINGS_C, rng)
    if alg.kind == "anneal":
        return B.anneal_batch(model, K, alg.sweeps, None, rng)
    circ = qaoa_circuit(model, alg.p)
    master = int(rng.integers(0, 2**63))
    if alg.noisy:
        noisy = insert_noise(circ, noise_model or standard_model())
        return noisy_sample_arrays(noisy, K, master, workers)[1]
    return sample_arrays(circ, K, master, workers)[1]


def compare_experiment(model: IsingModel, algorithms, repetitions: int = 4000, batch: int = 100,
                       seed: int = 0, workers: int = 1, noise_model: NoiseModel | None = None) -> dict:
    """Best-of-``batch`` energies over ``repetitions`` batches, per algorithm name."""
    out = {}
    for i, alg in enumerate(algorithms):
        alg = parse_algorithm(alg) if isinstance(alg, str) else alg
        s = int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])
        bits = draw_samples(alg, model, repetitions * batch, s, workers, noise_model)
        out[alg.name] = B.best_of_batches(model, bits, batch)[0]
    return out


def compare_table(results: dict) -> list:
    rows = []
    for name, best in results.items():
        best = np.asarray(best, dtype=float)
        sd = float(best.std(ddof=1)) if len(best) > 1 else 0.0
        rows.append({"algorithm": name, "repetitions": len(best), "mean": float(best.mean()), "std": sd,
                     "se": float(sd / np.sqrt(len(best))), "min": float(best.min()), "max": float(best.max())})
    return rows


def ks_statistic(a, b) -> float:
    from scipy.stats import ks_2samp

    return float(ks_2samp(a, b).statistic)


def best_energy_csv(results: dict) -> str:
    """Long format: one ``algorithm,repetition,best_energy`` row per batch."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "repetition", "best_energy"])
    for name, best in results.items():
        for r, e in enumerate(best):
            w.writerow([name, r, repr(float(e))])
    return buf.getvalue()


# -- timing ----------------------------------------------------------------------------------------


def timing_sweep(topologies, sizes, p: int = 1, batch: int = 100, noise_model: NoiseModel | None = None,
                 instances: int = 10, seed: int = 0, workers: int = 1) -> list:
    """Mean wall-clock time to produce one batch, over fresh Gaussian instances.

    Each timing covers circuit construction, contraction planning and sampling.
    """
    rows = []
    for topo in topologies:
        for size in sizes:
            times, n_q, n_e = [], 0, 0
            for inst in range(instances):
                graph = topology_for_size(topo, size, seed + inst)
                model = gaussian_ising(graph, [seed, inst, size])
                n_q, n_e = graph.n, len(graph.edges)
                t0 = time.perf_counter()
                circ = qaoa_circuit(model, p)
                if noise_model is not None:
                    noisy_sample_arrays(insert_noise(circ, noise_model), batch, seed + inst, workers)
                else:
                    sample_arrays(circ, batch, seed + inst, workers)
                times.append(time.perf_counter() - t0)
            t = np.array(times)
            rows.append({"topology": topo, "size": size, "n": n_q, "edges": n_e, "p": p, "batch": batch,
                         "noisy": noise_model is not None, "instances": instances,
                         "mean_s": float(t.mean()), "std_s": float(t.std(ddof=1)) if instances > 1 else 0.0})
    return rows


def rows_to_csv(rows: list) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
