"""QAOA circuits for Ising models with fixed parameter schedules.

Layer ``k`` applies ``RZZ(4 gamma_k w_e)`` on every stored edge, ``RZ(2 gamma_k h_i)``
on every qubit and ``RX(2 beta_k)`` on every qubit. Because the energy counts each
edge twice, ``4 gamma w`` is what makes the cost layer multiply ``|x>`` by
``exp(-i gamma E(x))`` exactly (no global phase).

With the mixer ``RX(2 beta)`` and the ``|+>`` start, positive gammas and betas
push weight toward high energies. ``minimizing_schedule`` (used by
``qaoa_circuit`` and the command line) flips the sign of the gamma ramp so the
state concentrates on low energies; flipping beta instead gives the conjugate
state and the same distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gates as G
from .circuit import Circuit
from .problems import IsingModel

MAX_DEFAULT_P = 16


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class QaoaParams:
    p: int
    gammas: tuple
    betas: tuple

    def __post_init__(self):
        if self.p < 1:
            raise OutOfRange("p must be at least 1")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != self.p or len(self.betas) != self.p:
            raise ValueError(f"need {self.p} gammas and betas, got {len(self.gammas)}/{len(self.betas)}")


def default_schedule(p: int, dgamma: float = 0.7, dbeta: float = 0.7) -> QaoaParams:
    """Linear ramp: ``gamma_k = (k - 1/2) dgamma / p``, ``beta_k = (1 - (k - 1/2)/p) dbeta``."""
    if not 1 <= p <= MAX_DEFAULT_P:
        raise OutOfRange(f"default schedule defined for 1 <= p <= {MAX_DEFAULT_P}")
    k = np.arange(1, p + 1) - 0.5
    return QaoaParams(p, tuple(k * dgamma / p), tuple((1 - k / p) * dbeta))


def minimizing_schedule(p: int, dgamma: float = 0.7, dbeta: float = 0.7) -> QaoaParams:
    """The linear ramp with ``gamma_k -> -gamma_k``."""
    return default_schedule(p, -dgamma, dbeta)


def cost_layer(model: IsingModel, gamma: float) -> list:
    out = [G.rzz(4.0 * gamma * w, a, b) for (a, b), w in zip(model.graph.edges, model.weights)]
    out += [G.rz(2.0 * gamma * model.h[i], i) for i in range(model.n)]
    return out


def build_qaoa(model: IsingModel, params: QaoaParams) -> Circuit:
    gates = [G.h(q) for q in range(model.n)]
    for gamma, beta in zip(params.gammas, params.betas):
        gates += cost_layer(model, gamma)
        gates += [G.rx(2.0 * beta, q) for q in range(model.n)]
    return Circuit(model.n, gates)


def qaoa_circuit(model: IsingModel, p: int, gammas=None, betas=None) -> Circuit:
    """Energy-minimizing QAOA; missing angles come from ``minimizing_schedule``."""
    sched = minimizing_schedule(p)
    params = QaoaParams(p, gammas if gammas is not None else sched.gammas,
                        betas if betas is not None else sched.betas)
    return build_qaoa(model, params)
