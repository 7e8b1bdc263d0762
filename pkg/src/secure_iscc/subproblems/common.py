"""Shared result container and helpers for the block solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from ..conic import ConicProblem, dump_problem
from ..config import ScenarioConfig

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
KEPT = "kept-incoming"
SKIPPED = "skipped"
FAILED = "solver-failure"


@dataclass
class BlockResult:
    """Outcome of one block update.

    ``status`` is ``optimal`` when the block produced a new point,
    ``kept-incoming`` when the new point was not better than the incoming
    one, ``infeasible`` with a ``report`` naming the violated constraint, or
    ``solver-failure``.
    """

    status: str
    objective: float = np.nan
    report: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, KEPT, SKIPPED)


def compute_energy_per_ratio(cfg: ScenarioConfig) -> np.ndarray:
    """UAV computing energy for offloading the whole task of each user (K,)."""
    return cfg.cpu_eff * cfg.cycles_uav * cfg.cpu_uav**2 * cfg.D


def local_energy_per_ratio(cfg: ScenarioConfig) -> np.ndarray:
    """Local computing energy of each user's whole task (K,)."""
    return cfg.cpu_eff * cfg.D * cfg.F * cfg.f**2


def slot_capacity(rate, k, cfg: ScenarioConfig):
    """Largest offload ratio one slot can absorb: upload plus UAV compute within a slot."""
    rate = np.asarray(rate, dtype=float)
    D = cfg.D[k]
    with np.errstate(divide="ignore"):
        per_ratio = np.where(rate > 0, D / (cfg.bandwidth * rate), np.inf) + D * cfg.cycles_uav / cfg.cpu_uav
    return np.minimum(1.0, cfg.slot_len / per_ratio)


def maybe_dump(problem: ConicProblem, sink: Optional[TextIO], label: str) -> None:
    if sink is not None:
        sink.write(f"# {label}\n")
        dump_problem(problem, sink)


def beam_vectors(W, rtol: float = 1e-6):
    """Principal beam vector of each covariance and a flag for rank above one.

    Returns ``(beams (N, M), rank_flags (N,))``; zero covariances give zero
    vectors and no flag.
    """
    W = np.asarray(W)
    N, M, _ = W.shape
    beams = np.zeros((N, M), dtype=complex)
    flags = np.zeros(N, dtype=bool)
    for n in range(N):
        lam, vec = np.linalg.eigh(W[n])
        if lam[-1] <= 0:
            continue
        beams[n] = np.sqrt(lam[-1]) * vec[:, -1]
        flags[n] = lam[-2] > rtol * lam[-1] if M > 1 else False
    return beams, flags
