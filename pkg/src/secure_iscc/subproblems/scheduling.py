"""Scheduling block: relaxed assignment LP followed by per-slot rounding.

The relaxation lifts each eligible (user, slot) pair into an activation
weight ``theta`` and an offloaded share ``x <= cap * theta``. Each slot
holds at most one unit of activation and each user offloads at most its
whole task, while the UAV budget charges both the slot's beam energy and
the computing energy of the offloaded share. Rounding keeps the largest
activation per slot; the offload block then re-optimises the ratios.
"""

from __future__ import annotations

from typing import Optional, TextIO

import numpy as np

from ..conic import PRIMAL_INFEASIBLE, Affine, ConicBuilder, solve_conic
from ..config import ScenarioConfig
from ..model import EveRegion, SolutionState, fly_energy, objective
from .common import (
    FAILED,
    INFEASIBLE,
    KEPT,
    OPTIMAL,
    BlockResult,
    beam_vectors,
    compute_energy_per_ratio,
    local_energy_per_ratio,
    maybe_dump,
    slot_capacity,
)
from .eligibility import pair_beams
from .geometry import SlotGeometry
from .offload import solve_offload_lp

# the rounded schedule is re-validated by an exact offload solve, so a loose
# relaxation suffices; the tail of first-order convergence on this LP is slow
LP_TOL = 1e-5
ROUND_THRESHOLD = 1e-6


def round_schedule(theta: np.ndarray, threshold: float = ROUND_THRESHOLD) -> np.ndarray:
    """Per slot, schedule the user with the largest weight (lowest index on ties)."""
    K, N = theta.shape
    B = np.zeros((K, N))
    best = np.argmax(theta, axis=0)
    on = theta[best, np.arange(N)] > threshold
    B[best[on], np.arange(N)[on]] = 1.0
    return B


def solve_scheduling_lp(
    state: SolutionState,
    cfg: ScenarioConfig,
    region: EveRegion,
    *,
    radar: bool = True,
    geo: Optional[SlotGeometry] = None,
    dump: Optional[TextIO] = None,
):
    """Re-assign users to slots for a fixed trajectory.

    Returns ``(new_state, result)``. The incoming state is returned
    unchanged (status ``kept-incoming``) when the rounded schedule does not
    lower the total user energy.
    """
    geo = SlotGeometry.build(state.Qs, cfg, region) if geo is None else geo
    K, N = state.B.shape
    beams, ok = pair_beams(state.W, state.B, geo, cfg, radar)
    pairs = np.argwhere(ok)
    if len(pairs) == 0:
        new = state.copy()
        new.A[:] = 0.0
        new.B[:] = 0.0
        new.W[:] = 0.0
        new.beams, new.rank_flags = beam_vectors(new.W)
        return new, BlockResult(OPTIMAL, objective(new, cfg, region), report={"scheduling": "no eligible pair"})
    ks, ns = pairs[:, 0], pairs[:, 1]
    m = len(pairs)

    sinr_echo = np.array([geo.echo_power(beams[k, n], n) if radar else 0.0 for k, n in pairs])
    rates = np.log2(1.0 + geo.signal[ks, ns] / (sinr_echo + cfg.noise_s))
    caps = np.array([slot_capacity(rates[i], ks[i], cfg) for i in range(m)])
    beam_energy = cfg.slot_len * np.real(np.trace(beams[ks, ns], axis1=-2, axis2=-1))
    w_com = compute_energy_per_ratio(cfg)[ks]
    e_loc = local_energy_per_ratio(cfg)
    gain = cfg.user_tx_power * cfg.D[ks] / (cfg.bandwidth * rates) - e_loc[ks]
    allowance = cfg.e_max - fly_energy(state.Qs, cfg)
    if allowance < 0:
        return state, BlockResult(INFEASIBLE, report={"uav_energy": -allowance})

    bld = ConicBuilder()
    th = bld.variable("theta", m)
    x = bld.variable("x", m)
    bld.minimize(Affine.linear(gain, x, float(e_loc.sum())))
    bld.add_nonneg(Affine.var(th))
    bld.add_nonneg(Affine.var(x))
    rows = [Affine.var(th) * caps - Affine.var(x)]
    for k in range(K):
        sel = np.flatnonzero(ks == k)
        if sel.size:
            rows.append(Affine.linear(-np.ones(sel.size), x[sel], 1.0))
    for n in range(N):
        sel = np.flatnonzero(ns == n)
        if sel.size:
            rows.append(Affine.linear(-np.ones(sel.size), th[sel], 1.0))
    if cfg.enforce_deadline:
        need = np.maximum(0.0, 1.0 - cfg.total_time * cfg.f / (cfg.D * cfg.F))
        for k in np.flatnonzero(need > 0):
            sel = np.flatnonzero(ks == k)
            rows.append(Affine.linear(np.ones(sel.size), x[sel], -need[k]))
    budget = Affine.linear(-beam_energy, th, allowance) + Affine.linear(-w_com, x)
    rows.append(budget)
    bld.add_nonneg(Affine.stack(rows))
    prob = bld.build()
    maybe_dump(prob, dump, "scheduling-lp")
    sol = solve_conic(prob, tol=LP_TOL)
    if sol.status == PRIMAL_INFEASIBLE:
        return state, BlockResult(INFEASIBLE, report={"scheduling-lp": sol.status})
    if not np.all(np.isfinite(sol.x)):
        return state, BlockResult(FAILED, report={"scheduling-lp": sol.status})

    theta = np.zeros((K, N))
    theta[ks, ns] = sol.x[th]
    B = round_schedule(theta)
    W = np.zeros_like(state.W)
    for n in np.flatnonzero(B.sum(axis=0) > 0.5):
        W[n] = beams[int(np.argmax(B[:, n])), n]
    A, _, res = solve_offload_lp(B, W, state.Qs, cfg, region, radar=radar, geo=geo)
    info = {"relaxed_objective": float(sol.objective), "iterations": sol.iterations}
    if A is None:
        return state, BlockResult(KEPT, objective(state, cfg, region), report=res.report, info=info)
    # slots that end up carrying nothing are switched off to save beam energy
    idle = (A * B).sum(axis=0) <= 0
    B[:, idle] = 0.0
    W[idle] = 0.0
    A = A * B
    new = state.copy()
    new.A, new.B, new.W = A, B, W
    new.beams, new.rank_flags = beam_vectors(W)
    new_obj = objective(new, cfg, region)
    old_obj = objective(state, cfg, region)
    if new_obj > old_obj:
        return state, BlockResult(KEPT, old_obj, info=info)
    return new, BlockResult(OPTIMAL, new_obj, info=info)
