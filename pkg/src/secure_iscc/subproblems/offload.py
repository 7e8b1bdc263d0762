"""Offload-ratio block: a linear program over the ratios of scheduled pairs."""

from __future__ import annotations

from typing import Optional, TextIO

import numpy as np

from ..conic import PRIMAL_INFEASIBLE, Affine, ConicBuilder, solve_conic
from ..config import ScenarioConfig
from ..model import EveRegion, fly_energy, sensing_energy
from .common import (
    FAILED,
    INFEASIBLE,
    KEPT,
    OPTIMAL,
    BlockResult,
    compute_energy_per_ratio,
    local_energy_per_ratio,
    maybe_dump,
    slot_capacity,
)
from .geometry import SlotGeometry

LP_TOL = 1e-9


def pair_rates(B, W, geo: SlotGeometry, cfg: ScenarioConfig, radar: bool = True) -> np.ndarray:
    """Offload rate of every (user, slot) with the slot's beam switched on."""
    K, N = geo.d_sk2.shape
    rates = np.empty((K, N))
    for n in range(N):
        echo = geo.echo_power(W[n], n) if radar else 0.0
        rates[:, n] = np.log2(1.0 + geo.signal[:, n] / (echo + cfg.noise_s))
    return rates


def offload_objective(A, B, rates, cfg: ScenarioConfig) -> float:
    """Total user energy for ratios A on schedule B."""
    x = np.asarray(A) * np.asarray(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(x > 0, cfg.user_tx_power * x * cfg.D[:, None] / (cfg.bandwidth * rates), 0.0)
    local = local_energy_per_ratio(cfg) * (1.0 - x.sum(axis=1))
    return float(local.sum() + up.sum())


def _clean(A, caps, weights, allowance):
    """Project a near-feasible LP answer onto the exact constraints."""
    A = np.clip(A, 0.0, caps)
    tot = A.sum(axis=1)
    over = tot > 1.0
    A[over] /= tot[over, None]
    used = float(np.sum(A * weights[:, None]))
    if used > allowance > 0:
        A *= allowance / used
    elif allowance <= 0:
        A[:] = 0.0
    return A


def solve_offload_lp(
    B,
    W,
    Qs,
    cfg: ScenarioConfig,
    region: EveRegion,
    A_ref: Optional[np.ndarray] = None,
    *,
    radar: bool = True,
    geo: Optional[SlotGeometry] = None,
    dump: Optional[TextIO] = None,
):
    """Optimal offload ratios for a fixed schedule, beams and trajectory.

    Returns ``(A, eta, result)`` where ``eta`` holds the per-slot uplink
    energies. Ratios of unscheduled pairs are zero. If ``A_ref`` is given
    and feasible, the returned objective never exceeds its objective.
    """
    geo = SlotGeometry.build(Qs, cfg, region) if geo is None else geo
    B = np.asarray(B, dtype=float)
    K, N = B.shape
    rates = pair_rates(B, W, geo, cfg, radar)
    caps = np.zeros((K, N))
    for k in range(K):
        caps[k] = slot_capacity(rates[k], k, cfg) * (B[k] > 0.5)

    w_com = compute_energy_per_ratio(cfg)
    e_loc = local_energy_per_ratio(cfg)
    allowance = cfg.e_max - fly_energy(Qs, cfg) - sensing_energy(W * B.max(axis=0)[:, None, None], cfg)
    if allowance < -1e-9 * cfg.e_max:
        return None, None, BlockResult(INFEASIBLE, report={"uav_energy": -allowance})

    need = np.zeros(K)
    if cfg.enforce_deadline:
        need = np.maximum(0.0, 1.0 - cfg.total_time * cfg.f / (cfg.D * cfg.F))
        reach = np.minimum(1.0, caps.sum(axis=1))
        short = np.flatnonzero(reach < need - 1e-12)
        if short.size:
            report = {"deadline": {int(k): float(need[k] - reach[k]) for k in short}}
            return None, None, BlockResult(INFEASIBLE, report=report)

    pairs = np.argwhere(B > 0.5)
    A = np.zeros((K, N))
    if len(pairs) == 0:
        eta = np.zeros((K, N))
        return A, eta, BlockResult(OPTIMAL, offload_objective(A, B, rates, cfg))

    ks, ns = pairs[:, 0], pairs[:, 1]
    gain = cfg.user_tx_power * cfg.D[ks] / (cfg.bandwidth * rates[ks, ns]) - e_loc[ks]
    bld = ConicBuilder()
    a = bld.variable("alpha", len(pairs))
    bld.minimize(Affine.linear(gain, a, float(e_loc.sum())))
    xa = Affine.var(a)
    bld.add_nonneg(xa)
    bld.add_nonneg(Affine.constant(caps[ks, ns]) - xa)
    rows = []
    for k in range(K):
        sel = np.flatnonzero(ks == k)
        if sel.size:
            rows.append(Affine.linear(-np.ones(sel.size), a[sel], 1.0))
            if need[k] > 0:
                rows.append(Affine.linear(np.ones(sel.size), a[sel], -need[k]))
    rows.append(Affine.linear(-w_com[ks], a, max(allowance, 0.0)))
    bld.add_nonneg(Affine.stack(rows))
    prob = bld.build()
    maybe_dump(prob, dump, "offload-lp")
    sol = solve_conic(prob, tol=LP_TOL)
    if sol.status == PRIMAL_INFEASIBLE:
        return None, None, BlockResult(INFEASIBLE, report={"offload-lp": sol.status})
    if not np.all(np.isfinite(sol.x)):
        return None, None, BlockResult(FAILED, report={"offload-lp": sol.status})

    A[ks, ns] = sol.x
    # shares that cost more than local computing are zero at the optimum
    # unless a deadline forces them; drop the solver's residue
    costly = (gain >= 0) & (need[ks] <= 0)
    A[ks[costly], ns[costly]] = 0.0
    A = _clean(A, caps, w_com, allowance)
    if need.any() and np.any(A.sum(axis=1) < need - 1e-9):
        return None, None, BlockResult(FAILED, report={"deadline": "lost after rounding"})
    obj = offload_objective(A, B, rates, cfg)
    status = OPTIMAL
    if A_ref is not None:
        ref = np.asarray(A_ref, dtype=float) * (B > 0.5)
        ref_ok = (
            np.all(ref >= 0)
            and np.all(ref <= caps + 1e-12)
            and np.all(ref.sum(axis=1) <= 1 + 1e-12)
            and float(np.sum(ref * w_com[:, None])) <= allowance + 1e-9
            and np.all(ref.sum(axis=1) >= need - 1e-12)
        )
        ref_obj = offload_objective(ref, B, rates, cfg)
        if ref_ok and ref_obj < obj:
            A, obj, status = ref, ref_obj, KEPT
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(A > 0, cfg.user_tx_power * A * cfg.D[:, None] / (cfg.bandwidth * rates), 0.0)
    info = {"solver": sol.status, "iterations": sol.iterations, "allowance": allowance}
    return A, eta, BlockResult(status, obj, info=info)
