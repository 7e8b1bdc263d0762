"""Beamforming block: joint SDP relaxation over the active slots plus rank-one recovery.

Per active slot n (scheduled user k, offloaded share alpha) the relaxation
uses a Hermitian covariance W[n], the interference-plus-noise level X[n]
and the uplink-energy slack eta[n]:

* ``X[n] >= echo_p(W[n]) + noise`` for every region sample p,
* the SINR floor ``X[n] <= g / Gamma_s``,
* the tangent rate ``L(X[n])`` must carry the slot's bits within the time
  left after UAV computing, and ``L(X[n]) * eta[n] >= P_u * c``,
* jamming and sensing gain floors at every sample, ``tr W[n] <= P_max``.

One budget row couples the slots through the beam energy. Idle slots keep
``W = 0``. A small trace penalty selects the cheapest covariance among
those with the same uplink energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from ..conic import OPTIMAL as SOLVED
from ..conic import PRIMAL_INFEASIBLE, Affine, ConicBuilder, ConicProblem, hermitian_psd_entries, solve_conic
from ..config import ScenarioConfig
from ..model import EveRegion, SolutionState, compute_energy, fly_energy, objective
from .common import FAILED, INFEASIBLE, KEPT, OPTIMAL, BlockResult, maybe_dump
from .eligibility import CHECK_RTOL
from .geometry import SlotGeometry
from .surrogates import taylor_rate_slope

SDP_TOL = 1e-6
SDP_MAX_ITER = 20_000
# the split problems are small, so they are solved tighter than the joint one
SLOT_SDP_TOL = 1e-7
NUM_DRAWS = 200
TRACE_WEIGHT = 1e-3
# fraction of the incumbent beam energy held back from the relaxation so that
# rank-one recovery can absorb the solver's tolerance on the budget row
BUDGET_MARGIN = 1e-4
PRICE_RTOL = 1e-3
PRICE_STEPS = 40


@dataclass
class HermitianVar:
    """Index bookkeeping for one Hermitian matrix variable."""

    re: np.ndarray   # (M, M), valid on the upper triangle including the diagonal
    im: np.ndarray   # (M, M), valid strictly above the diagonal
    M: int

    @classmethod
    def create(cls, bld: ConicBuilder, name: str, M: int) -> "HermitianVar":
        iu = np.triu_indices(M)
        ju = np.triu_indices(M, 1)
        re = np.full((M, M), -1, dtype=np.int64)
        im = np.full((M, M), -1, dtype=np.int64)
        re[iu] = bld.variable(f"{name}.re", len(iu[0]))
        im[ju] = bld.variable(f"{name}.im", len(ju[0]))
        return cls(re, im, M)

    def quad_rows(self, a: np.ndarray, coef=1.0) -> Affine:
        """Rows ``coef_p * Re(a_p^H W a_p)`` for each steering vector ``a_p`` (P, M)."""
        a = np.atleast_2d(a)
        P, M = a.shape
        coef = np.broadcast_to(np.asarray(coef, dtype=float), (P,))
        iu = np.triu_indices(M)
        ju = np.triu_indices(M, 1)
        c = a.conj()[:, :, None] * a[:, None, :]            # conj(a_i) a_j
        vre = np.where(iu[0] == iu[1], 1.0, 2.0) * c[:, iu[0], iu[1]].real
        vim = -2.0 * c[:, ju[0], ju[1]].imag
        vals = np.hstack([vre, vim]) * coef[:, None]
        cols = np.hstack([self.re[iu], self.im[ju]])
        nv = cols.size
        return Affine(P, np.repeat(np.arange(P), nv), np.tile(cols, P), vals.ravel())

    def trace(self, coef=1.0) -> Affine:
        d = self.re[np.diag_indices(self.M)]
        return Affine.linear(np.full(self.M, coef), d)

    def psd_entries(self) -> dict:
        return hermitian_psd_entries(self.re, self.im, self.M)

    def value(self, x: np.ndarray) -> np.ndarray:
        M = self.M
        iu = np.triu_indices(M)
        ju = np.triu_indices(M, 1)
        W = np.zeros((M, M), dtype=complex)
        W[iu] = x[self.re[iu]]
        W[ju] += 1j * x[self.im[ju]]
        W = W + np.triu(W, 1).conj().T
        return W


@dataclass
class SlotTask:
    """Fixed per-slot data of the beamforming block."""

    n: int
    k: int
    gain: float          # P_u ||h||^2
    c: float             # offloaded bits per Hz: alpha D / B
    rate_min: float      # bits/s/Hz needed to upload within the slot
    req: np.ndarray      # (P,) gain floors


def _slot_tasks(state: SolutionState, cfg: ScenarioConfig, geo: SlotGeometry):
    tasks = []
    users = state.active_user()
    for n in np.flatnonzero(users >= 0):
        k = int(users[n])
        alpha = float(state.A[k, n])
        c = alpha * cfg.D[k] / cfg.bandwidth
        t_com = alpha * cfg.D[k] * cfg.cycles_uav / cfg.cpu_uav
        rate_min = c / (cfg.slot_len - t_com) if c > 0 else 0.0
        tasks.append(SlotTask(int(n), k, float(geo.signal[k, n]), c, rate_min, geo.requirement(k, n)))
    return tasks


def _uplink_energy(rate, task: SlotTask, cfg: ScenarioConfig) -> float:
    if task.c <= 0:
        return 0.0
    return cfg.user_tx_power * task.c / rate if rate > 0 else np.inf


def _true_rate(W, task: SlotTask, geo: SlotGeometry, cfg: ScenarioConfig) -> float:
    return float(np.log2(1.0 + task.gain / (geo.echo_power(W, task.n) + cfg.noise_s)))


def _upper_scale(unit_gain, unit_power, task: SlotTask, geo: SlotGeometry, cfg: ScenarioConfig, power_cap):
    """Largest scale of a unit covariance meeting the power, SINR and slot-time limits."""
    echo_unit = float(np.max(geo.echo_coef[task.n] * unit_gain))
    limits = [cfg.p_max / unit_power, power_cap / unit_power]
    x_max = task.gain / cfg.gamma_s
    if task.rate_min > 0:
        x_max = min(x_max, task.gain / (2.0**task.rate_min - 1.0))
    if echo_unit > 0:
        limits.append((x_max - cfg.noise_s) / echo_unit)
    elif x_max < cfg.noise_s:
        return -np.inf
    return min(limits)


def recover_rank_one(W_sdr, task: SlotTask, geo: SlotGeometry, cfg: ScenarioConfig, rng, power_cap,
                     num_draws: int = NUM_DRAWS, extra=()):
    """Best feasible rank-one covariance from the dominant eigenvector and random draws.

    Each candidate direction is scaled to the smallest power meeting every
    gain floor, which also gives the least echo for that direction, and is
    rejected when that power breaks the power, SINR, slot-time or
    ``power_cap`` limits. Directions in ``extra`` (e.g. the incumbent beam)
    join the candidates. Returns ``(W, w)`` or ``(None, None)``.
    """
    lam, vec = np.linalg.eigh(W_sdr)
    lam = np.clip(lam, 0.0, None)
    M = W_sdr.shape[0]
    cands = [vec[:, -1]]
    if num_draws > 0 and lam[-1] > 0:
        root = vec * np.sqrt(lam)
        z = (rng.standard_normal((num_draws, M)) + 1j * rng.standard_normal((num_draws, M))) / np.sqrt(2.0)
        cands.extend(z @ root.T)
    cands.extend(w for w in extra if np.any(w))
    A = geo.steer[task.n]
    best = (np.inf, np.inf, None)
    for w in cands:
        power = float(np.real(np.vdot(w, w)))
        if power <= 0:
            continue
        unit_gain = np.abs(A.conj() @ w) ** 2
        need = task.req > 0
        if np.any(unit_gain[need] <= 0):
            continue
        t_lo = float(np.max(task.req[need] / unit_gain[need])) if need.any() else 0.0
        if t_lo > _upper_scale(unit_gain, power, task, geo, cfg, power_cap) * (1.0 + CHECK_RTOL):
            continue
        Wc = t_lo * np.outer(w, w.conj())
        energy = _uplink_energy(_true_rate(Wc, task, geo, cfg), task, cfg)
        key = (energy, t_lo * power)
        if key < best[:2]:
            best = (energy, t_lo * power, np.sqrt(t_lo) * w)
    if best[2] is None:
        return None, None
    w = best[2]
    return np.outer(w, w.conj()), w


def _build_sdp(tasks, state, cfg, geo, allowance, trace_scale, total_eta=None):
    M = cfg.num_antennas
    bld = ConicBuilder()
    hv, xs, es, eta_ref = [], [], [], []
    budget = Affine.constant([0.0 if allowance is None else allowance])
    obj_parts = []
    for t in tasks:
        n = t.n
        W0 = state.W[n]
        X0 = geo.echo_power(W0, n) + cfg.noise_s
        h = HermitianVar.create(bld, f"W[{n}]", M)
        x = bld.variable(f"X[{n}]")          # X / X0
        hv.append(h)
        xs.append((x, X0))
        bld.add_psd(h.psd_entries(), 2 * M)
        gains = h.quad_rows(geo.steer[n])
        # echo rows, scaled by 1/X0
        echo = h.quad_rows(geo.steer[n], geo.echo_coef[n] / X0)
        bld.add_nonneg(Affine.var([x]).repeat(len(geo.echo_coef[n])) - echo - cfg.noise_s / X0)
        bld.add_nonneg(Affine.linear([-1.0], [x], t.gain / (cfg.gamma_s * X0)))
        floor = np.where(t.req > 0, t.req, 0.0)
        bld.add_nonneg(gains - floor)
        bld.add_nonneg(h.trace(-1.0) + cfg.p_max)
        budget = budget - h.trace(cfg.slot_len)
        obj_parts.append(h.trace(TRACE_WEIGHT * cfg.slot_len / trace_scale))
        if t.c > 0:
            l0 = float(np.log2(1.0 + t.gain / X0))
            s = float(taylor_rate_slope(X0, t.gain)) * X0
            # L(x) = l0 - s (x - 1) in bits/s/Hz
            L = Affine.linear([-s], [x], l0 + s)
            bld.add_nonneg(L - t.rate_min)
            e = bld.variable(f"eta[{n}]")   # eta / eta0 with eta0 = P_u c / l0
            es.append((e, cfg.user_tx_power * t.c / l0))
            eta_ref.append(cfg.user_tx_power * t.c / l0)
            # L * e >= l0
            bld.add_rotated_soc(L * (1.0 / l0), Affine.var([e]), Affine.constant([1.0]))
        else:
            es.append((None, 0.0))
    if total_eta is None:
        total_eta = sum(eta_ref) if eta_ref else 1.0
    for e, ref in es:
        if e is not None:
            bld.minimize(Affine.linear([ref / total_eta], [e]))
    for part in obj_parts:
        bld.minimize(part)
    if allowance is not None:
        bld.add_nonneg(budget * (1.0 / max(allowance, 1e-12)))
    return bld, hv, xs, es


def _psd_part(W):
    lam, vec = np.linalg.eigh(W)
    return (vec * np.clip(lam, 0.0, None)) @ vec.conj().T


def _solution_status(sol):
    if sol.status == PRIMAL_INFEASIBLE:
        return INFEASIBLE
    if not np.all(np.isfinite(sol.x)):
        return FAILED
    return OPTIMAL


def _relax_joint(tasks, state, cfg, geo, cap, trace_scale, dump):
    """All active slots in one SDP with the budget row. Returns ``(W_sdr, status, info)``."""
    bld, hv, _, _ = _build_sdp(tasks, state, cfg, geo, cap, trace_scale)
    prob = bld.build()
    maybe_dump(prob, dump, "beamforming-sdp")
    sol = solve_conic(prob, tol=SDP_TOL, max_iter=SDP_MAX_ITER)
    info = {"solver": sol.status, "iterations": sol.iterations, "seconds": sol.info.get("seconds"),
            "split": False}
    status = _solution_status(sol)
    W_sdr = np.zeros_like(state.W)
    if status == OPTIMAL:
        for t, h in zip(tasks, hv):
            W_sdr[t.n] = _psd_part(h.value(sol.x))
    return W_sdr, status, info


def _relax_per_slot(tasks, state, cfg, geo, cap, trace_scale, dump):
    """The relaxation split into one SDP per slot, with the budget row priced.

    The slots share only the beam-energy budget. Charging ``price`` per joule
    of beam energy decouples them, and the beam energy used falls as the
    price grows, so a bracketing search finds a price that meets the budget
    with at most ``PRICE_RTOL`` of it left unused. Returns
    ``(W_sdr, status, info)`` with ``status=None`` when no price in range
    meets the budget, in which case the joint problem decides.
    """
    M = cfg.num_antennas
    total_eta = 0.0
    for t in tasks:
        if t.c > 0:
            X0 = geo.echo_power(state.W[t.n], t.n) + cfg.noise_s
            total_eta += cfg.user_tx_power * t.c / float(np.log2(1.0 + t.gain / X0))
    total_eta = total_eta if total_eta > 0 else 1.0
    slots = []
    for t in tasks:
        bld, hv, _, _ = _build_sdp([t], state, cfg, geo, None, trace_scale, total_eta)
        prob = bld.build()
        maybe_dump(prob, dump, f"beamforming-sdp[{t.n}]")
        energy = np.zeros(prob.shape[1])
        energy[hv[0].re[np.diag_indices(M)]] = cfg.slot_len
        slots.append((prob, hv[0], energy))
    warm = [None] * len(slots)
    info = {"solver": SOLVED, "iterations": 0, "seconds": 0.0, "split": True, "price": 0.0, "price_solves": 0}

    def solve_at(price):
        W = np.zeros_like(state.W)
        used = 0.0
        info["price_solves"] += 1
        for i, (t, (prob, h, energy)) in enumerate(zip(tasks, slots)):
            priced = ConicProblem(prob.c + price * energy, prob.A, prob.b, prob.cones, prob.var_names, prob.offset)
            sol = solve_conic(priced, tol=SLOT_SDP_TOL, max_iter=SDP_MAX_ITER, warm_start=warm[i])
            info["iterations"] += sol.iterations
            info["seconds"] += sol.info.get("seconds", 0.0)
            status = _solution_status(sol)
            if status != OPTIMAL:
                info["solver"] = sol.status
                return None, np.inf, status
            if sol.status != SOLVED:
                info["solver"] = sol.status
            warm[i] = (sol.x, sol.y, sol.s)
            W[t.n] = _psd_part(h.value(sol.x))
            used += cfg.slot_len * float(np.real(np.trace(W[t.n])))
        return W, used, OPTIMAL

    W, used, status = solve_at(0.0)
    if status != OPTIMAL or used <= cap:
        return W, status, info
    lo, hi = 0.0, 1.0 / cap
    best = None
    for _ in range(PRICE_STEPS):
        W_hi, used_hi, status = solve_at(hi)
        if status != OPTIMAL:
            return W_hi, status, info
        if used_hi <= cap:
            best = (hi, W_hi, used_hi)
            break
        lo, hi = hi, 8.0 * hi
    if best is None:
        return None, None, info
    for _ in range(PRICE_STEPS):
        if best[2] >= cap * (1.0 - PRICE_RTOL):
            break
        mid = 0.5 * (lo + best[0]) if lo == 0.0 else float(np.sqrt(lo * best[0]))
        W_mid, used_mid, status = solve_at(mid)
        if status != OPTIMAL:
            return W_mid, status, info
        if used_mid <= cap:
            best = (mid, W_mid, used_mid)
        else:
            lo = mid
    info["price"] = best[0]
    return best[1], OPTIMAL, info


def solve_beamforming_sdp(
    state: SolutionState,
    cfg: ScenarioConfig,
    region: EveRegion,
    *,
    seed: int = 0,
    geo: Optional[SlotGeometry] = None,
    dump: Optional[TextIO] = None,
    num_draws: int = NUM_DRAWS,
):
    """Optimise the covariances of the active slots for fixed A, B and trajectory.

    Returns ``(new_state, result)``. ``result.info`` carries the relaxation
    bound ``sdr_energy`` (uplink energy evaluated with the exact rate at the
    relaxed covariances), the recovered ``rank1_energy`` and their relative
    ``sdr_gap``.
    """
    geo = SlotGeometry.build(state.Qs, cfg, region) if geo is None else geo
    rng = np.random.default_rng(seed)
    tasks = _slot_tasks(state, cfg, geo)
    old_obj = objective(state, cfg, region)
    if not tasks:
        new = state.copy()
        new.W[:] = 0.0
        new.beams[:] = 0.0
        new.rank_flags[:] = False
        return new, BlockResult(OPTIMAL, objective(new, cfg, region), info={"sdr_gap": 0.0})
    allowance = cfg.e_max - fly_energy(state.Qs, cfg) - compute_energy(state.A, state.B, cfg)
    if allowance < 0:
        return state, BlockResult(INFEASIBLE, report={"uav_energy": -allowance})
    trace_scale = max(sum(float(np.real(np.trace(state.W[t.n]))) for t in tasks) * cfg.slot_len, 1e-12)

    margin = min(BUDGET_MARGIN * trace_scale, 0.5 * allowance)
    cap = allowance - margin
    W_sdr, status, info = _relax_per_slot(tasks, state, cfg, geo, cap, trace_scale, dump)
    if status is None:
        W_sdr, status, info = _relax_joint(tasks, state, cfg, geo, cap, trace_scale, dump)
    if status == INFEASIBLE:
        return state, BlockResult(INFEASIBLE, old_obj, report={"beamforming-sdp": info["solver"]}, info=info)
    if status == FAILED:
        return state, BlockResult(FAILED, old_obj, report={"beamforming-sdp": info["solver"]}, info=info)

    used = sum(cfg.slot_len * float(np.real(np.trace(W_sdr[t.n]))) for t in tasks)
    share = max(allowance - used, 0.0) / len(tasks)
    new = state.copy()
    new.W[:] = 0.0
    new.beams[:] = 0.0
    new.rank_flags[:] = False
    sdr_energy = rank1_energy = 0.0
    for t in tasks:
        Wn = W_sdr[t.n]
        sdr_energy += _uplink_energy(_true_rate(Wn, t, geo, cfg), t, cfg)
        cap = float(np.real(np.trace(Wn))) + share / cfg.slot_len
        W1, w = recover_rank_one(Wn, t, geo, cfg, rng, cap, num_draws, extra=(state.beams[t.n],))
        if W1 is None:
            # keep the relaxed covariance, after restoring the floors exactly
            W1 = _restore_floors(Wn, t, geo, cfg)
            flag = True
            if not _slot_feasible(W1, t, cfg, geo):
                # the relaxation met a tight limit only to solver tolerance
                W1, flag = state.W[t.n], bool(state.rank_flags[t.n])
            new.rank_flags[t.n] = flag
            lam, vec = np.linalg.eigh(W1)
            w = np.sqrt(max(lam[-1], 0.0)) * vec[:, -1]
        new.W[t.n] = W1
        new.beams[t.n] = w
        rank1_energy += _uplink_energy(_true_rate(W1, t, geo, cfg), t, cfg)
    gap = (rank1_energy - sdr_energy) / sdr_energy if sdr_energy > 0 else 0.0
    info.update(sdr_energy=sdr_energy, rank1_energy=rank1_energy, sdr_gap=gap,
                rank_flags=int(new.rank_flags.sum()))

    if not _block_feasible(new, tasks, cfg, geo, allowance):
        return state, BlockResult(KEPT, old_obj, report={"beamforming": "recovered point infeasible"}, info=info)
    new_obj = objective(new, cfg, region)
    if new_obj > old_obj:
        return state, BlockResult(KEPT, old_obj, info=info)
    return new, BlockResult(OPTIMAL, new_obj, info=info)


def _restore_floors(W, task: SlotTask, geo: SlotGeometry, cfg: ScenarioConfig):
    gains = geo.gains(W, task.n)
    need = task.req > 0
    if not need.any():
        return W
    ratio = float(np.max(task.req[need] / np.maximum(gains[need], 1e-300)))
    return W * max(ratio, 1.0)


def _slot_feasible(W, task: SlotTask, cfg: ScenarioConfig, geo: SlotGeometry) -> bool:
    """Exact per-slot checks: power, gain floors, SINR floor and slot time."""
    tol = CHECK_RTOL
    tr = float(np.real(np.trace(W)))
    if tr > cfg.p_max * (1 + tol):
        return False
    g = geo.gains(W, task.n)
    if np.any(g < task.req - tol * np.abs(task.req)):
        return False
    X = geo.echo_power(W, task.n) + cfg.noise_s
    if task.gain / X < cfg.gamma_s * (1 - tol):
        return False
    if task.rate_min > 0 and np.log2(1 + task.gain / X) < task.rate_min * (1 - tol):
        return False
    return True


def _block_feasible(state: SolutionState, tasks, cfg: ScenarioConfig, geo: SlotGeometry, allowance) -> bool:
    """Exact checks of everything this block can break."""
    total = 0.0
    for t in tasks:
        W = state.W[t.n]
        total += cfg.slot_len * float(np.real(np.trace(W)))
        if not _slot_feasible(W, t, cfg, geo):
            return False
    return total <= allowance * (1 + CHECK_RTOL) + 1e-12
