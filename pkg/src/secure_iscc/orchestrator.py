"""Alternating-optimisation driver, benchmark schemes and feasibility audit."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, TextIO

import numpy as np

from .config import ConfigError, ScenarioConfig
from .model import (
    EveRegion,
    beampattern_gain,
    compute_energy,
    fly_energy,
    sensing_energy,
    sensing_requirement,
    SolutionState,
    computing_times,
    eve_sinr_samples,
    objective,
    rate_matrix,
    speeds,
    uav_energy,
    uav_sinr,
)
from .subproblems import (
    SlotGeometry,
    beam_vectors,
    candidate_beam,
    link_checks,
    solve_beamforming_sdp,
    solve_offload_lp,
    solve_scheduling_lp,
    solve_trajectory_sca,
)
from .subproblems.common import BlockResult, FAILED, INFEASIBLE, OPTIMAL, SKIPPED, slot_capacity

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "bench1", "bench2", "bench3")
SCHEME_LABELS = {
    "proposed": "proposed",
    "bench1": "fixed trajectory",
    "bench2": "fixed scheduling and offloading",
    "bench3": "no sensing",
}
AUDIT_TOL = 1e-5
MONOTONE_RTOL = 1e-6


class InitializationError(ConfigError):
    """No feasible starting point exists for the configuration."""


# ----------------------------------------------------------------------------
# initialisation


def initial_trajectory(cfg: ScenarioConfig) -> np.ndarray:
    """Constant-speed path from start to end, through ``cfg.init_waypoints`` if given."""
    pts = [np.asarray(cfg.uav_start, dtype=float)]
    if cfg.init_waypoints:
        pts += [np.asarray(p, dtype=float) for p in cfg.init_waypoints]
    pts.append(np.asarray(cfg.uav_end, dtype=float))
    pts = np.array(pts)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    N = cfg.num_slots
    if total > (N - 1) * cfg.step_max * (1 + 1e-12):
        raise InitializationError(
            f"initial path of {total:.1f} m exceeds the {N - 1} steps of {cfg.step_max:.2f} m",
            ["init_waypoints", "v_max"],
        )
    if total == 0.0:
        return np.repeat(pts[:1], N, axis=0)
    s = np.linspace(0.0, total, N)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    Qs = np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])
    Qs[0], Qs[-1] = pts[0], pts[-1]
    return Qs


def _deactivate_idle(state: SolutionState) -> SolutionState:
    idle = (state.A * state.B).sum(axis=0) <= 0
    state.B[:, idle] = 0.0
    state.A = state.A * state.B
    state.W[idle] = 0.0
    state.beams, state.rank_flags = beam_vectors(state.W)
    return state


def _nearest_eligible(cfg, geo, radar):
    """Per slot, the nearest user with a feasible closed-form beam, and that beam."""
    K, N = geo.d_sk2.shape
    M = cfg.num_antennas
    users = np.full(N, -1)
    W = np.zeros((N, M, M), dtype=complex)
    sensing_ok = np.zeros(N, dtype=bool)
    for n in range(N):
        if radar:
            sense = geo.req_sen[n]
            A = geo.steer[n]
            unit = np.vstack([np.abs(A.conj() @ A.T) ** 2 / M, np.ones((1, A.shape[0]))])
            sensing_ok[n] = float(np.min(np.max(sense[None, :] / unit, axis=1))) <= cfg.p_max
        for k in np.argsort(geo.d_sk2[:, n], kind="stable"):
            Wc = candidate_beam(geo, int(k), n, cfg) if radar else np.zeros((M, M), dtype=complex)
            if Wc is None:
                continue
            c = link_checks(Wc, int(k), n, geo, cfg, radar)
            if c["sinr"] and c["secrecy"] and c["sensing"]:
                users[n] = k
                W[n] = Wc
                break
    return users, W, sensing_ok


def initialize_state(cfg: ScenarioConfig, scheme: str = "proposed", region: Optional[EveRegion] = None) -> SolutionState:
    """Feasible starting point for a scheme.

    The trajectory is the constant-speed initial path; each slot carries the
    nearest user that a closed-form beam can serve securely, and the offload
    shares come from the offload LP (bench2 uses its fixed round-robin plan
    instead). Slots that end up without offloading are switched off.
    """
    _check_scheme(scheme)
    region = EveRegion.from_config(cfg) if region is None else region
    radar = scheme != "bench3"
    Qs = initial_trajectory(cfg)
    geo = SlotGeometry.build(Qs, cfg, region)
    users, W, sensing_ok = _nearest_eligible(cfg, geo, radar)
    if radar and not sensing_ok.any():
        raise InitializationError(
            "sensing floor cannot be met within p_max in any slot", ["gamma_sen", "p_max"]
        )
    K, N = cfg.num_users, cfg.num_slots
    B = np.zeros((K, N))
    act = users >= 0
    B[users[act], np.flatnonzero(act)] = 1.0
    if scheme == "bench2":
        B, W = _round_robin(cfg, geo, radar)
        A = _equal_split(B, W, Qs, cfg, geo, radar)
    else:
        A, _, res = solve_offload_lp(B, W, Qs, cfg, region, radar=radar, geo=geo)
        if A is None:
            raise InitializationError(f"offload plan infeasible: {res.report}", sorted(res.report))
    state = _deactivate_idle(SolutionState(A=A, B=B, W=W, Qs=Qs))
    report = audit_feasibility(state, cfg, region, radar=radar)
    worst = max(report.values())
    if worst > AUDIT_TOL:
        bad = max(report, key=report.get)
        raise InitializationError(f"initial point violates {bad} by {worst:.3g}", [bad])
    return state


def _round_robin(cfg, geo, radar):
    """Slot n goes to user n mod K when that pair is servable, else to the nearest servable user."""
    K, N = geo.d_sk2.shape
    M = cfg.num_antennas
    B = np.zeros((K, N))
    W = np.zeros((N, M, M), dtype=complex)
    for n in range(N):
        order = [n % K] + [int(k) for k in np.argsort(geo.d_sk2[:, n], kind="stable") if k != n % K]
        for k in order:
            Wc = candidate_beam(geo, k, n, cfg) if radar else np.zeros((M, M), dtype=complex)
            if Wc is None:
                continue
            c = link_checks(Wc, k, n, geo, cfg, radar)
            if c["sinr"] and c["secrecy"] and c["sensing"]:
                B[k, n] = 1.0
                W[n] = Wc
                break
    return B, W


def _equal_split(B, W, Qs, cfg, geo, radar):
    """Equal share per scheduled slot, trimmed to the slot time and the UAV budget."""
    K, N = B.shape
    A = np.zeros((K, N))
    for k in range(K):
        slots = np.flatnonzero(B[k] > 0.5)
        if slots.size == 0:
            continue
        for n in slots:
            echo = geo.echo_power(W[n], n) if radar else 0.0
            rate = np.log2(1.0 + geo.signal[k, n] / (echo + cfg.noise_s))
            A[k, n] = min(1.0 / slots.size, float(slot_capacity(rate, k, cfg)))
    allowance = cfg.e_max - fly_energy(Qs, cfg) - sensing_energy(W * B.max(axis=0)[:, None, None], cfg)
    com = compute_energy(A, B, cfg)
    if com > allowance:
        A *= max(allowance, 0.0) / com
    return A


# ----------------------------------------------------------------------------
# audit


def audit_feasibility(state: SolutionState, cfg: ScenarioConfig, region: Optional[EveRegion] = None,
                      radar: bool = True) -> dict:
    """Largest relative violation of every constraint family, with exact expressions.

    Families: scheduling, offload_ratio, endpoints, speed, sensing, sinr,
    secrecy, power, slot_time, uav_energy, beam_psd and, when the deadline
    is enforced, deadline. Zero means satisfied.
    """
    region = EveRegion.from_config(cfg) if region is None else region
    A, B, W, Qs = state.A, state.B, state.W, state.Qs
    K, N = B.shape
    out = {}
    frac = np.abs(B - np.round(B))
    out["scheduling"] = max(float(frac.max()), float(np.max(B.sum(axis=0) - 1.0)), 0.0)
    out["offload_ratio"] = max(float(np.max(-A)), float(np.max(A - 1.0)), float(np.max(A.sum(axis=1) - 1.0)), 0.0)
    ends = max(np.linalg.norm(Qs[0] - np.asarray(cfg.uav_start)), np.linalg.norm(Qs[-1] - np.asarray(cfg.uav_end)))
    out["endpoints"] = float(ends / cfg.step_max)
    steps = speeds(Qs, cfg) * cfg.slot_len
    out["speed"] = max(float(np.max((steps - cfg.step_max) / cfg.step_max)) if steps.size else 0.0, 0.0)

    sens = sinr = sec = power = psd = 0.0
    active = B.sum(axis=0) > 0.5
    for n in range(N):
        tr = float(np.real(np.trace(W[n])))
        power = max(power, (tr - cfg.p_max) / cfg.p_max)
        lam = np.linalg.eigvalsh(W[n])
        if lam[-1] > 0 or lam[0] < 0:
            psd = max(psd, -float(lam[0]) / max(float(abs(lam[-1])), 1e-300))
        if not active[n]:
            continue
        k = int(np.argmax(B[:, n]))
        if radar:
            gain = beampattern_gain(W[n], Qs[n], region.points, cfg)
            req = sensing_requirement(Qs[n], region, cfg)
            sens = max(sens, float(np.max((req - gain) / req)))
        g = uav_sinr(Qs[n], cfg.users[k], W[n], region, radar, cfg)
        sinr = max(sinr, (cfg.gamma_s - g) / cfg.gamma_s)
        ge = eve_sinr_samples(cfg.users[k], W[n], Qs[n], region, radar, cfg)
        sec = max(sec, float(np.max((ge - cfg.gamma_e) / cfg.gamma_e)))
    out["sensing"] = max(sens, 0.0)
    out["sinr"] = max(sinr, 0.0)
    out["secrecy"] = max(sec, 0.0)
    out["power"] = max(power, 0.0)

    rates = rate_matrix(Qs, W if radar else np.zeros_like(W), region, cfg)
    T_loc, T_off, T_com = computing_times(A, B, rates, cfg)
    busy = (T_off + B * T_com).sum(axis=0)
    out["slot_time"] = max(float(np.max((busy - cfg.slot_len) / cfg.slot_len)), 0.0)
    e_uav = sum(uav_energy(B, A, W, Qs, cfg))
    out["uav_energy"] = max((e_uav - cfg.e_max) / cfg.e_max, 0.0)
    out["beam_psd"] = psd
    if cfg.enforce_deadline:
        out["deadline"] = max(float(np.max((T_loc - cfg.total_time) / cfg.total_time)), 0.0)
    return {k: float(v) + 0.0 for k, v in out.items()}


# ----------------------------------------------------------------------------
# Algorithm loop


@dataclass
class BlockRecord:
    name: str
    status: str
    seconds: float
    objective: float
    info: dict = field(default_factory=dict)


@dataclass
class IterationRecord:
    m: int
    objective: float
    audit_worst: float
    blocks: list


@dataclass
class AoTrace:
    """Per-iteration history of one alternating-optimisation run."""

    scheme: str
    initial_objective: float
    iterations: list = field(default_factory=list)
    converged: bool = False
    flagged: bool = False
    flag_status: str = ""
    message: str = ""

    @property
    def objectives(self) -> np.ndarray:
        return np.array([self.initial_objective] + [it.objective for it in self.iterations])

    @property
    def m(self) -> int:
        return len(self.iterations)

    def sdr_gaps(self) -> list:
        return [b.info["sdr_gap"] for it in self.iterations for b in it.blocks
                if b.name == "beamforming" and "sdr_gap" in b.info]

    def to_dict(self) -> dict:
        return asdict(self) | {"objectives": self.objectives.tolist()}


def _check_scheme(scheme: str):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def run_algorithm1(
    cfg: ScenarioConfig,
    scheme: str = "proposed",
    max_iters: int = 100,
    *,
    tol: Optional[float] = None,
    seed: int = 0,
    region: Optional[EveRegion] = None,
    state: Optional[SolutionState] = None,
    dump: Optional[TextIO] = None,
):
    """Run the block loop offload -> scheduling -> beamforming -> trajectory.

    Schemes skip the blocks they hold fixed: ``bench1`` keeps the initial
    trajectory, ``bench2`` keeps the initial schedule and offload shares,
    ``bench3`` transmits no sensing beam. The loop stops when the objective
    changes by at most ``tol`` joules (default ``cfg.conv_tol``) or after
    ``max_iters`` iterations; a failing block stops it early with the last
    feasible state and a flagged trace.
    """
    _check_scheme(scheme)
    tol = cfg.conv_tol if tol is None else tol
    region = EveRegion.from_config(cfg) if region is None else region
    radar = scheme != "bench3"
    state = initialize_state(cfg, scheme, region) if state is None else state.copy()
    prev = objective(state, cfg, region)
    trace = AoTrace(scheme, prev)
    blocks = _blocks(scheme)
    for m in range(1, max_iters + 1):
        records = []
        for name in blocks:
            t0 = time.perf_counter()
            new, res = _run_block(name, state, cfg, region, radar, scheme, seed, m, dump)
            dt = time.perf_counter() - t0
            if res.status in (INFEASIBLE, FAILED):
                records.append(BlockRecord(name, res.status, dt, prev, res.report | res.info))
                trace.flagged = True
                trace.flag_status = res.status
                trace.message = f"{name} block {res.status}: {res.report}"
                break
            obj = objective(new, cfg, region)
            if obj > prev + MONOTONE_RTOL * trace.initial_objective:
                # never accept an increase; keep the incoming point
                new, obj = state, prev
                res.status = "rejected-increase"
            state, prev = new, obj
            records.append(BlockRecord(name, res.status, dt, obj, _plain(res.info)))
        worst = max(audit_feasibility(state, cfg, region, radar=radar).values())
        trace.iterations.append(IterationRecord(m, prev, worst, records))
        log.info("iter %d  E=%.9f J  audit=%.2e", m, prev, worst)
        if trace.flagged:
            break
        last = trace.objectives[-2]
        if abs(last - prev) <= tol:
            trace.converged = True
            break
    return state, trace


def _blocks(scheme):
    if scheme == "proposed":
        return ["offload", "scheduling", "beamforming", "trajectory"]
    if scheme == "bench1":
        return ["offload", "scheduling", "beamforming"]
    if scheme == "bench2":
        return ["beamforming", "trajectory"]
    return ["offload", "scheduling", "trajectory"]


def _run_block(name, state, cfg, region, radar, scheme, seed, m, dump):
    geo = SlotGeometry.build(state.Qs, cfg, region)
    if name == "offload":
        A, _, res = solve_offload_lp(state.B, state.W, state.Qs, cfg, region, A_ref=state.A,
                                     radar=radar, geo=geo, dump=dump)
        if A is None:
            return state, res
        new = _deactivate_idle(SolutionState(A, state.B.copy(), state.W.copy(), state.Qs.copy(),
                                             state.beams.copy(), state.rank_flags.copy()))
        if objective(new, cfg, region) > objective(state, cfg, region):
            return state, BlockResult(OPTIMAL, objective(state, cfg, region), info=res.info)
        return new, res
    if name == "scheduling":
        return solve_scheduling_lp(state, cfg, region, radar=radar, geo=geo, dump=dump)
    if name == "beamforming":
        if not radar:
            return state, BlockResult(SKIPPED)
        return solve_beamforming_sdp(state, cfg, region, seed=int(seed) * 1_000_003 + m, geo=geo, dump=dump)
    if not state.active.any():
        # with every task local the user energy does not depend on the path
        return state, BlockResult(SKIPPED, objective(state, cfg, region))
    return solve_trajectory_sca(state, cfg, region, fixed_offload=(scheme == "bench2"), radar=radar,
                                geo=geo, dump=dump)


def _plain(info: dict) -> dict:
    """JSON-friendly copy of a block's diagnostics."""
    out = {}
    for k, v in info.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out
