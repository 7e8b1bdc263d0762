"""Trajectory block: one successive-convex-approximation step plus repair.

Around the reference trajectory ``q0`` the block builds a second-order cone
program in the waypoints, the per-slot uplink-energy slacks ``tau`` and the
auxiliary slacks of the rate and propulsion surrogates. The beam gains at the
region samples enter the sensing and jamming floors through their
first-order change in the waypoint, and every other non-convex function is
replaced by a global bound that is tight at ``q0``, so ``q0`` itself is
feasible for the program:

* the inverse squared user distance by its tangent in ``||q - q_k||^2``,
* the echo term ``Z1 / d_se^4`` through ``s >= 1 / l(q)`` and
  ``d_se >= Z1 s^2`` with ``l`` the tangent plane of ``d_se^2``,
* ``log2`` of the received power by ``log y0 + 1 - y0 / y``,
* the induced-velocity condition by its first-order expansion, and the
  cubic blade term by ``a >= v1^2``, ``a^2 <= c v1``.

The linearised gains make the program an approximation of the true problem,
so the solution is repaired with exact expressions (beam rescaling to restore
the gain floors, then a fresh offload-ratio solve unless the shares are
fixed) and accepted only if the true objective does not increase. Otherwise
the step is halved toward ``q0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from ..conic import PRIMAL_INFEASIBLE, Affine, ConicBuilder, solve_conic
from ..config import ScenarioConfig
from ..model import (
    EveRegion,
    cfg_steering,
    quad_form,
    SolutionState,
    compute_energy,
    fly_energy,
    objective,
    propulsion_power,
    sensing_energy,
    speeds,
)
from .common import FAILED, INFEASIBLE, KEPT, OPTIMAL, BlockResult, maybe_dump, slot_capacity
from .eligibility import CHECK_RTOL
from .geometry import SlotGeometry
from .offload import solve_offload_lp
from .surrogates import LN2, induced_velocity_ratio

SOCP_TOL = 1e-7
SOCP_MAX_ITER = 20_000
MAX_BACKTRACKS = 10


@dataclass
class _SlotVars:
    n: int
    k: int
    t: Optional[int]
    tau0: float


def _one():
    return Affine.constant([1.0])


class _Positions:
    """Waypoints written as ``q[n] = q0[n] + L * d[n]`` with dimensionless ``d``."""

    def __init__(self, bld: ConicBuilder, Q0: np.ndarray, length: float):
        self.Q0 = Q0
        self.L = length
        self.d = bld.variable("d", Q0.shape)

    def at(self, n: int) -> Affine:
        return Affine.var(self.d[n]) * self.L + self.Q0[n]

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.Q0 + self.L * x[self.d]

    def ball(self, bld: ConicBuilder, n: int, center, radius_sq: Affine, ref_sq: float):
        """``||q[n] - center||^2 <= radius_sq`` with both sides divided by ``ref_sq``."""
        center = np.asarray(center, dtype=float)
        r = 1.0 / np.sqrt(ref_sq)
        bld.add_rotated_soc(radius_sq * (1.0 / ref_sq), _one(), (self.at(n) - center) * r)


def gain_gradients(W, q0, pts, cfg: ScenarioConfig, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of the beampattern gains toward every sample, (P, 2)."""
    out = np.empty((len(pts), 2))
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = h
        plus = quad_form(W, cfg_steering(q0 + e, pts, cfg))
        minus = quad_form(W, cfg_steering(q0 - e, pts, cfg))
        out[:, axis] = (plus - minus) / (2.0 * h)
    return out


def build_trajectory_socp(state: SolutionState, cfg: ScenarioConfig, geo: SlotGeometry, pts, *,
                          trust_radius: Optional[float] = None, steer_gradients: bool = True,
                          radar: bool = True):
    """Assemble the convex program around ``state.Qs``.

    With ``steer_gradients`` the gain floors track the first-order change of
    the steering vectors; otherwise the gains are frozen at ``state.Qs``.

    Returns ``(builder, positions, slot_vars)``.
    """
    Q0 = state.Qs
    N = Q0.shape[0]
    H2 = cfg.altitude**2
    L = cfg.step_max
    V = cfg.v_max
    bld = ConicBuilder()
    pos = _Positions(bld, Q0, L)
    bld.add_zero(Affine.var(pos.d[0]) - (np.asarray(cfg.uav_start, dtype=float) - Q0[0]) / L)
    bld.add_zero(Affine.var(pos.d[-1]) - (np.asarray(cfg.uav_end, dtype=float) - Q0[-1]) / L)
    if trust_radius is not None:
        for n in range(1, N - 1):
            bld.add_soc(Affine.constant([trust_radius / L]), Affine.var(pos.d[n]))

    # kinematics and propulsion; speeds are in units of V, a ~ v1^2, c3 ~ v1^3
    S = N - 1
    v1 = bld.variable("v1", S)
    v2 = bld.variable("v2", S)
    s2 = bld.variable("s2", S)
    r = bld.variable("r", S)
    a = bld.variable("a", S)
    c3 = bld.variable("c3", S)
    step0 = np.diff(Q0, axis=0)
    v2_0 = induced_velocity_ratio(np.linalg.norm(step0, axis=1) / cfg.slot_len, cfg)
    scale = cfg.v0**2 * cfg.slot_len**2
    for n in range(S):
        step = Affine.var(pos.d[n + 1]) - Affine.var(pos.d[n]) + step0[n] / L
        bld.add_soc(_one(), step)
        bld.add_soc(Affine.var([v1[n]]), step)
        bld.add_rotated_soc(Affine.var([s2[n]]), Affine.var([v2[n]]), _one())
        bld.add_rotated_soc(Affine.var([r[n]]), _one(), Affine.var([s2[n]]))
        g = 2.0 * L / scale * step0[n]
        lin = Affine.linear(
            np.hstack([[2.0 * v2_0[n]], g, -g]),
            np.hstack([[v2[n]], pos.d[n + 1], pos.d[n]]),
            -v2_0[n] ** 2 + float(step0[n] @ step0[n]) / scale,
        )
        bld.add_nonneg(lin - Affine.var([r[n]]))
        bld.add_rotated_soc(Affine.var([a[n]]), _one(), Affine.var([v1[n]]))
        bld.add_rotated_soc(Affine.var([c3[n]]), Affine.var([v1[n]]), Affine.var([a[n]]))
    bld.add_nonneg(Affine.var(v2))

    blade = 0.5 * cfg.d0 * cfg.rho * cfg.solidity * cfg.disc_area
    fly = (
        Affine.linear(np.full(S, 3.0 * cfg.p_blade * V**2 / cfg.u_tip**2), a)
        + Affine.linear(np.full(S, cfg.p_induced), v2)
        + Affine.linear(np.full(S, blade * V**3), c3)
    ) * cfg.slot_len + cfg.slot_len * (S * cfg.p_blade + propulsion_power(0.0, cfg))
    fixed = sensing_energy(state.W, cfg) + compute_energy(state.A, state.B, cfg)
    fly0 = fly_energy(Q0, cfg)
    bld.add_nonneg((Affine.constant([cfg.e_max - fixed]) - fly) * (1.0 / fly0))

    slots = []
    users = state.active_user()
    Z2 = cfg.user_tx_power * cfg.ref_gain * cfg.num_antennas
    xi = cfg.rcs * cfg.ref_gain * cfg.num_antennas
    tau_total = 0.0
    for n in np.flatnonzero(users >= 0):
        k = int(users[n])
        G = geo.gains(state.W[n], n)
        d2_0 = geo.d_se2[n]
        # sensing and jamming floors d_se^2 * floor <= G, with the gains
        # expanded to first order in the waypoint
        floor = geo.req_eve[k, n] / d2_0
        if radar:
            floor = np.maximum(cfg.gamma_sen, floor)
        dG = gain_gradients(state.W[n], Q0[n], pts, cfg) if steer_gradients else np.zeros((len(pts), 2))
        for p in range(len(pts)):
            if floor[p] > 0:
                bound = Affine.linear(L * dG[p] / floor[p], pos.d[n], G[p] / floor[p] - H2)
                pos.ball(bld, n, pts[p], bound, d2_0[p])

        # inverse squared user distance, tangent in u = ||q - q_k||^2
        u0 = float(np.sum((Q0[n] - cfg.users[k]) ** 2))
        dsk0 = 1.0 / (u0 + H2)
        x_sk = bld.variable(f"dsk[{n}]")
        pos.ball(bld, n, cfg.users[k], Affine.linear([-(u0 + H2)], [x_sk], 2.0 * u0 + H2), u0 + H2)

        # echo slack: x_se * dse0 >= Z1_p / d_p^4 for every sample
        Z1 = xi * G
        dse0 = float(np.max(Z1 / d2_0**2))
        x_se = bld.variable(f"dse[{n}]")
        for p in range(len(pts)):
            kappa = Z1[p] / (d2_0[p] ** 2 * dse0) if dse0 > 0 else 0.0
            if kappa <= 0:
                continue
            sp_ = bld.variable(f"s[{n},{p}]")
            # tangent plane of ||q - e||^2 + H^2 over its reference value
            ell = Affine.linear(2.0 * L * (Q0[n] - pts[p]) / d2_0[p], pos.d[n], 1.0)
            bld.add_rotated_soc(Affine.var([sp_]), ell, _one())
            bld.add_rotated_soc(Affine.var([x_se]), _one(), Affine.var([sp_]) * np.sqrt(kappa))
        bld.add_nonneg(Affine.var([x_sk]))
        bld.add_nonneg(Affine.var([x_se]))

        # rate lower bound, equal to the frozen-steering rate at the reference
        noise = cfg.noise_s
        y0 = dse0 + Z2 * dsk0 + noise
        w = bld.variable(f"w[{n}]")
        y_hat = Affine.linear([dse0 / y0, Z2 * dsk0 / y0], [x_se, x_sk], noise / y0)
        bld.add_rotated_soc(Affine.var([w]), y_hat, _one())
        base = dse0 + noise
        R0 = float(np.log2(y0 / base))
        rate = Affine.linear(
            [-1.0 / LN2, -dse0 / (base * LN2)], [w, x_se], R0 + 1.0 / LN2 + dse0 / (base * LN2)
        )
        bld.add_nonneg((rate - float(np.log2(1.0 + cfg.gamma_s))) * (1.0 / R0))
        alpha = float(state.A[k, n])
        t = None
        tau0 = 0.0
        if alpha > 0:
            c = alpha * cfg.D[k] / cfg.bandwidth
            t_com = alpha * cfg.D[k] * cfg.cycles_uav / cfg.cpu_uav
            bld.add_nonneg((rate - c / (cfg.slot_len - t_com)) * (1.0 / R0))
            tau0 = cfg.user_tx_power * c / R0
            t = bld.variable(f"tau[{n}]")
            bld.add_rotated_soc(Affine.var([t]), rate * (1.0 / R0), _one())
            tau_total += tau0
        slots.append(_SlotVars(int(n), k, t, tau0))
    for sv in slots:
        if sv.t is not None:
            bld.minimize(Affine.linear([sv.tau0 / tau_total], [sv.t]))
    # a vanishing propulsion weight keeps idle stretches of the path well defined
    bld.minimize(fly * (1e-6 / fly0))
    return bld, pos, slots


def _repair(state: SolutionState, Qs, cfg: ScenarioConfig, region: EveRegion, fixed_offload: bool,
            radar: bool = True):
    """Make a candidate trajectory feasible with exact expressions, or return None."""
    geo = SlotGeometry.build(Qs, cfg, region)
    new = state.copy()
    new.Qs = Qs
    users = state.active_user()
    for n in np.flatnonzero(users >= 0):
        k = int(users[n])
        W = new.W[n]
        req = geo.requirement(k, n) if radar else geo.req_eve[k, n]
        gains = geo.gains(W, n)
        need = req > 0
        if need.any():
            if np.any(gains[need] <= 0):
                return None
            ratio = float(np.max(req[need] / gains[need]))
            if ratio > 1.0:
                W = W * ratio
                new.W[n] = W
                new.beams[n] = new.beams[n] * np.sqrt(ratio)
        if np.real(np.trace(W)) > cfg.p_max * (1 + CHECK_RTOL):
            return None
        X = geo.echo_power(W, n) + cfg.noise_s
        if geo.signal[k, n] / X < cfg.gamma_s * (1 - CHECK_RTOL):
            return None
        if fixed_offload:
            rate = float(np.log2(1.0 + geo.signal[k, n] / X))
            if new.A[k, n] > float(slot_capacity(rate, k, cfg)) * (1 + CHECK_RTOL):
                return None
    if fixed_offload:
        allowance = cfg.e_max - fly_energy(Qs, cfg) - sensing_energy(new.W, cfg)
        if compute_energy(new.A, new.B, cfg) > allowance * (1 + CHECK_RTOL):
            return None
        return new
    # re-balance the offload shares against the new rates and the freed budget
    A, _, res = solve_offload_lp(new.B, new.W, Qs, cfg, region, radar=radar, geo=geo)
    if A is None:
        return None
    new.A = A
    return new


def solve_trajectory_sca(
    state: SolutionState,
    cfg: ScenarioConfig,
    region: EveRegion,
    *,
    fixed_offload: bool = False,
    trust_radius: Optional[float] = None,
    steer_gradients: bool = True,
    radar: bool = True,
    max_backtracks: int = MAX_BACKTRACKS,
    geo: Optional[SlotGeometry] = None,
    dump: Optional[TextIO] = None,
):
    """One SCA step on the trajectory for fixed A, B and beams.

    After the convex step the candidate is repaired with exact expressions:
    beams are rescaled to restore the gain floors and, unless
    ``fixed_offload`` is set, the offload shares are re-optimised for the new
    rates and the propulsion energy the move frees. A move is accepted only
    if it beats the same repair at zero step; otherwise the step is halved.
    Returns ``(new_state, result)``; ``result.info`` holds the surrogate
    optimum ``surrogate_tau`` and the number of backtracks taken.
    """
    geo = SlotGeometry.build(state.Qs, cfg, region) if geo is None else geo
    old_obj = objective(state, cfg, region)
    if cfg.step_max <= 0:
        # the path is pinned to its start point
        return state, BlockResult(OPTIMAL, old_obj, info={"step": 0.0})
    bld, pos, slots = build_trajectory_socp(
        state, cfg, geo, region.points, trust_radius=trust_radius, steer_gradients=steer_gradients,
        radar=radar,
    )
    prob = bld.build()
    maybe_dump(prob, dump, "trajectory-socp")
    sol = solve_conic(prob, tol=SOCP_TOL, max_iter=SOCP_MAX_ITER)
    info = {"solver": sol.status, "iterations": sol.iterations, "seconds": sol.info.get("seconds")}
    if sol.status == PRIMAL_INFEASIBLE:
        return state, BlockResult(INFEASIBLE, old_obj, report={"trajectory-socp": sol.status}, info=info)
    if not np.all(np.isfinite(sol.x)):
        return state, BlockResult(FAILED, old_obj, report={"trajectory-socp": sol.status}, info=info)
    Q_star = pos.value(sol.x)
    Q_star[0], Q_star[-1] = cfg.uav_start, cfg.uav_end
    info["surrogate_tau"] = float(sum(sv.tau0 * sol.x[sv.t] for sv in slots if sv.t is not None))
    info["reference_tau"] = float(sum(sv.tau0 for sv in slots if sv.t is not None))

    # the zero step re-balances the offload shares only; a move must beat it
    Q0 = state.Qs
    baseline = _repair(state, Q0, cfg, region, fixed_offload, radar)
    base_obj = objective(baseline, cfg, region) if baseline is not None else np.inf
    if base_obj > old_obj:
        baseline, base_obj = state, old_obj
    step = 1.0
    for attempt in range(max_backtracks + 1):
        Qc = Q0 + step * (Q_star - Q0)
        if np.all(speeds(Qc, cfg) <= cfg.v_max * (1 + CHECK_RTOL)):
            cand = _repair(state, Qc, cfg, region, fixed_offload, radar)
            if cand is not None:
                obj = objective(cand, cfg, region)
                if obj <= base_obj:
                    info.update(backtracks=attempt, step=step)
                    return cand, BlockResult(OPTIMAL, obj, info=info)
        step *= 0.5
    info.update(backtracks=max_backtracks + 1, step=0.0)
    status = KEPT if baseline is state else OPTIMAL
    return baseline, BlockResult(status, base_obj, info=info)
