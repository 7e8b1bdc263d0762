import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from secure_iscc.config import ScenarioConfig, preset
from secure_iscc.model import (
    EveRegion,
    SolutionState,
    beampattern_gain,
    eve_sinr_samples,
    fly_energy,
    objective,
    steering_vector,
    uav_sinr,
)
from secure_iscc.orchestrator import audit_feasibility, initialize_state
from secure_iscc.subproblems import (
    SlotGeometry,
    build_eligibility,
    inverse_distance_tangent,
    kinematics_lhs,
    kinematics_linearized,
    rate_exact_traj,
    rate_surrogate_traj,
    round_schedule,
    solve_beamforming_sdp,
    solve_offload_lp,
    solve_scheduling_lp,
    solve_trajectory_sca,
    surrogate_kinematics,
    taylor_rate_in_interference,
)
from secure_iscc.subproblems.common import INFEASIBLE, OPTIMAL

# ----------------------------------------------------------------------------
# surrogates


def test_taylor_rate_bounds():
    rng = np.random.default_rng(0)
    g = 10 ** rng.uniform(-14, -8, 10_000)
    X_ref = 10 ** rng.uniform(-13, -9, 10_000)
    X = X_ref * 10 ** rng.uniform(-2, 2, 10_000)
    true = np.log2(1 + g / X)
    assert np.all(taylor_rate_in_interference(X, X_ref, g) <= true + 1e-9)
    assert np.allclose(taylor_rate_in_interference(X_ref, X_ref, g), np.log2(1 + g / X_ref), atol=1e-9)
    assert np.all(taylor_rate_in_interference(X, X_ref, 0.0) == 0.0)


def test_trajectory_rate_surrogate_bounds():
    rng = np.random.default_rng(1)
    n = 10_000
    Z2 = 10 ** rng.uniform(-10, -6, n)
    d_sk = 10 ** rng.uniform(-5, -3, n)
    ref = 10 ** rng.uniform(-14, -9, n)
    d_se = ref * 10 ** rng.uniform(-2, 2, n)
    noise = 1e-12
    assert np.all(rate_surrogate_traj(d_se, d_sk, ref, Z2, noise) <= rate_exact_traj(d_se, d_sk, Z2, noise) + 1e-9)
    assert np.allclose(rate_surrogate_traj(ref, d_sk, ref, Z2, noise), rate_exact_traj(ref, d_sk, Z2, noise),
                       atol=1e-9)


def test_inverse_distance_tangent():
    rng = np.random.default_rng(2)
    q = rng.uniform(-300, 300, (10_000, 2))
    q_ref = rng.uniform(-300, 300, (10_000, 2))
    q_k = rng.uniform(-300, 300, (10_000, 2))
    H = 50.0
    true = 1 / (np.sum((q - q_k) ** 2, axis=1) + H**2)
    assert np.all(inverse_distance_tangent(q, q_ref, q_k, H) <= true * (1 + 1e-12))
    at_ref = 1 / (np.sum((q_ref - q_k) ** 2, axis=1) + H**2)
    assert np.allclose(inverse_distance_tangent(q_ref, q_ref, q_k, H), at_ref, rtol=1e-12)


def test_kinematics_linearization():
    cfg = preset("scenario1")
    rng = np.random.default_rng(3)
    v2 = rng.uniform(0.05, 2, 10_000)
    v2_ref = rng.uniform(0.05, 2, 10_000)
    qp = rng.uniform(-20, 20, (10_000, 2, 2))
    qp_ref = rng.uniform(-20, 20, (10_000, 2, 2))
    assert np.all(kinematics_linearized(v2, v2_ref, qp, qp_ref, cfg) <= kinematics_lhs(v2, qp, cfg) + 1e-9)
    assert np.allclose(kinematics_linearized(v2_ref, v2_ref, qp_ref, qp_ref, cfg),
                       kinematics_lhs(v2_ref, qp_ref, cfg), rtol=1e-12)
    hover = np.zeros((2, 2))
    assert surrogate_kinematics(1.0, 1.0, hover, hover, cfg) == pytest.approx(0.0, abs=1e-15)


# ----------------------------------------------------------------------------
# eligibility


def test_vacuous_thresholds_make_everything_eligible():
    cfg = preset("scenario1").replace(gamma_s=0.0, gamma_e=np.inf, gamma_sen=0.0)
    region = EveRegion.from_config(cfg)
    N = cfg.num_slots
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, N)
    W = np.zeros((N, 16, 16), complex)
    mask = build_eligibility(Qs, W, cfg, region)
    assert mask.pair.all() and mask.sensing.all()


def test_zero_beam_is_sensing_infeasible():
    cfg = preset("scenario1")
    region = EveRegion.from_config(cfg)
    N = cfg.num_slots
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, N)
    mask = build_eligibility(Qs, np.zeros((N, 16, 16), complex), cfg, region)
    assert not mask.pair.any() and not mask.sensing.any()


def test_eligibility_matches_bruteforce():
    cfg = preset("scenario1")
    region = EveRegion.from_config(cfg)
    N = cfg.num_slots
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, N)
    a = steering_vector(Qs[0], cfg.eve_center, cfg.altitude, 4, 4)
    W = np.zeros((N, 16, 16), complex)
    W[0] = np.outer(a, a.conj()) / 16  # trace 1 W
    mask = build_eligibility(Qs, W, cfg, region)
    q_k = cfg.users[0]
    sinr_ok = uav_sinr(Qs[0], q_k, W[0], region, True, cfg) >= cfg.gamma_s
    eve_ok = all(eve_sinr_samples(q_k, W[0], Qs[0], region, True, cfg) <= cfg.gamma_e)
    sense_ok = all(
        beampattern_gain(W[0], Qs[0], p, cfg) >= (np.sum((Qs[0] - p) ** 2) + cfg.altitude**2) * cfg.gamma_sen
        for p in region.points
    )
    assert mask.pair[0, 0] == (sinr_ok and eve_ok and sense_ok)
    assert mask.sensing[0] == sense_ok


# ----------------------------------------------------------------------------
# offload LP


def _single_user(**kw):
    base = dict(user_pos=((50.0, 25.0),), uav_start=(0.0, 0.0), uav_end=(40.0, 0.0), num_slots=5,
                slot_len=1.0, total_time=5.0, v_max=10.0, gamma_e=np.inf)
    base.update(kw)
    return ScenarioConfig(**base)


def test_offload_takes_slot_capacity():
    cfg = _single_user()
    region = EveRegion.from_config(cfg)
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, cfg.num_slots)
    B = np.zeros((1, 5))
    B[0, 2] = 1.0
    W = np.zeros((5, 16, 16), complex)
    A, _, res = solve_offload_lp(B, W, Qs, cfg, region, radar=False)
    assert res.status == OPTIMAL
    d2 = np.sum((Qs[2] - cfg.users[0]) ** 2) + cfg.altitude**2
    R = np.log2(1 + cfg.user_tx_power * cfg.ref_gain * 16 / d2 / cfg.noise_s)
    D = cfg.task_bits[0]
    cap = cfg.slot_len / (D / (cfg.bandwidth * R) + D * cfg.cycles_uav / cfg.cpu_uav)
    assert A[0, 2] == pytest.approx(min(1.0, cap), rel=1e-7)
    assert np.count_nonzero(A) == 1


def test_offload_declined_when_local_is_cheaper():
    cfg = _single_user(cpu_user=(1e7,))  # local energy 0.02 J per task
    region = EveRegion.from_config(cfg)
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, cfg.num_slots)
    B = np.zeros((1, 5))
    B[0, :] = 1.0
    A, _, res = solve_offload_lp(B, np.zeros((5, 16, 16), complex), Qs, cfg, region, radar=False)
    assert res.status == OPTIMAL
    assert np.allclose(A, 0.0, atol=1e-9)


def test_offload_infeasible_without_schedule_under_deadline():
    cfg = _single_user(enforce_deadline=True)
    region = EveRegion.from_config(cfg)
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, cfg.num_slots)
    A, _, res = solve_offload_lp(np.zeros((1, 5)), np.zeros((5, 16, 16), complex), Qs, cfg, region, radar=False)
    assert A is None and res.status == INFEASIBLE and "deadline" in res.report


def test_offload_matches_highs():
    cfg = preset("scenario1")
    region = EveRegion.from_config(cfg)
    st = initialize_state(cfg)
    A, _, res = solve_offload_lp(st.B, st.W, st.Qs, cfg, region)
    oracle = _offload_oracle(st.B, st.W, st.Qs, cfg, region, radar=True)
    assert res.objective == pytest.approx(oracle, rel=1e-7)


# ----------------------------------------------------------------------------
# scheduling


def _offload_oracle(B, W, Qs, cfg, region, radar):
    """Exact offload LP for a fixed schedule, solved with HiGHS."""
    geo = SlotGeometry.build(Qs, cfg, region)
    K, N = B.shape
    pairs = np.argwhere(B > 0.5)
    e_loc = cfg.cpu_eff * cfg.D * cfg.F * cfg.f**2
    if len(pairs) == 0:
        return float(e_loc.sum())
    c, ub = [], []
    w_com = cfg.cpu_eff * cfg.D * cfg.cycles_uav * cfg.cpu_uav**2
    for k, n in pairs:
        echo = geo.echo_power(W[n], n) if radar else 0.0
        R = np.log2(1 + geo.signal[k, n] / (echo + cfg.noise_s))
        D = cfg.D[k]
        c.append(cfg.user_tx_power * D / (cfg.bandwidth * R) - e_loc[k])
        ub.append(min(1.0, cfg.slot_len / (D / (cfg.bandwidth * R) + D * cfg.cycles_uav / cfg.cpu_uav)))
    rows, rhs = [], []
    for k in range(K):
        rows.append([1.0 if kk == k else 0.0 for kk, _ in pairs])
        rhs.append(1.0)
    rows.append([w_com[k] for k, _ in pairs])
    active = B.max(axis=0)
    sens = cfg.slot_len * np.sum(np.real(np.trace(W, axis1=1, axis2=2)) * active)
    rhs.append(cfg.e_max - fly_energy(Qs, cfg) - sens)
    out = linprog(c, A_ub=rows, b_ub=rhs, bounds=list(zip([0.0] * len(ub), ub)), method="highs")
    assert out.status == 0
    return float(out.fun + e_loc.sum())


def _toy():
    return ScenarioConfig(
        user_pos=((10.0, 30.0), (30.0, -20.0)), uav_start=(0.0, 0.0), uav_end=(40.0, 0.0), num_slots=5,
        slot_len=1.0, total_time=5.0, v_max=10.0, gamma_e=np.inf, cpu_uav=2e10,
        e_max=1200.0, name="toy",
    )


def test_toy_scheduling_matches_enumeration():
    cfg = _toy()
    region = EveRegion.from_config(cfg)
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, 5)
    W = np.zeros((5, 16, 16), complex)
    best = np.inf
    for choice in itertools.product(range(3), repeat=5):
        B = np.zeros((2, 5))
        for n, c in enumerate(choice):
            if c < 2:
                B[c, n] = 1.0
        best = min(best, _offload_oracle(B, W, Qs, cfg, region, radar=False))
    state = SolutionState(np.zeros((2, 5)), np.zeros((2, 5)), W.copy(), Qs)
    new, res = solve_scheduling_lp(state, cfg, region, radar=False)
    assert res.status == OPTIMAL
    assert objective(new, cfg, region) == pytest.approx(best, rel=1e-7)
    assert np.all(new.B.sum(axis=0) <= 1)


def test_single_user_identical_rates():
    cfg = ScenarioConfig(user_pos=((0.0, 0.0),), uav_start=(0.0, 0.0), uav_end=(0.0, 0.0), num_slots=4,
                         slot_len=1.0, total_time=4.0, gamma_e=np.inf)
    region = EveRegion.from_config(cfg)
    Qs = np.zeros((4, 2))
    state = SolutionState(np.zeros((1, 4)), np.zeros((1, 4)), np.zeros((4, 16, 16), complex), Qs)
    new, res = solve_scheduling_lp(state, cfg, region, radar=False)
    assert res.status == OPTIMAL
    assert set(np.unique(new.B)) <= {0.0, 1.0}
    assert np.all(new.B.sum(axis=0) <= 1)


def test_no_eligible_pair_gives_empty_schedule():
    cfg = _toy().replace(gamma_s=1e12)
    region = EveRegion.from_config(cfg)
    Qs = np.linspace(cfg.uav_start, cfg.uav_end, 5)
    B0 = np.zeros((2, 5))
    state = SolutionState(np.zeros((2, 5)), B0, np.zeros((5, 16, 16), complex), Qs)
    new, res = solve_scheduling_lp(state, cfg, region, radar=False)
    assert not new.B.any()


def test_round_schedule_ties_to_lower_index():
    theta = np.array([[0.5, 0.2, 0.0], [0.5, 0.7, 0.0]])
    B = round_schedule(theta)
    assert B.tolist() == [[1, 0, 0], [0, 1, 0]]


# ----------------------------------------------------------------------------
# beamforming


def test_single_sample_sensing_beam():
    cfg = ScenarioConfig(user_pos=((0.0, 10.0),), uav_start=(0.0, 0.0), uav_end=(0.0, 0.0), num_slots=2,
                         slot_len=1.0, total_time=2.0, gamma_e=np.inf, gamma_sen=1e-5)
    region = EveRegion(np.array([[50.0, 25.0]]))
    Qs = np.zeros((2, 2))
    B = np.array([[1.0, 0.0]])
    W = np.zeros((2, 16, 16), complex)
    W[0] = np.eye(16) * (5625 * 1e-5 / 16) * 1.5  # feasible but wasteful start
    A, _, res = solve_offload_lp(B, W, Qs, cfg, region)
    assert res.status == OPTIMAL
    state = SolutionState(A, B, W, Qs)
    new, res = solve_beamforming_sdp(state, cfg, region, seed=0)
    assert res.status == OPTIMAL
    assert np.real(np.trace(new.W[0])) == pytest.approx(5625 * 1e-5 / 16, rel=1e-3)
    assert np.allclose(new.W[1], 0.0)
    assert np.real(np.trace(new.W[0])) <= cfg.p_max
    assert objective(new, cfg, region) <= objective(state, cfg, region) * (1 + 1e-9)


# ----------------------------------------------------------------------------
# trajectory


def test_pinned_trajectory():
    cfg = ScenarioConfig(user_pos=((0.0, 10.0),), uav_start=(5.0, 5.0), uav_end=(5.0, 5.0), v_max=0.0,
                         num_slots=3, slot_len=1.0, total_time=3.0, gamma_e=np.inf)
    region = EveRegion.from_config(cfg)
    Qs = np.tile([5.0, 5.0], (3, 1))
    state = SolutionState(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((3, 16, 16), complex), Qs)
    new, res = solve_trajectory_sca(state, cfg, region)
    assert np.array_equal(new.Qs, Qs)


@pytest.fixture(scope="module")
def scenario1_init():
    cfg = preset("scenario1")
    return cfg, EveRegion.from_config(cfg), initialize_state(cfg)


def test_trajectory_step_descends(scenario1_init):
    cfg, region, state = scenario1_init
    new, res = solve_trajectory_sca(state, cfg, region)
    assert res.info["surrogate_tau"] < res.info["reference_tau"]
    assert objective(new, cfg, region) <= objective(state, cfg, region)
    assert max(audit_feasibility(new, cfg, region).values()) <= 1e-5
