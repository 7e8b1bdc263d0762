import numpy as np
import pytest

from secure_iscc.config import ConfigError, ScenarioConfig, preset
from secure_iscc.model import (
    EveRegion,
    SolutionState,
    beampattern_gain,
    computing_times,
    eve_rate_worst_case,
    eve_sinr_samples,
    fly_energy,
    g2a_channel_gain,
    local_energy,
    offload_energy,
    offload_rate_hat,
    propulsion_power,
    propulsion_power_derivative,
    ses_power_samples,
    steering_vector,
    uav_energy,
    worst_case_ses_power,
)


@pytest.fixture
def cfg():
    return preset("scenario1")


def one_point(q):
    return EveRegion(np.array([q], dtype=float))


def test_steering_closed_form():
    a = steering_vector((0.0, 0.0), (50.0, 25.0), 50.0, 4, 4)
    mx, my = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    expected = np.exp(1j * np.pi * (-2 * mx / 3 - my / 3)).ravel()
    assert np.allclose(a, expected, atol=1e-12)
    assert np.isclose(np.vdot(a, a).real, 16.0)


def test_steering_overhead_and_single_element():
    assert np.allclose(steering_vector((3.0, 4.0), (3.0, 4.0), 50.0, 4, 4), np.ones(16))
    assert np.allclose(steering_vector((0.0, 0.0), (80.0, -7.0), 50.0, 1, 1), [1.0])


def test_steering_unit_modulus_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        qs, qg = rng.uniform(-300, 300, 2), rng.uniform(-300, 300, 2)
        a = steering_vector(qs, qg, rng.uniform(10, 100), 4, 3)
        assert np.allclose(np.abs(a), 1.0)
        assert np.isclose(np.vdot(a, a).real, 12.0)


def test_channel_gain(cfg):
    assert np.isclose(g2a_channel_gain((0.0, 0.0), (50.0, 25.0), cfg), 16e-3 / 5625, rtol=1e-12)
    assert np.isclose(g2a_channel_gain((5.0, 5.0), (5.0, 5.0), cfg), 16e-3 / 2500, rtol=1e-12)


def test_channel_gain_inverse_square():
    c = ScenarioConfig(altitude=1e-9)
    g1 = g2a_channel_gain((0.0, 0.0), (30.0, 40.0), c)
    g2 = g2a_channel_gain((0.0, 0.0), (60.0, 80.0), c)
    assert np.isclose(g1 / g2, 4.0, rtol=1e-9)


def test_ses_power(cfg):
    q = (0.0, 0.0)
    W0 = np.zeros((16, 16), complex)
    region = EveRegion.from_config(cfg)
    assert worst_case_ses_power(W0, q, region, cfg) == 0.0
    P = 2.0
    Wiso = P / 16 * np.eye(16)
    d = np.sqrt(30.0**2 + 40.0**2 + 50.0**2)
    expect = cfg.rcs * cfg.ref_gain * P * 16 / d**4
    assert np.isclose(worst_case_ses_power(Wiso, q, one_point((30.0, 40.0)), cfg), expect, rtol=1e-12)
    two = EveRegion(np.array([[30.0, 40.0], [60.0, 80.0]]))
    assert np.isclose(worst_case_ses_power(Wiso, q, two, cfg), expect, rtol=1e-12)


def test_offload_rate(cfg):
    q_s, q_k = (0.0, 0.0), (50.0, 25.0)
    region = EveRegion.from_config(cfg)
    W0 = np.zeros((16, 16), complex)
    r_off = offload_rate_hat(q_s, q_k, W0, region, False, cfg)
    assert np.isclose(r_off, np.log2(1 + 0.1 * 16e-3 / 5625 / 1e-12), rtol=1e-12)
    assert abs(r_off - 18.12) < 0.01
    assert offload_rate_hat(q_s, q_k, W0, region, True, cfg) == r_off


def test_offload_rate_monotone_in_power(cfg):
    rng = np.random.default_rng(2)
    region = EveRegion.from_config(cfg)
    X = rng.normal(size=(16, 4)) + 1j * rng.normal(size=(16, 4))
    D = X @ X.conj().T
    rates = [offload_rate_hat((10.0, 10.0), (50.0, 25.0), t * D, region, True, cfg) for t in (0, 0.1, 1, 10)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_eve_rate(cfg):
    W0 = np.zeros((16, 16), complex)
    r = eve_rate_worst_case((50.0, 25.0), W0, (0.0, 0.0), one_point((100.0, 100.0)), False, cfg)
    assert np.isclose(r, np.log2(1 + 0.1 * 1e-3 / 8125 / 1e-12), rtol=1e-12)
    assert abs(r - 13.59) < 0.01
    far = eve_rate_worst_case((50.0, 25.0), W0, (0.0, 0.0), one_point((1e9, 1e9)), True, cfg)
    assert far < 1e-9


def test_eve_worst_at_nearest_corner(cfg):
    region = EveRegion.from_config(cfg)
    W0 = np.zeros((16, 16), complex)
    q_k = np.array([50.0, 25.0])
    s = eve_sinr_samples(q_k, W0, (0.0, 0.0), region, False, cfg)
    nearest = np.argmin(np.sum((region.points - q_k) ** 2, axis=1))
    assert np.argmax(s) == nearest
    assert np.allclose(region.points[nearest], (90.0, 90.0))


def test_beampattern(cfg):
    rng = np.random.default_rng(3)
    W0 = np.zeros((16, 16), complex)
    assert beampattern_gain(W0, (0.0, 0.0), (30.0, 5.0), cfg) == 0.0
    P = 1.7
    for _ in range(20):
        qs, qe = rng.uniform(0, 200, 2), rng.uniform(0, 200, 2)
        assert np.isclose(beampattern_gain(P / 16 * np.eye(16), qs, qe, cfg), P, rtol=1e-12)
    qs, qe = (0.0, 0.0), (70.0, 20.0)
    a = steering_vector(qs, qe, cfg.altitude, 4, 4)
    assert np.isclose(beampattern_gain(0.3 * np.outer(a, a.conj()), qs, qe, cfg), 0.3 * 256, rtol=1e-12)


def test_propulsion(cfg):
    assert np.isclose(propulsion_power(0.0, cfg), 168.49, rtol=1e-12)
    v = 1e3
    lead = 0.5 * cfg.d0 * cfg.rho * cfg.solidity * cfg.disc_area * v**3
    assert abs(propulsion_power(v, cfg) / lead - 1) < 1e-2
    # independent evaluation of the closed form at 8 m/s
    import mpmath as mp

    mp.mp.dps = 40
    v = mp.mpf(8)
    P0, Pi, U, v0 = mp.mpf("79.86"), mp.mpf("88.63"), mp.mpf(120), mp.mpf("4.03")
    ref = (P0 * (1 + 3 * v**2 / U**2)
           + Pi * mp.sqrt(mp.sqrt(1 + v**4 / (4 * v0**4)) - v**2 / (2 * v0**2))
           + mp.mpf("0.5") * mp.mpf("0.6") * mp.mpf("1.225") * mp.mpf("0.05") * mp.mpf("0.503") * v**3)
    assert np.isclose(propulsion_power(8.0, cfg), float(ref), rtol=1e-13)


def test_propulsion_derivative(cfg):
    rng = np.random.default_rng(4)
    for v in rng.uniform(0.01, 30, 50):
        h = 1e-5 * max(v, 1.0)
        fd = (propulsion_power(v + h, cfg) - propulsion_power(v - h, cfg)) / (2 * h)
        assert np.isclose(propulsion_power_derivative(v, cfg), fd, rtol=1e-6, atol=1e-9)


def test_computing(cfg):
    K, N = 4, 40
    A = np.zeros((K, N))
    B = np.zeros((K, N))
    T_loc, T_off, T_com = computing_times(A, B, np.ones((K, N)), cfg)
    assert np.allclose(T_loc, 200.0)
    assert not T_off.any() and not T_com.any()
    assert np.allclose(local_energy(A, B, cfg), 2.0)
    A[0, 3] = B[0, 3] = 1.0
    _, _, T_com = computing_times(A, B, np.ones((K, N)), cfg)
    assert np.isclose(T_com[0, 3], 4.0)
    assert local_energy(A, B, cfg)[0] == 0.0


def test_offload_energy(cfg):
    A = np.zeros((4, 40))
    B = np.zeros((4, 40))
    A[0, 0] = 0.5  # 1e7 of the 2e7 bits
    B[0, 0] = 1.0
    rates = np.full((4, 40), 10.0)
    assert np.isclose(offload_energy(A, B, rates, cfg)[0, 0], 0.1, rtol=1e-12)


def test_uav_energy(cfg):
    N = cfg.num_slots
    Qs = np.zeros((N, 2))
    W = np.zeros((N, 16, 16), complex)
    A = np.zeros((4, N))
    B = np.zeros((4, N))
    fly, sen, com = uav_energy(B, A, W, Qs, cfg)
    assert np.isclose(fly, 40 * 168.49) and sen == 0 and com == 0
    A[0, 0] = B[0, 0] = 1.0
    assert np.isclose(uav_energy(B, A, W, Qs, cfg)[2], 5000.0, rtol=1e-12)
    W[:] = np.eye(16) / 16
    assert np.isclose(uav_energy(B, A, W, Qs, cfg)[1], 40.0, rtol=1e-12)
    assert fly_energy(Qs, cfg) > 0


def test_ses_samples_bruteforce(cfg):
    rng = np.random.default_rng(5)
    region = EveRegion.from_config(cfg)
    X = rng.normal(size=(16, 2)) + 1j * rng.normal(size=(16, 2))
    W = X @ X.conj().T
    q = (37.0, 12.0)
    brute = max(
        cfg.rcs * cfg.ref_gain * 16 * beampattern_gain(W, q, p, cfg) / (np.sum((np.array(q) - p) ** 2) + 2500) ** 2
        for p in region.points
    )
    assert worst_case_ses_power(W, q, region, cfg) == pytest.approx(brute, rel=1e-12)
    assert ses_power_samples(W, q, region, cfg).shape == (25,)


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig(num_slots=40, slot_len=1.0, total_time=30.0)
    assert {"num_slots", "total_time"} <= set(exc.value.fields)
    with pytest.raises(ConfigError):
        ScenarioConfig(v_max=1.0)


def test_presets():
    c1 = preset("scenario1")
    assert c1.user_pos == ((50.0, 25.0), (100.0, 40.0), (150.0, 70.0), (175.0, 150.0))
    assert c1.uav_start == (0.0, 0.0) and c1.uav_end == (200.0, 200.0)
    assert c1.v_max == 8.0 and c1.eve_center == (100.0, 100.0) and c1.eve_half_side == 10.0
    c3 = preset("scenario3")
    assert c3.uav_start == c3.uav_end == (20.0, 100.0) and c3.v_max == 15.0


def test_state_energies_nonnegative(cfg):
    N = cfg.num_slots
    st = SolutionState(np.zeros((4, N)), np.zeros((4, N)), np.zeros((N, 16, 16), complex), np.zeros((N, 2)))
    assert st.active_user().tolist() == [-1] * N
