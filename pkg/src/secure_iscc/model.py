"""Channel, sensing, computing and energy model of the UAV-aided system.

Positions are 2D ground coordinates in meters; the UAV flies at constant
altitude ``cfg.altitude``. Beam covariances are complex Hermitian M x M
matrices in watts with M = array_x * array_y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ScenarioConfig

LN2 = np.log(2.0)


class ModelDomainError(ValueError):
    """Input outside the domain of a model formula."""


# geometry -----------------------------------------------------------------

def distance(q_s, q_g, H: float) -> np.ndarray:
    """3D distance between UAV ground point(s) ``q_s`` and ground point(s) ``q_g``."""
    diff = np.asarray(q_s, dtype=float) - np.asarray(q_g, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1) + H * H)


def direction_cosines(q_s, q_g, H: float):
    q_s = np.asarray(q_s, dtype=float)
    q_g = np.asarray(q_g, dtype=float)
    d = distance(q_s, q_g, H)
    if np.any(d <= 0):
        raise ModelDomainError("UAV and ground point coincide")
    diff = q_s - q_g
    return diff[..., 0] / d, diff[..., 1] / d


def steering_vector(q_s, q_g, H: float, array_x: int, array_y: int) -> np.ndarray:
    """UPA response toward ``q_g``; broadcasts over leading point dimensions.

    Entry ``m_x * array_y + m_y`` equals ``exp(j*pi*(m_x*Phi + m_y*Omega))``.
    """
    phi, omega = direction_cosines(q_s, q_g, H)
    mx = np.arange(array_x)
    my = np.arange(array_y)
    ax = np.exp(1j * np.pi * np.multiply.outer(phi, mx))
    ay = np.exp(1j * np.pi * np.multiply.outer(omega, my))
    out = ax[..., :, None] * ay[..., None, :]
    return out.reshape(out.shape[:-2] + (array_x * array_y,))


def cfg_steering(q_s, q_g, cfg: ScenarioConfig) -> np.ndarray:
    return steering_vector(q_s, q_g, cfg.altitude, cfg.array_x, cfg.array_y)


def quad_form(W: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Real part of ``a^H W a`` broadcasting over leading dimensions of ``a``."""
    return np.real(np.einsum("...i,...ij,...j->...", a.conj(), W, a))


# eavesdropper uncertainty region -------------------------------------------

@dataclass(frozen=True)
class EveRegion:
    """Sample points standing in for the square eavesdropper region."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ModelDomainError("eavesdropper region has no sample points")
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ModelDomainError(f"region points must have shape (P, 2), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def square(cls, center, half_side: float, grid: int = 5) -> "EveRegion":
        """G x G grid over the closed square; the center is appended for even G."""
        c = np.asarray(center, dtype=float)
        if grid <= 1 or half_side == 0:
            return cls(c[None, :])
        ticks = np.linspace(-half_side, half_side, grid)
        gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
        pts = c + np.column_stack([gx.ravel(), gy.ravel()])
        if grid % 2 == 0:
            pts = np.vstack([pts, c])
        return cls(pts)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, grid: Optional[int] = None) -> "EveRegion":
        return cls.square(cfg.eve_center, cfg.eve_half_side, cfg.eve_grid if grid is None else grid)

    def __len__(self) -> int:
        return len(self.points)


# channels, rates, sensing ---------------------------------------------------

def g2a_channel_gain(q_s, q_k, cfg: ScenarioConfig) -> np.ndarray:
    """Squared norm of the UAV-user channel, beta0 * M / d^2."""
    d = distance(q_s, q_k, cfg.altitude)
    return cfg.ref_gain * cfg.num_antennas / d**2


def beampattern_gain(W, q_s, q_e, cfg: ScenarioConfig) -> np.ndarray:
    """Transmit beampattern gain a^H W a toward ``q_e`` (watts)."""
    return quad_form(np.asarray(W), cfg_steering(q_s, q_e, cfg))


def _region_gain(W, q_s, region: EveRegion, cfg):
    a = cfg_steering(np.asarray(q_s, dtype=float)[None, :], region.points, cfg)
    return quad_form(np.asarray(W), a), distance(q_s, region.points, cfg.altitude)


def ses_power_samples(W, q_s, region: EveRegion, cfg: ScenarioConfig) -> np.ndarray:
    """Self-interference power reflected from every region sample."""
    gain, d = _region_gain(W, q_s, region, cfg)
    return cfg.rcs * cfg.ref_gain * cfg.num_antennas * gain / d**4


def worst_case_ses_power(W, q_s, region: EveRegion, cfg: ScenarioConfig) -> float:
    """Largest echo power over the region samples (watts)."""
    return float(np.max(ses_power_samples(W, q_s, region, cfg)))


def uav_sinr(q_s, q_k, W, region: EveRegion, sensing_on: bool, cfg: ScenarioConfig) -> float:
    """SINR at the UAV for the sole active user ``q_k``."""
    signal = cfg.user_tx_power * g2a_channel_gain(q_s, q_k, cfg)
    interf = worst_case_ses_power(W, q_s, region, cfg) if sensing_on else 0.0
    return float(signal / (interf + cfg.noise_s))


def offload_rate_hat(q_s, q_k, W, region: EveRegion, sensing_on: bool, cfg: ScenarioConfig) -> float:
    """Offloading spectral efficiency in bits/s/Hz under worst-case echo."""
    return float(np.log2(1.0 + uav_sinr(q_s, q_k, W, region, sensing_on, cfg)))


def eve_sinr_samples(q_k, W, q_s, region: EveRegion, sensing_on: bool, cfg: ScenarioConfig) -> np.ndarray:
    d_ke2 = np.sum((region.points - np.asarray(q_k, dtype=float)) ** 2, axis=1)
    if np.any(d_ke2 <= 0):
        raise ModelDomainError("user and eavesdropper sample coincide")
    signal = cfg.user_tx_power * cfg.ref_gain / d_ke2
    if sensing_on:
        gain, d_se = _region_gain(W, q_s, region, cfg)
        jam = cfg.ref_gain * gain / d_se**2
    else:
        jam = 0.0
    return signal / (jam + cfg.noise_e)


def eve_rate_worst_case(q_k, W, q_s, region: EveRegion, sensing_on: bool, cfg: ScenarioConfig) -> float:
    """Largest eavesdropping rate over the region samples (bits/s/Hz)."""
    return float(np.max(np.log2(1.0 + eve_sinr_samples(q_k, W, q_s, region, sensing_on, cfg))))


def eve_gain_requirement(q_k, q_s, region: EveRegion, cfg: ScenarioConfig) -> np.ndarray:
    """Beampattern gain each sample needs so that the eavesdropper SINR stays below threshold.

    Nonpositive entries mean the sample is harmless without any jamming.
    """
    d_ke2 = np.sum((region.points - np.asarray(q_k, dtype=float)) ** 2, axis=1)
    d_se2 = distance(q_s, region.points, cfg.altitude) ** 2
    return d_se2 * (cfg.user_tx_power / (d_ke2 * cfg.gamma_e) - cfg.noise_e / cfg.ref_gain)


def sensing_requirement(q_s, region: EveRegion, cfg: ScenarioConfig) -> np.ndarray:
    """Minimum beampattern gain per sample, d_se^2 * Gamma_sen."""
    return distance(q_s, region.points, cfg.altitude) ** 2 * cfg.gamma_sen


# propulsion ------------------------------------------------------------------

def propulsion_power(v, cfg: ScenarioConfig):
    """Rotary-wing propulsion power (watts) at horizontal speed ``v`` (m/s)."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ModelDomainError("speed must be nonnegative")
    v2 = v * v
    induced = cfg.p_induced * np.sqrt(np.sqrt(1.0 + v2 * v2 / (4.0 * cfg.v0**4)) - v2 / (2.0 * cfg.v0**2))
    parasite = 0.5 * cfg.d0 * cfg.rho * cfg.solidity * cfg.disc_area * v**3
    blade = cfg.p_blade * (1.0 + 3.0 * v2 / cfg.u_tip**2)
    out = induced + parasite + blade
    return float(out) if out.ndim == 0 else out


def propulsion_power_derivative(v, cfg: ScenarioConfig):
    """Analytic d/dv of :func:`propulsion_power`."""
    v = np.asarray(v, dtype=float)
    v0sq = cfg.v0**2
    root = np.sqrt(1.0 + v**4 / (4.0 * v0sq**2))
    inner = root - v**2 / (2.0 * v0sq)
    d_inner = v**3 / (2.0 * v0sq**2 * root) - v / v0sq
    out = (
        cfg.p_induced * d_inner / (2.0 * np.sqrt(inner))
        + 1.5 * cfg.d0 * cfg.rho * cfg.solidity * cfg.disc_area * v**2
        + 6.0 * cfg.p_blade * v / cfg.u_tip**2
    )
    return float(out) if out.ndim == 0 else out


def speeds(Qs, cfg: ScenarioConfig) -> np.ndarray:
    """The N-1 per-slot speeds from consecutive waypoints."""
    Qs = np.asarray(Qs, dtype=float)
    return np.linalg.norm(np.diff(Qs, axis=0), axis=1) / cfg.slot_len


def fly_energy(Qs, cfg: ScenarioConfig) -> float:
    """Propulsion energy; the last slot has no successor and hovers."""
    v = speeds(Qs, cfg)
    return float(cfg.slot_len * (np.sum(propulsion_power(v, cfg)) + propulsion_power(0.0, cfg)))


# computing --------------------------------------------------------------------

def computing_times(A, B, rates, cfg: ScenarioConfig):
    """Local, offloading and UAV computing times.

    Returns ``(T_loc (K,), T_offload (K, N), T_com (K, N))`` in seconds.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    rates = np.asarray(rates, dtype=float)
    D = cfg.D[:, None]
    x = B * A
    T_loc = (1.0 - x.sum(axis=1)) * cfg.D * cfg.F / cfg.f
    with np.errstate(divide="ignore", invalid="ignore"):
        T_off = np.where(x > 0, x * D / (cfg.bandwidth * rates), 0.0)
    if np.any(~np.isfinite(T_off)) or np.any((x > 0) & ~(rates > 0)):
        raise ModelDomainError("positive offload over a zero-rate link")
    T_com = A * D * cfg.cycles_uav / cfg.cpu_uav
    return T_loc, T_off, T_com


def local_energy(A, B, cfg: ScenarioConfig) -> np.ndarray:
    x = np.asarray(B, dtype=float) * np.asarray(A, dtype=float)
    return cfg.cpu_eff * (1.0 - x.sum(axis=1)) * cfg.D * cfg.F * cfg.f**2


def offload_energy(A, B, rates, cfg: ScenarioConfig) -> np.ndarray:
    """Per-slot uplink energy (K, N) in joules."""
    _, T_off, _ = computing_times(A, B, rates, cfg)
    return cfg.user_tx_power * T_off


def user_energy(A, B, rates, cfg: ScenarioConfig) -> np.ndarray:
    """Total energy per user (K,)."""
    return local_energy(A, B, cfg) + offload_energy(A, B, rates, cfg).sum(axis=1)


def compute_energy(A, B, cfg: ScenarioConfig) -> float:
    x = np.asarray(B, dtype=float) * np.asarray(A, dtype=float)
    per_bit = cfg.cpu_eff * cfg.cycles_uav * cfg.cpu_uav**2
    return float(np.sum(x * cfg.D[:, None]) * per_bit)


def sensing_energy(W, cfg: ScenarioConfig) -> float:
    return float(cfg.slot_len * np.sum(np.real(np.trace(np.asarray(W), axis1=-2, axis2=-1))))


def uav_energy(B, A, W, Qs, cfg: ScenarioConfig) -> tuple[float, float, float]:
    """``(E_fly, E_sen, E_com)`` in joules."""
    return fly_energy(Qs, cfg), sensing_energy(W, cfg), compute_energy(A, B, cfg)


# state containers ---------------------------------------------------------------

@dataclass
class SolutionState:
    """The four decision blocks plus diagnostics produced by the subproblems.

    A, B : (K, N) offload ratios and 0/1 scheduling.
    W : (N, M, M) beam covariances.
    Qs : (N, 2) UAV waypoints.
    beams : (N, M) recovered beam vectors, zero where a slot carries no beam.
    rank_flags : (N,) True where W[n] is kept with rank above one.
    """

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Qs: np.ndarray
    beams: Optional[np.ndarray] = None
    rank_flags: Optional[np.ndarray] = None
    slacks: dict = field(default_factory=dict)

    def __post_init__(self):
        N = self.Qs.shape[0]
        M = self.W.shape[-1]
        if self.beams is None:
            self.beams = np.zeros((N, M), dtype=complex)
        if self.rank_flags is None:
            self.rank_flags = np.zeros(N, dtype=bool)

    def copy(self) -> "SolutionState":
        return SolutionState(
            A=self.A.copy(),
            B=self.B.copy(),
            W=self.W.copy(),
            Qs=self.Qs.copy(),
            beams=self.beams.copy(),
            rank_flags=self.rank_flags.copy(),
            slacks={k: np.array(v, copy=True) for k, v in self.slacks.items()},
        )

    @property
    def active(self) -> np.ndarray:
        """(N,) boolean: some user is scheduled in the slot."""
        return self.B.sum(axis=0) > 0.5

    def active_user(self) -> np.ndarray:
        """(N,) index of the scheduled user, -1 for idle slots."""
        return np.where(self.active, np.argmax(self.B, axis=0), -1)


def rate_matrix(Qs, W, region: EveRegion, cfg: ScenarioConfig) -> np.ndarray:
    """R_hat for every (user, slot) with sensing assumed on in every slot."""
    Qs = np.asarray(Qs, dtype=float)
    N = Qs.shape[0]
    out = np.empty((cfg.num_users, N))
    for n in range(N):
        ses = worst_case_ses_power(W[n], Qs[n], region, cfg)
        g = cfg.user_tx_power * g2a_channel_gain(Qs[n], cfg.users, cfg)
        out[:, n] = np.log2(1.0 + g / (ses + cfg.noise_s))
    return out


@dataclass(frozen=True)
class EnergyReport:
    """Per-user and UAV energy split in joules."""

    user_local: np.ndarray
    user_offload: np.ndarray
    uav_fly: float
    uav_sensing: float
    uav_compute: float

    @property
    def user_total(self) -> np.ndarray:
        return self.user_local + self.user_offload

    @property
    def total_user(self) -> float:
        return float(np.sum(self.user_total))

    @property
    def uav_total(self) -> float:
        return self.uav_fly + self.uav_sensing + self.uav_compute


def energy_report(state: SolutionState, cfg: ScenarioConfig, region: Optional[EveRegion] = None) -> EnergyReport:
    region = EveRegion.from_config(cfg) if region is None else region
    rates = rate_matrix(state.Qs, state.W, region, cfg)
    loc = local_energy(state.A, state.B, cfg)
    off = offload_energy(state.A, state.B, rates, cfg).sum(axis=1)
    fly, sen, com = uav_energy(state.B, state.A, state.W, state.Qs, cfg)
    return EnergyReport(loc, off, fly, sen, com)


def objective(state: SolutionState, cfg: ScenarioConfig, region: Optional[EveRegion] = None) -> float:
    """Total user energy, the quantity being minimized."""
    return energy_report(state, cfg, region).total_user
