"""Per-slot geometric quantities shared by the block solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ScenarioConfig
from ..model import EveRegion, cfg_steering, distance, quad_form


@dataclass
class SlotGeometry:
    """Distances, steering vectors and sensing/secrecy requirements for a trajectory.

    Shapes: K users, N slots, P region samples, M antennas.
    """

    Qs: np.ndarray          # (N, 2)
    steer: np.ndarray       # (N, P, M) steering toward every region sample
    d_se2: np.ndarray       # (N, P) squared UAV-sample distances
    d_sk2: np.ndarray       # (K, N) squared UAV-user distances
    signal: np.ndarray      # (K, N) P_u * ||h_sk||^2
    req_sen: np.ndarray     # (N, P) sensing gain floor
    req_eve: np.ndarray     # (K, N, P) jamming gain floor (may be <= 0)
    echo_coef: np.ndarray   # (N, P) echo power per unit beampattern gain

    @classmethod
    def build(cls, Qs, cfg: ScenarioConfig, region: EveRegion) -> "SlotGeometry":
        Qs = np.asarray(Qs, dtype=float)
        pts = region.points
        steer = cfg_steering(Qs[:, None, :], pts[None, :, :], cfg)
        d_se2 = distance(Qs[:, None, :], pts[None, :, :], cfg.altitude) ** 2
        d_sk2 = distance(cfg.users[:, None, :], Qs[None, :, :], cfg.altitude) ** 2
        signal = cfg.user_tx_power * cfg.ref_gain * cfg.num_antennas / d_sk2
        req_sen = d_se2 * cfg.gamma_sen
        d_ke2 = np.sum((cfg.users[:, None, :] - pts[None, :, :]) ** 2, axis=-1)  # (K, P)
        eve_unit = cfg.user_tx_power / (d_ke2 * cfg.gamma_e) - cfg.noise_e / cfg.ref_gain
        req_eve = eve_unit[:, None, :] * d_se2[None, :, :]
        echo_coef = cfg.rcs * cfg.ref_gain * cfg.num_antennas / d_se2**2
        return cls(Qs, steer, d_se2, d_sk2, signal, req_sen, req_eve, echo_coef)

    def gains(self, W: np.ndarray, n: int) -> np.ndarray:
        """Beampattern gain of W toward every sample in slot n."""
        return quad_form(W, self.steer[n])

    def requirement(self, k: int, n: int) -> np.ndarray:
        """Gain floor per sample when user k transmits in slot n."""
        return np.maximum(self.req_sen[n], self.req_eve[k, n])

    def echo_power(self, W: np.ndarray, n: int) -> float:
        """Worst-case echo power at the UAV receiver in slot n."""
        return float(np.max(self.echo_coef[n] * self.gains(W, n)))
