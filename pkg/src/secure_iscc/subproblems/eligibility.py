"""Which (user, slot) pairs can carry a secure offloading link."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import ScenarioConfig
from ..model import EveRegion
from .geometry import SlotGeometry

CHECK_RTOL = 1e-9


@dataclass
class EligibilityMask:
    """``pair[k, n]``: user k may transmit alone in slot n; ``sensing[n]``: the
    slot's beam meets the sensing floor."""

    pair: np.ndarray
    sensing: np.ndarray


def link_checks(W, k: int, n: int, geo: SlotGeometry, cfg: ScenarioConfig, radar: bool = True,
                rtol: float = CHECK_RTOL) -> dict:
    """Evaluate the SINR, secrecy and sensing conditions for user k alone in slot n."""
    if radar:
        gains = geo.gains(W, n)
        echo = float(np.max(geo.echo_coef[n] * gains))
    else:
        gains = np.zeros(geo.d_se2.shape[1])
        echo = 0.0
    sinr = geo.signal[k, n] / (echo + cfg.noise_s)
    req_eve = geo.req_eve[k, n]
    secrecy = bool(np.all(gains >= req_eve - rtol * np.abs(req_eve)))
    sensing = (not radar) or bool(np.all(gains >= geo.req_sen[n] * (1 - rtol)))
    return {
        "sinr": bool(sinr >= cfg.gamma_s * (1 - rtol)),
        "secrecy": secrecy,
        "sensing": sensing,
        "echo": echo,
    }


def build_eligibility(Qs, W, cfg: ScenarioConfig, region: EveRegion, radar: bool = True,
                      geo: Optional[SlotGeometry] = None) -> EligibilityMask:
    """Eligibility of every pair under the given per-slot beams ``W`` (N, M, M)."""
    geo = SlotGeometry.build(Qs, cfg, region) if geo is None else geo
    K, N = geo.d_sk2.shape
    pair = np.zeros((K, N), dtype=bool)
    sens = np.zeros(N, dtype=bool)
    for n in range(N):
        for k in range(K):
            c = link_checks(W[n], k, n, geo, cfg, radar)
            sens[n] = c["sensing"]
            pair[k, n] = c["sinr"] and c["secrecy"] and c["sensing"]
    return EligibilityMask(pair, sens)


def candidate_beam(geo: SlotGeometry, k: int, n: int, cfg: ScenarioConfig) -> Optional[np.ndarray]:
    """Cheapest closed-form beam meeting the sensing and jamming floors of pair (k, n).

    Candidates are single beams aimed at each region sample plus the
    isotropic covariance, each scaled to the smallest power meeting every
    floor. Returns None when even the cheapest one exceeds ``p_max``.
    """
    req = geo.requirement(k, n)
    A = geo.steer[n]                                   # (P, M)
    M = A.shape[1]
    # unit-trace gains: rows = candidate, cols = sample
    cross = np.abs(A.conj() @ A.T) ** 2 / M            # aimed beams
    unit = np.vstack([cross, np.ones((1, A.shape[0]))])
    with np.errstate(divide="ignore"):
        need = np.where(req[None, :] > 0, req[None, :] / unit, 0.0)
    power = need.max(axis=1)
    best = int(np.argmin(power))
    p = float(power[best])
    if not np.isfinite(p) or p > cfg.p_max:
        return None
    if best == len(power) - 1:
        return (p / M) * np.eye(M, dtype=complex)
    a = A[best]
    return (p / M) * np.outer(a, a.conj())


def pair_beams(W, B, geo: SlotGeometry, cfg: ScenarioConfig, radar: bool = True):
    """Beam per pair: the incumbent for scheduled pairs, a fresh candidate otherwise.

    Returns ``(beams (K, N, M, M), eligible (K, N))``.
    """
    K, N = geo.d_sk2.shape
    M = geo.steer.shape[-1]
    beams = np.zeros((K, N, M, M), dtype=complex)
    ok = np.zeros((K, N), dtype=bool)
    for n in range(N):
        for k in range(K):
            if B[k, n] > 0.5:
                Wc = W[n]
            elif radar:
                Wc = candidate_beam(geo, k, n, cfg)
                if Wc is None:
                    continue
            else:
                Wc = np.zeros((M, M), dtype=complex)
            c = link_checks(Wc, k, n, geo, cfg, radar)
            if c["sinr"] and c["secrecy"] and c["sensing"]:
                beams[k, n] = Wc
                ok[k, n] = True
    return beams, ok
