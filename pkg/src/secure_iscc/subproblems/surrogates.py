"""Convex surrogates used by the beamforming and trajectory blocks.

Each surrogate equals its exact counterpart at the expansion point and
bounds it on the safe side everywhere else, so a point feasible for the
surrogate constraint is feasible for the exact one.
"""

from __future__ import annotations

import numpy as np

from ..config import ScenarioConfig

LN2 = np.log(2.0)


def taylor_rate_in_interference(X, X_ref, gain):
    """First-order expansion of ``log2(1 + gain / X)`` around ``X_ref``.

    The map ``X -> log2(1 + gain / X)`` is convex for ``X > 0`` so its
    tangent lies below it.

    Parameters
    ----------
    X, X_ref : array_like
        Interference-plus-noise power and its expansion point (``X_ref > 0``).
    gain : array_like
        Received signal power ``P_u * ||h||^2``.
    """
    X = np.asarray(X, dtype=float)
    X_ref = np.asarray(X_ref, dtype=float)
    gain = np.asarray(gain, dtype=float)
    slope = gain / (LN2 * (X_ref**2 + X_ref * gain))
    return np.log2(1.0 + gain / X_ref) - slope * (X - X_ref)


def taylor_rate_slope(X_ref, gain):
    """Magnitude of the surrogate's slope in ``X``."""
    return gain / (LN2 * (X_ref**2 + X_ref * gain))


def rate_surrogate_traj(d_se, d_sk, d_se_ref, Z2, noise):
    """Rate lower bound in the echo slack ``d_se`` and inverse-distance slack ``d_sk``.

    The exact rate is ``log2(d_se + Z2 d_sk + noise) - log2(d_se + noise)``;
    the second (concave) term is replaced by its tangent at ``d_se_ref``.
    """
    d_se = np.asarray(d_se, dtype=float)
    base = d_se_ref + noise
    return (
        np.log2(d_se + Z2 * np.asarray(d_sk) + noise)
        - np.log2(base)
        - (d_se - d_se_ref) / (base * LN2)
    )


def rate_exact_traj(d_se, d_sk, Z2, noise):
    d_se = np.asarray(d_se, dtype=float)
    return np.log2(d_se + Z2 * np.asarray(d_sk) + noise) - np.log2(d_se + noise)


def inverse_distance_tangent(q, q_ref, q_k, H):
    """Tangent lower bound of ``1 / (||q - q_k||^2 + H^2)``.

    The expansion is taken in ``u = ||q - q_k||^2``, in which the map is
    convex, so the bound holds for every ``q``. The bound is concave in ``q``.
    """
    q = np.asarray(q, dtype=float)
    u = np.sum((q - q_k) ** 2, axis=-1)
    u0 = np.sum((np.asarray(q_ref, dtype=float) - q_k) ** 2, axis=-1)
    den = u0 + H**2
    return 1.0 / den - (u - u0) / den**2


def kinematics_lhs(v2, q_pair, cfg: ScenarioConfig):
    """Exact ``v2^2 + ||q[n+1] - q[n]||^2 / (v0^2 dt^2)``."""
    q_pair = np.asarray(q_pair, dtype=float)
    step = q_pair[..., 1, :] - q_pair[..., 0, :]
    return np.asarray(v2) ** 2 + np.sum(step**2, axis=-1) / (cfg.v0**2 * cfg.slot_len**2)


def kinematics_linearized(v2, v2_ref, q_pair, q_pair_ref, cfg: ScenarioConfig):
    """First-order expansion of :func:`kinematics_lhs` at the reference point."""
    q_pair = np.asarray(q_pair, dtype=float)
    q_pair_ref = np.asarray(q_pair_ref, dtype=float)
    step = q_pair[..., 1, :] - q_pair[..., 0, :]
    step0 = q_pair_ref[..., 1, :] - q_pair_ref[..., 0, :]
    scale = cfg.v0**2 * cfg.slot_len**2
    v2 = np.asarray(v2, dtype=float)
    v2_ref = np.asarray(v2_ref, dtype=float)
    return (
        v2_ref**2
        + 2.0 * v2_ref * (v2 - v2_ref)
        + np.sum(step0**2, axis=-1) / scale
        + 2.0 / scale * np.sum(step0 * (step - step0), axis=-1)
    )


def surrogate_kinematics(v2, v2_ref, q_pair, q_pair_ref, cfg: ScenarioConfig):
    """Residual of the linearized induced-velocity constraint; feasible when >= 0."""
    return kinematics_linearized(v2, v2_ref, q_pair, q_pair_ref, cfg) - 1.0 / np.asarray(v2, dtype=float) ** 2


def induced_velocity_ratio(speed, cfg: ScenarioConfig):
    """Normalised induced velocity ``v2`` solving ``v2^4 + (v/v0)^2 v2^2 = 1``."""
    r = (np.asarray(speed, dtype=float) / cfg.v0) ** 2
    return np.sqrt(np.sqrt(1.0 + r**2 / 4.0) - r / 2.0)
