"""Block solvers of the alternating optimisation."""

from .beamforming import recover_rank_one, solve_beamforming_sdp
from .common import BlockResult, beam_vectors
from .eligibility import EligibilityMask, build_eligibility, candidate_beam, link_checks, pair_beams
from .geometry import SlotGeometry
from .offload import offload_objective, pair_rates, solve_offload_lp
from .scheduling import round_schedule, solve_scheduling_lp
from .surrogates import (
    inverse_distance_tangent,
    kinematics_lhs,
    kinematics_linearized,
    rate_exact_traj,
    rate_surrogate_traj,
    surrogate_kinematics,
    taylor_rate_in_interference,
)
from .trajectory import build_trajectory_socp, solve_trajectory_sca

__all__ = [
    "BlockResult",
    "EligibilityMask",
    "SlotGeometry",
    "beam_vectors",
    "build_eligibility",
    "build_trajectory_socp",
    "candidate_beam",
    "inverse_distance_tangent",
    "kinematics_lhs",
    "kinematics_linearized",
    "link_checks",
    "offload_objective",
    "pair_beams",
    "pair_rates",
    "rate_exact_traj",
    "rate_surrogate_traj",
    "recover_rank_one",
    "round_schedule",
    "solve_beamforming_sdp",
    "solve_offload_lp",
    "solve_scheduling_lp",
    "solve_trajectory_sca",
    "surrogate_kinematics",
    "taylor_rate_in_interference",
]
