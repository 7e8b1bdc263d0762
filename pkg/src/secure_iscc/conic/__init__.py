"""Small cone-program layer: problem containers, projections and solver."""

from .cones import NONNEG, PSD, SOC, ZERO, Cone, ConeLayout, project_psd, project_soc, smat, svec
from .problem import (
    DUAL_INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    Affine,
    ConicBuilder,
    ConicProblem,
    ConicShapeError,
    ConicSolution,
    dump_problem,
    hermitian_psd_entries,
    load_problem,
)
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, register_backend, solve_conic

__all__ = [
    "Affine",
    "Cone",
    "ConeLayout",
    "ConicBuilder",
    "ConicProblem",
    "ConicShapeError",
    "ConicSolution",
    "DEFAULT_MAX_ITER",
    "DEFAULT_TOL",
    "DUAL_INFEASIBLE",
    "MAX_ITER",
    "NONNEG",
    "OPTIMAL",
    "PRIMAL_INFEASIBLE",
    "PSD",
    "SOC",
    "ZERO",
    "dump_problem",
    "hermitian_psd_entries",
    "load_problem",
    "project_psd",
    "project_soc",
    "register_backend",
    "smat",
    "solve_conic",
    "svec",
]
