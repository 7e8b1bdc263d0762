"""Batch runner: one alternating-optimisation run per sweep cell, written to disk.

Every cell directory holds

``config.json``       the exact configuration that was run
``trajectory.csv``    slot, x, y, speed, p_fly
``scheduling.csv``    slot, active_user (-1 for idle slots)
``offload.csv``       user, sum_alpha, alpha_0 ... alpha_{N-1}
``energy.csv``        party, local_J, offload_J, fly_J, sensing_J, compute_J, total_J
``rates.csv``         slot, user, r_offload, r_eve_worst (bits/s/Hz)
``beams.csv``         slot, row, col, re, im (nonzero covariance entries)
``trace.csv``         iteration, objective_J, audit_worst, one status column per block
``series.json``       plot-ready series
``summary.json``      final objective, iterations, audit, SDR gaps, config hash

Numbers are written with Python's shortest round-trip repr and no wall
times are stored, so reruns with the same seed produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..config import ConfigError, ScenarioConfig
from ..model import (
    EveRegion,
    SolutionState,
    energy_report,
    eve_rate_worst_case,
    offload_rate_hat,
    propulsion_power,
    speeds,
)
from ..orchestrator import SCHEMES, audit_feasibility, run_algorithm1
from ..subproblems.common import FAILED
from .config_io import config_hash, load_config, write_config

log = logging.getLogger(__name__)

SWEEP_AXES = ("user_tx_power", "num_users", "eve_half_side")
EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3
P_U_NOTE = "user_tx_power preset default 0.1 W is an arbitrary documented choice"


@dataclass
class RunSpec:
    """What to run and where to write it.

    ``source`` is a preset name or a config path. ``sweep_axis`` is one of
    ``SWEEP_AXES`` or None; with an axis, one cell runs per entry of
    ``sweep_values``.
    """

    source: str = "scenario1"
    scheme: str = "proposed"
    out_dir: str = "results"
    seed: int = 0
    max_iters: int = 100
    tol: Optional[float] = None
    grid: Optional[int] = None
    sweep_axis: Optional[str] = None
    sweep_values: Sequence[float] = field(default_factory=tuple)
    jobs: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}", ["scheme"])
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}; choose from {SWEEP_AXES}",
                                  ["sweep_axis"])
            if not len(self.sweep_values):
                raise ConfigError("a sweep needs at least one value", ["sweep_values"])
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1", ["max_iters"])


def apply_sweep(cfg: ScenarioConfig, axis: Optional[str], value) -> ScenarioConfig:
    if axis is None:
        return cfg
    if axis == "num_users":
        k = int(value)
        if not 1 <= k <= cfg.num_users:
            raise ConfigError(f"num_users must lie in 1..{cfg.num_users}, got {value}", ["num_users"])
        return cfg.replace(user_pos=cfg.user_pos[:k])
    return cfg.replace(**{axis: float(value)})


def _cell_name(axis, value) -> str:
    return "run" if axis is None else f"{axis}={value!r}"


# ----------------------------------------------------------------------------
# tables


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)
    return v


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def state_tables(state: SolutionState, cfg: ScenarioConfig, region: EveRegion, radar: bool) -> dict:
    """Row lists for every CSV table, keyed by file stem."""
    K, N = state.B.shape
    v = np.append(speeds(state.Qs, cfg), 0.0)
    p_fly = np.atleast_1d(propulsion_power(v, cfg))
    traj = [(n, state.Qs[n, 0], state.Qs[n, 1], v[n], p_fly[n]) for n in range(N)]
    users = state.active_user()
    sched = [(n, int(users[n])) for n in range(N)]
    x = state.A * state.B
    offload = [(k, float(x[k].sum()), *x[k]) for k in range(K)]
    rep = energy_report(state, cfg, region)
    energy = [(f"user{k}", rep.user_local[k], rep.user_offload[k], 0.0, 0.0, 0.0, rep.user_total[k])
              for k in range(K)]
    energy.append(("uav", 0.0, 0.0, rep.uav_fly, rep.uav_sensing, rep.uav_compute, rep.uav_total))
    rates = []
    for n in range(N):
        k = int(users[n])
        if k < 0:
            rates.append((n, -1, 0.0, 0.0))
            continue
        q_k = cfg.users[k]
        rates.append((n, k, offload_rate_hat(state.Qs[n], q_k, state.W[n], region, radar, cfg),
                      eve_rate_worst_case(q_k, state.W[n], state.Qs[n], region, radar, cfg)))
    beams = []
    for n in range(N):
        for i, j in zip(*np.nonzero(state.W[n])):
            beams.append((n, int(i), int(j), state.W[n, i, j].real, state.W[n, i, j].imag))
    return {"trajectory": traj, "scheduling": sched, "offload": offload, "energy": energy,
            "rates": rates, "beams": beams}


HEADERS = {
    "trajectory": ("slot", "x", "y", "speed", "p_fly"),
    "scheduling": ("slot", "active_user"),
    "energy": ("party", "local_J", "offload_J", "fly_J", "sensing_J", "compute_J", "total_J"),
    "rates": ("slot", "user", "r_offload", "r_eve_worst"),
    "beams": ("slot", "row", "col", "re", "im"),
}


def load_state(cell_dir) -> tuple[ScenarioConfig, SolutionState, str]:
    """Rebuild ``(cfg, state, scheme)`` from a cell directory."""
    cell_dir = Path(cell_dir)
    cfg = load_config(cell_dir / "config.json")
    scheme = json.loads((cell_dir / "summary.json").read_text())["scheme"]
    K, N, M = cfg.num_users, cfg.num_slots, cfg.num_antennas
    traj = np.loadtxt(cell_dir / "trajectory.csv", delimiter=",", skiprows=1, ndmin=2)
    sched = np.loadtxt(cell_dir / "scheduling.csv", delimiter=",", skiprows=1, ndmin=2).astype(int)
    off = np.loadtxt(cell_dir / "offload.csv", delimiter=",", skiprows=1, ndmin=2)
    B = np.zeros((K, N))
    on = sched[:, 1] >= 0
    B[sched[on, 1], sched[on, 0]] = 1.0
    A = off[:, 2:]
    W = np.zeros((N, M, M), dtype=complex)
    beams = np.loadtxt(cell_dir / "beams.csv", delimiter=",", skiprows=1, ndmin=2)
    if beams.size:
        idx = beams[:, :3].astype(int)
        W[idx[:, 0], idx[:, 1], idx[:, 2]] = beams[:, 3] + 1j * beams[:, 4]
    return cfg, SolutionState(A=A, B=B, W=W, Qs=traj[:, 1:3].copy()), scheme


# ----------------------------------------------------------------------------
# running


def run_cell(cfg: ScenarioConfig, scheme: str, out: Path, *, seed=0, max_iters=100, tol=None) -> dict:
    """Run one configuration and write its bundle; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.json")
    radar = scheme != "bench3"
    summary = {"scenario": cfg.name, "scheme": scheme, "seed": seed, "config_hash": config_hash(cfg),
               "note": P_U_NOTE, "user_tx_power": cfg.user_tx_power}
    try:
        region = EveRegion.from_config(cfg)
        state, trace = run_algorithm1(cfg, scheme, max_iters, tol=tol, seed=seed, region=region)
    except ConfigError as exc:
        summary |= {"status": "infeasible", "exit_code": EXIT_INFEASIBLE, "message": str(exc),
                    "fields": list(exc.fields)}
        _dump_json(out / "summary.json", summary)
        return summary

    tables = state_tables(state, cfg, region, radar)
    for stem, rows in tables.items():
        header = HEADERS.get(stem) or ("user", "sum_alpha", *(f"alpha_{n}" for n in range(cfg.num_slots)))
        _write_csv(out / f"{stem}.csv", header, rows)
    blocks = [b.name for b in trace.iterations[0].blocks] if trace.iterations else []
    trace_rows = []
    for it in trace.iterations:
        st = {b.name: b.status for b in it.blocks}
        trace_rows.append((it.m, it.objective, it.audit_worst, *(st.get(b, "") for b in blocks)))
    _write_csv(out / "trace.csv", ("iteration", "objective_J", "audit_worst", *blocks), trace_rows)

    audit = audit_feasibility(state, cfg, region, radar=radar)
    if trace.flagged:
        code = EXIT_SOLVER if trace.flag_status == FAILED else EXIT_INFEASIBLE
        status = "solver-failure" if code == EXIT_SOLVER else "infeasible"
    else:
        code, status = EXIT_OK, "ok"
    rep = energy_report(state, cfg, region)
    summary |= {
        "status": status,
        "exit_code": code,
        "message": trace.message,
        "initial_objective": trace.initial_objective,
        "final_objective": float(trace.objectives[-1]),
        "iterations": trace.m,
        "converged": trace.converged,
        "audit": audit,
        "audit_worst": max(audit.values()),
        "sdr_gaps": trace.sdr_gaps(),
        "rank_flags": int(np.sum(state.rank_flags)),
        "inactive_slots": int(np.sum(~state.active)),
        "user_energy": rep.user_total.tolist(),
        "uav_energy": {"fly": rep.uav_fly, "sensing": rep.uav_sensing, "compute": rep.uav_compute},
    }
    series = {
        "objective_vs_iteration": trace.objectives.tolist(),
        "trajectory": {"x": state.Qs[:, 0].tolist(), "y": state.Qs[:, 1].tolist()},
        "users": cfg.users.tolist(),
        "eve_region": {"center": list(cfg.eve_center), "half_side": cfg.eve_half_side},
        "sum_alpha": (state.A * state.B).sum(axis=1).tolist(),
        "user_energy": rep.user_total.tolist(),
        "gantt": state.active_user().tolist(),
        "r_offload": [r[2] for r in tables["rates"]],
        "r_eve_worst": [r[3] for r in tables["rates"]],
    }
    _dump_json(out / "series.json", series)
    _dump_json(out / "summary.json", summary)
    log.info("%s/%s: E=%.6f J after %d iterations (%s)", cfg.name, scheme,
             summary["final_objective"], trace.m, status)
    return summary


def _cell_job(args):
    cfg, scheme, out, seed, max_iters, tol = args
    return run_cell(cfg, scheme, out, seed=seed, max_iters=max_iters, tol=tol)


def run(spec: RunSpec) -> list[dict]:
    """Execute every cell of ``spec``; returns their summaries in sweep order."""
    base = load_config(spec.source)
    if spec.grid is not None:
        base = base.replace(eve_grid=int(spec.grid))
    out = Path(spec.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    values = list(spec.sweep_values) if spec.sweep_axis else [None]
    jobs = [(apply_sweep(base, spec.sweep_axis, v), spec.scheme,
             out if spec.sweep_axis is None else out / _cell_name(spec.sweep_axis, v),
             spec.seed, spec.max_iters, spec.tol) for v in values]
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            summaries = list(pool.map(_cell_job, jobs))
    else:
        summaries = [_cell_job(j) for j in jobs]
    if spec.sweep_axis is not None:
        rows = [(v, s.get("status"), s.get("final_objective", float("nan")), s.get("iterations", 0),
                 s.get("converged", False), s.get("audit_worst", float("nan")))
                for v, s in zip(values, summaries)]
        _write_csv(out / "sweep.csv",
                   (spec.sweep_axis, "status", "final_objective_J", "iterations", "converged", "audit_worst"),
                   rows)
    return summaries


def exit_code(summaries: list[dict]) -> int:
    """Worst exit code over the cells (solver failure outranks infeasibility)."""
    codes = [s.get("exit_code", EXIT_OK) for s in summaries]
    if EXIT_SOLVER in codes:
        return EXIT_SOLVER
    return EXIT_INFEASIBLE if EXIT_INFEASIBLE in codes else EXIT_OK
