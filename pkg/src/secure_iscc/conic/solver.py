"""Operator-splitting cone solver on the homogeneous self-dual embedding.

The solver runs Douglas-Rachford splitting on ``0 in Q u + N_C(u)`` where
``u = (x, y, tau)``, ``Q`` is the skew-symmetric embedding matrix and
``C = R^n x K* x R_+``. With a diagonal metric ``R`` the iteration is

    u  = proj_C(t)
    ut = (R + Q)^{-1} R (2 u - t)
    t <- t + alpha (ut - u)

and the dual-side variable is recovered as ``v = R (u - t)``. The linear
step uses one cached factorization of ``rho_x I + A^T R_y^{-1} A`` plus a
rank-one correction for ``tau``. The y-part of ``R`` is rescaled when the
primal and dual residuals drift apart (this needs a refactorization) and
the fixed-point map is accelerated with safeguarded Anderson steps.
"""

from __future__ import annotations

import logging
import time
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeLayout
from .problem import (
    DUAL_INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    ConicProblem,
    ConicSolution,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 50_000
_DENSE_LIMIT = 2000
_MIN_SCALE = 1e-4
_MAX_SCALE = 1e4
_RHO_X = 1e-6
_ZERO_ROW_WEIGHT = 1e-3


def _equilibrate(A: sp.csc_matrix, layout: ConeLayout, passes: int = 15):
    """Ruiz scaling D A E with D constant on every soc/psd block."""
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    M = A.tocsr(copy=True)
    for _ in range(passes):
        row = np.sqrt(abs(M).max(axis=1).toarray().ravel()) if m else np.ones(0)
        row = np.where(row < _MIN_SCALE, 1.0, row)
        row = layout.block_mean(row)
        col = np.sqrt(abs(M).max(axis=0).toarray().ravel()) if n else np.ones(0)
        col = np.where(col < _MIN_SCALE, 1.0, col)
        D = np.clip(D / row, _MIN_SCALE, _MAX_SCALE)
        E = np.clip(E / col, _MIN_SCALE, _MAX_SCALE)
        M = (sp.diags(D) @ A @ sp.diags(E)).tocsr()
    return D, E, M.tocsc()


class _LinearSystem:
    """Solves (R + M) z = r for M = [[0, A^T], [-A, 0]], R = diag(rho_x, r_y)."""

    def __init__(self, A: sp.csc_matrix, r_y: np.ndarray, rho_x: float = _RHO_X):
        self.A = A
        self.AT = A.T.tocsr()
        self.r_y = r_y
        n = A.shape[1]
        G = (self.AT @ sp.diags(1.0 / r_y) @ A).tocsc() + rho_x * sp.identity(n, format="csc")
        if n <= _DENSE_LIMIT:
            chol = sla.cho_factor(G.toarray(), lower=False, check_finite=False)
            self._solve = lambda r: sla.cho_solve(chol, r, check_finite=False)
        else:
            self._solve = spla.splu(G, permc_spec="MMD_AT_PLUS_A").solve

    def solve(self, rx: np.ndarray, ry: np.ndarray):
        # rho_x zx + A^T zy = rx ; -A zx + r_y zy = ry
        zx = self._solve(rx - self.AT @ (ry / self.r_y))
        zy = (ry + self.A @ zx) / self.r_y
        return zx, zy


class _Anderson:
    """Anderson acceleration (type I or II) on the fixed-point residual."""

    def __init__(self, memory: int = 10, type_one: bool = False):
        self.memory = memory
        self.type_one = type_one
        self.reg = 1e-8 if type_one else 1e-12
        self.dT: list[np.ndarray] = []
        self.dG: list[np.ndarray] = []
        self.prev_t: Optional[np.ndarray] = None
        self.prev_g: Optional[np.ndarray] = None

    def reset(self):
        self.dT.clear()
        self.dG.clear()
        self.prev_t = None
        self.prev_g = None

    def step(self, t: np.ndarray, g: np.ndarray) -> Optional[np.ndarray]:
        """Return the accelerated point, or None when no history is available."""
        if self.prev_t is not None:
            self.dT.append(t - self.prev_t)
            self.dG.append(g - self.prev_g)
            if len(self.dT) > self.memory:
                self.dT.pop(0)
                self.dG.pop(0)
        self.prev_t = t
        self.prev_g = g
        if not self.dT:
            return None
        S = np.column_stack(self.dT)
        Y = np.column_stack(self.dG)
        L = S if self.type_one else Y
        H = L.T @ Y
        H[np.diag_indices_from(H)] += self.reg * (np.linalg.norm(L) * np.linalg.norm(Y) + 1e-30)
        try:
            gamma = np.linalg.solve(H, L.T @ g)
        except np.linalg.LinAlgError:
            self.reset()
            return None
        if not np.all(np.isfinite(gamma)):
            self.reset()
            return None
        return t - g - (S - Y) @ gamma


def _relative(num, *scales):
    return num / (1.0 + max(scales))


def solve_native(
    problem: ConicProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    alpha: float = 1.5,
    acceleration: bool = True,
    aa_type_one: bool = False,
    aa_interval: int = 10,
    scale: float = 0.1,
    adaptive_scale: bool = True,
    check_every: int = 10,
    warm_start: Optional[tuple] = None,
    time_limit: Optional[float] = None,
) -> ConicSolution:
    """Solve ``problem`` with the embedded Douglas-Rachford iteration.

    Parameters
    ----------
    tol : relative tolerance on primal residual, dual residual and gap.
    max_iter : iteration cap; on exhaustion the best iterate is returned
        with status ``max-iter``.
    warm_start : optional ``(x, y, s)`` guess in the original scaling.
    """
    started = time.perf_counter()
    layout = problem.layout()
    m, n = problem.shape
    A0, b0, c0 = problem.A, problem.b, problem.c
    A0T = A0.T.tocsr()

    D, E, A = _equilibrate(A0, layout)
    nm_row = float(np.mean(sp.linalg.norm(A, axis=1))) if m else 1.0
    nm_col = float(np.mean(sp.linalg.norm(A, axis=0))) if n else 1.0
    sigma_b = nm_col / max(np.linalg.norm(D * b0), _MIN_SCALE)
    sigma_c = nm_row / max(np.linalg.norm(E * c0), _MIN_SCALE)
    b = sigma_b * D * b0
    c = sigma_c * E * c0
    h = np.concatenate([c, b])

    row_weight = np.ones(m)
    row_weight[layout.zero] = _ZERO_ROW_WEIGHT

    def metric(sc):
        return np.concatenate([np.full(n, _RHO_X), row_weight / sc, [1.0]])

    def factor(sc):
        R = metric(sc)
        lin = _LinearSystem(A, R[n:-1])
        px, py = lin.solve(c, b)
        p = np.concatenate([px, py])
        return R, lin, p, 1.0 + h @ p

    R, lin, p, denom = factor(scale)
    refactors = 0

    def linsolve(w):
        # (R + Qbar) z = w with Qbar = [[M, h], [-h^T, 0]]
        wxy, wt = w[:-1], w[-1]
        r = wxy - wt * h
        zx, zy = lin.solve(r[:n], r[n:])
        z = np.concatenate([zx, zy])
        z -= p * ((h @ z) / denom)
        return np.concatenate([z, [wt + h @ z]])

    def project(t):
        u = t.copy()
        u[n:-1] = layout.project_dual(t[n:-1])
        u[-1] = max(t[-1], 0.0)
        return u

    def fixed_point(t):
        u = project(t)
        ut = linsolve(R * (2.0 * u - t))
        return t + alpha * (ut - u), u

    def unscale(u, v):
        tau = u[-1]
        x = E * u[:n] / (sigma_b * tau)
        y = D * u[n:-1] / (sigma_c * tau)
        s = v[n:-1] / (D * sigma_b * tau)
        return x, y, s

    def kkt_residuals(x, y, s):
        Ax = A0 @ x
        Aty = A0T @ y
        pri = _relative(
            np.max(np.abs(Ax + s - b0), initial=0.0),
            np.max(np.abs(b0), initial=0.0),
            np.max(np.abs(Ax), initial=0.0),
            np.max(np.abs(s), initial=0.0),
        )
        dual = _relative(
            np.max(np.abs(Aty + c0), initial=0.0),
            np.max(np.abs(c0), initial=0.0),
            np.max(np.abs(Aty), initial=0.0),
        )
        pobj = c0 @ x
        dobj = -b0 @ y
        gap = _relative(abs(pobj - dobj), abs(pobj), abs(dobj))
        return pri, dual, gap, pobj

    t = np.zeros(n + m + 1)
    t[-1] = 1.0
    if warm_start is not None:
        x0, y0, s0 = (np.asarray(a, dtype=float) for a in warm_start)
        u0 = np.concatenate([sigma_b * x0 / E, sigma_c * y0 / D, [1.0]])
        v0 = np.concatenate([np.zeros(n), sigma_b * D * s0, [0.0]])
        t = u0 - v0 / R

    aa = _Anderson(type_one=aa_type_one) if acceleration else None
    best = None
    best_score = np.inf
    status = MAX_ITER
    it = 0
    g_prev_norm = np.inf
    fallback = None
    ratio_log: list[float] = []
    t_ref = float(np.linalg.norm(t))
    block_start = t
    in_block = 0

    def restart_block(point):
        nonlocal block_start, in_block, fallback, g_prev_norm
        block_start = point
        in_block = 0
        fallback = None
        g_prev_norm = np.inf
        if aa is not None:
            aa.reset()

    for it in range(1, max_iter + 1):
        f, u = fixed_point(t)

        if it % check_every == 0 or it == 1:
            v = R * (u - t)
            tau, kappa = u[-1], v[-1]
            if tau > 1e-14 * max(1.0, np.linalg.norm(u)):
                x, y, s = unscale(u, v)
                s = layout.project_primal(s)
                pri, dual, gap, pobj = kkt_residuals(x, y, s)
                score = max(pri, dual, gap)
                if score < best_score:
                    best_score = score
                    best = (x, y, s, pri, dual, gap, pobj)
                if score <= tol:
                    status = OPTIMAL
                    break
                if adaptive_scale and refactors < 40:
                    ratio_log.append(np.log(max(pri, 1e-300) / max(dual, 1e-300)))
                    mean_log = float(np.mean(ratio_log[-5:]))
                    if len(ratio_log) >= 5 and abs(mean_log) > np.log(10.0):
                        # keep (u, v) fixed while the metric changes
                        scale = float(np.clip(scale * np.exp(0.5 * mean_log), 1e-6, 1e6))
                        R, lin, p, denom = factor(scale)
                        refactors += 1
                        ratio_log.clear()
                        t = u - v / R
                        restart_block(t)
                        continue
            # infeasibility certificates
            yc = D * u[n:-1] / sigma_c
            by = b0 @ yc
            if by < 0 and kappa > tau:
                yc = yc / -by
                if np.max(np.abs(A0T @ yc), initial=0.0) <= tol:
                    status = PRIMAL_INFEASIBLE
                    best = (np.full(n, np.nan), yc, np.full(m, np.nan), np.nan, np.nan, np.nan, np.inf)
                    break
            xc = E * u[:n] / sigma_b
            cx = c0 @ xc
            if cx < 0 and kappa > tau:
                xc = xc / -cx
                sc = layout.project_primal(-(A0 @ xc))
                if np.max(np.abs(A0 @ xc + sc), initial=0.0) <= tol:
                    status = DUAL_INFEASIBLE
                    best = (xc, np.full(m, np.nan), sc, np.nan, np.nan, np.nan, -np.inf)
                    break
            if time_limit is not None and time.perf_counter() - started > time_limit:
                break

        t = f
        in_block += 1
        if in_block < aa_interval:
            continue
        t_norm = float(np.linalg.norm(t))
        if not (1e-3 * t_ref < t_norm < 1e6 * t_ref):
            # the embedding is homogeneous: rescale instead of drifting to 0
            t = t * (t_ref / max(t_norm, 1e-300))
            restart_block(t)
            continue
        if aa is None:
            block_start, in_block = t, 0
            continue
        g = block_start - t
        # relative residual: the embedding is homogeneous, so a step toward
        # the trivial fixed point at 0 shrinks the absolute residual too
        g_norm = float(np.linalg.norm(g)) / max(float(np.linalg.norm(block_start)), 1e-300)
        if fallback is not None and g_norm > g_prev_norm:
            # the last extrapolation made things worse: resume without it
            t = fallback
            restart_block(t)
            continue
        g_prev_norm = g_norm
        t_acc = aa.step(block_start, g)
        if t_acc is not None and np.all(np.isfinite(t_acc)):
            fallback = t
            t = t_acc
        else:
            fallback = None
        block_start, in_block = t, 0

    if best is None:
        nan_n, nan_m = np.full(n, np.nan), np.full(m, np.nan)
        best = (nan_n, nan_m, nan_m, np.inf, np.inf, np.inf, np.nan)
    x, y, s, pri, dual, gap, pobj = best
    elapsed = time.perf_counter() - started
    log.debug("conic solve %s after %d iterations (%.3fs)", status, it, elapsed)
    return ConicSolution(
        x=x,
        y=y,
        s=s,
        status=status,
        primal_residual=float(pri),
        dual_residual=float(dual),
        gap=float(gap),
        iterations=it,
        objective=float(pobj) + problem.offset,
        info={"seconds": elapsed, "refactorizations": refactors, "scale": scale},
    )


_BACKENDS: dict[str, Callable[..., ConicSolution]] = {"native": solve_native}


def register_backend(name: str, fn: Callable[..., ConicSolution]) -> None:
    """Make an external solver available through :func:`solve_conic`.

    ``fn(problem, tol, max_iter, **kwargs)`` must return a ConicSolution
    whose residuals follow the same relative definitions.
    """
    _BACKENDS[name] = fn


def solve_conic(
    problem: ConicProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    backend: str = "native",
    **kwargs,
) -> ConicSolution:
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown conic backend {backend!r}") from None
    return fn(problem, tol, max_iter, **kwargs)
