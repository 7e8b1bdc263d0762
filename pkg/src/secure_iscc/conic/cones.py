"""Cone segments, symmetric-matrix vectorization and Euclidean projections.

PSD segments use the scaled upper-triangular vectorization: the entries
``X[i, j]`` with ``i <= j`` are listed row by row and every off-diagonal
entry is multiplied by ``sqrt(2)``, so that ``svec(X) @ svec(Y) == trace(X @ Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
PSD = "psd"

_KINDS = (ZERO, NONNEG, SOC, PSD)
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Cone:
    """One segment of the cone product.

    ``dim`` is the number of rows for zero/nonneg/soc segments and the
    matrix side for psd segments.
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError(f"cone dimension must be positive, got {self.dim}")
        if self.kind == SOC and self.dim < 2:
            raise ValueError("second-order cone needs at least 2 rows")

    @property
    def rows(self) -> int:
        if self.kind == PSD:
            return self.dim * (self.dim + 1) // 2
        return self.dim


def svec_size(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=64)
def _triu(n: int):
    iu, ju = np.triu_indices(n)
    scale = np.where(iu == ju, 1.0, SQRT2)
    return iu, ju, scale


def svec(X: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix (or a stack of them)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    iu, ju, scale = _triu(n)
    return X[..., iu, ju] * scale


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if svec_size(n) != m:
        raise ValueError(f"length {m} is not a triangular number")
    iu, ju, scale = _triu(n)
    X = np.zeros(v.shape[:-1] + (n, n))
    vals = v / scale
    X[..., iu, ju] = vals
    X[..., ju, iu] = vals
    return X


def svec_index(n: int, i: int, j: int) -> int:
    """Position of entry (i, j) of an n-by-n symmetric matrix inside svec."""
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


def project_soc(z: np.ndarray) -> np.ndarray:
    """Project rows of ``z`` (shape (..., d)) onto the second-order cone."""
    z = np.asarray(z, dtype=float)
    t = z[..., 0]
    x = z[..., 1:]
    nx = np.linalg.norm(x, axis=-1)
    out = z.copy()
    below = nx <= -t
    out[below] = 0.0
    outside = (nx > np.abs(t)) & ~below
    if np.any(outside):
        a = 0.5 * (nx[outside] + t[outside])
        out[outside, 0] = a
        out[outside, 1:] = (a / nx[outside])[:, None] * x[outside]
    return out


def project_psd(v: np.ndarray) -> np.ndarray:
    """Project svec rows (shape (..., n(n+1)/2)) onto the PSD cone."""
    X = smat(v)
    w, U = np.linalg.eigh(X)
    w = np.maximum(w, 0.0)
    P = (U * w[..., None, :]) @ np.swapaxes(U, -1, -2)
    return svec(P)


class ConeLayout:
    """Row bookkeeping for an ordered cone list with batched projections."""

    def __init__(self, cones):
        self.cones = tuple(cones)
        offsets = np.cumsum([0] + [c.rows for c in self.cones])
        self.m = int(offsets[-1])
        self.offsets = offsets
        zero, nonneg = [], []
        soc_groups: dict[int, list[int]] = {}
        psd_groups: dict[int, list[int]] = {}
        for c, start in zip(self.cones, offsets[:-1]):
            idx = np.arange(start, start + c.rows)
            if c.kind == ZERO:
                zero.append(idx)
            elif c.kind == NONNEG:
                nonneg.append(idx)
            elif c.kind == SOC:
                soc_groups.setdefault(c.dim, []).append(idx)
            else:
                psd_groups.setdefault(c.dim, []).append(idx)
        empty = np.zeros(0, dtype=int)
        self.zero = np.concatenate(zero) if zero else empty
        self.nonneg = np.concatenate(nonneg) if nonneg else empty
        self.soc = {d: np.vstack(rows) for d, rows in soc_groups.items()}
        self.psd = {n: np.vstack(rows) for n, rows in psd_groups.items()}

    def project_dual(self, y: np.ndarray) -> np.ndarray:
        """Project onto K*, the dual cone (zero segments become free)."""
        out = y.copy()
        if self.nonneg.size:
            out[self.nonneg] = np.maximum(y[self.nonneg], 0.0)
        for rows in self.soc.values():
            out[rows] = project_soc(y[rows])
        for rows in self.psd.values():
            out[rows] = project_psd(y[rows])
        return out

    def project_primal(self, s: np.ndarray) -> np.ndarray:
        """Project onto K itself (zero segments pinned to 0)."""
        out = self.project_dual(s)
        if self.zero.size:
            out[self.zero] = 0.0
        return out

    def distance(self, s: np.ndarray, dual: bool = False) -> float:
        """Infinity-norm distance from ``s`` to K (or K*)."""
        p = self.project_dual(s) if dual else self.project_primal(s)
        return float(np.max(np.abs(s - p))) if s.size else 0.0

    def block_mean(self, values: np.ndarray) -> np.ndarray:
        """Replace per-row values by their block mean (keeps cones invariant)."""
        out = values.copy()
        for rows in self.soc.values():
            out[rows] = values[rows].mean(axis=1, keepdims=True)
        for rows in self.psd.values():
            out[rows] = values[rows].mean(axis=1, keepdims=True)
        return out
