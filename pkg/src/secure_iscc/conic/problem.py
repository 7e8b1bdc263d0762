"""Standard-form cone programs and a thin builder for assembling them.

A :class:`ConicProblem` is

    minimize    c @ x
    subject to  A @ x + s = b,   s in K

where ``K`` is the ordered product of the segments in ``cones``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .cones import NONNEG, PSD, SOC, ZERO, Cone, ConeLayout, svec_index, svec_size

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal-infeasible"
DUAL_INFEASIBLE = "dual-infeasible"
MAX_ITER = "max-iter"


class ConicShapeError(ValueError):
    """Raised when the pieces of a cone program do not fit together."""


@dataclass
class ConicProblem:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: tuple
    var_names: Optional[list] = None
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = sp.csc_matrix(self.A, dtype=float)
        self.cones = tuple(self.cones)
        m, n = self.A.shape
        if n != self.c.size:
            raise ConicShapeError(f"A has {n} columns but c has {self.c.size} entries")
        if m != self.b.size:
            raise ConicShapeError(f"A has {m} rows but b has {self.b.size} entries")
        rows = sum(cone.rows for cone in self.cones)
        if rows != m:
            raise ConicShapeError(f"cone segments cover {rows} rows, A has {m}")
        if self.var_names is not None and len(self.var_names) != n:
            raise ConicShapeError("var_names must name every column")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))):
            raise ConicShapeError("non-finite problem data")
        if self.A.nnz and not np.all(np.isfinite(self.A.data)):
            raise ConicShapeError("non-finite entries in A")

    @property
    def shape(self):
        return self.A.shape

    def layout(self) -> ConeLayout:
        return ConeLayout(self.cones)


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    objective: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class Affine:
    """A block of affine rows ``F @ x + g`` kept as COO triplets."""

    __slots__ = ("nrows", "rows", "cols", "vals", "const")

    def __init__(self, nrows, rows=(), cols=(), vals=(), const=None):
        self.nrows = int(nrows)
        self.rows = np.asarray(rows, dtype=np.int64).ravel()
        self.cols = np.asarray(cols, dtype=np.int64).ravel()
        self.vals = np.asarray(vals, dtype=float).ravel()
        if const is None:
            const = np.zeros(self.nrows)
        self.const = np.broadcast_to(np.asarray(const, dtype=float), (self.nrows,)).copy()

    @classmethod
    def var(cls, idx) -> "Affine":
        idx = np.asarray(idx, dtype=np.int64).ravel()
        return cls(idx.size, np.arange(idx.size), idx, np.ones(idx.size))

    @classmethod
    def constant(cls, values) -> "Affine":
        values = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        return cls(values.size, const=values)

    @classmethod
    def linear(cls, coef, idx, const=0.0) -> "Affine":
        """Single row ``coef @ x[idx] + const``."""
        idx = np.asarray(idx, dtype=np.int64).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        return cls(1, np.zeros(idx.size), idx, coef, [const])

    def __add__(self, other):
        if not isinstance(other, Affine):
            return Affine(self.nrows, self.rows, self.cols, self.vals, self.const + other)
        if other.nrows != self.nrows:
            if other.nrows == 1:
                other = other.repeat(self.nrows)
            elif self.nrows == 1:
                return self.repeat(other.nrows) + other
            else:
                raise ConicShapeError(f"row mismatch {self.nrows} vs {other.nrows}")
        return Affine(
            self.nrows,
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.vals, other.vals]),
            self.const + other.const,
        )

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.nrows, self.rows, self.cols, -self.vals, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            return Affine(self.nrows, self.rows, self.cols, self.vals * k, self.const * k)
        k = np.broadcast_to(k.ravel(), (self.nrows,))
        return Affine(self.nrows, self.rows, self.cols, self.vals * k[self.rows], self.const * k)

    __rmul__ = __mul__

    def repeat(self, count: int) -> "Affine":
        if self.nrows != 1:
            raise ConicShapeError("only single-row expressions can be repeated")
        nnz = self.rows.size
        return Affine(
            count,
            np.repeat(np.arange(count), nnz),
            np.tile(self.cols, count),
            np.tile(self.vals, count),
            np.full(count, self.const[0]),
        )

    def sum(self) -> "Affine":
        return Affine(1, np.zeros(self.rows.size), self.cols, self.vals, [self.const.sum()])

    @staticmethod
    def stack(parts: Sequence["Affine"]) -> "Affine":
        rows, cols, vals, const = [], [], [], []
        offset = 0
        for p in parts:
            rows.append(p.rows + offset)
            cols.append(p.cols)
            vals.append(p.vals)
            const.append(p.const)
            offset += p.nrows
        if not parts:
            return Affine(0)
        return Affine(
            offset,
            np.concatenate(rows),
            np.concatenate(cols),
            np.concatenate(vals),
            np.concatenate(const),
        )


class ConicBuilder:
    """Collects variables and cone constraints, then emits a ConicProblem.

    Constraints are stated as ``expr in K`` for an :class:`Affine` block
    ``expr``; internally that is ``A = -F`` and ``b = g``.
    """

    def __init__(self):
        self.n = 0
        self.names: list[str] = []
        self._blocks: list[tuple[Cone, Affine]] = []
        self._obj = Affine(1)

    def variable(self, name: str, shape=()) -> np.ndarray:
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        shape = tuple(shape)
        size = int(np.prod(shape)) if shape != () else 1
        idx = np.arange(self.n, self.n + size)
        self.n += size
        if shape == ():
            self.names.append(name)
            return idx[0]
        for pos in np.ndindex(*shape):
            self.names.append(f"{name}[{','.join(map(str, pos))}]")
        return idx.reshape(shape)

    def minimize(self, expr: Affine):
        if expr.nrows != 1:
            expr = expr.sum()
        self._obj = self._obj + expr

    def add_zero(self, expr: Affine):
        if expr.nrows:
            self._blocks.append((Cone(ZERO, expr.nrows), expr))

    def add_nonneg(self, expr: Affine):
        if expr.nrows:
            self._blocks.append((Cone(NONNEG, expr.nrows), expr))

    def add_soc(self, t: Affine, x: Affine):
        """||x|| <= t with a single-row ``t``."""
        self._blocks.append((Cone(SOC, 1 + x.nrows), Affine.stack([t, x])))

    def add_rotated_soc(self, u: Affine, v: Affine, x: Affine):
        """||x||^2 <= u * v with u, v >= 0 (single-row u and v)."""
        t = (u + v) * 0.5
        d = (u - v) * 0.5
        self.add_soc(t, Affine.stack([d, x]))

    def add_psd(self, entries: dict, n: int):
        """Symmetric matrix with entries[(i, j)] (i <= j) is PSD.

        Missing entries are zero.
        """
        parts = []
        for i in range(n):
            for j in range(i, n):
                e = entries.get((i, j))
                if e is None:
                    e = Affine(1)
                parts.append(e * (1.0 if i == j else np.sqrt(2.0)))
        expr = Affine.stack(parts)
        assert expr.nrows == svec_size(n)
        self._blocks.append((Cone(PSD, n), expr))

    def build(self) -> ConicProblem:
        c = np.zeros(self.n)
        np.add.at(c, self._obj.cols, self._obj.vals)
        expr = Affine.stack([blk for _, blk in self._blocks])
        F = sp.coo_matrix((expr.vals, (expr.rows, expr.cols)), shape=(expr.nrows, self.n))
        cones = [cone for cone, _ in self._blocks]
        return ConicProblem(
            c, -F.tocsc(), expr.const, cones, list(self.names), float(self._obj.const[0])
        )


def dump_problem(problem: ConicProblem, out: TextIO) -> None:
    """Write the plain-text standard-form listing.

    Format, one item per line::

        conic-problem v1
        shape <m> <n>
        offset <value>            (constant added to the objective)
        cones <count>
        <kind> <dim>              (repeated, in row order)
        c <n>
        <j> <value>               (nonzero objective entries)
        b <m>
        <i> <value>               (nonzero right-hand side entries)
        A <nnz>
        <i> <j> <value>           (sparse triplets, 0-based)
        names <n|0>
        <name>                    (one per column when present)
    """
    m, n = problem.shape
    w = out.write
    w("conic-problem v1\n")
    w(f"shape {m} {n}\n")
    w(f"offset {float(problem.offset)!r}\n")
    w(f"cones {len(problem.cones)}\n")
    for cone in problem.cones:
        w(f"{cone.kind} {cone.dim}\n")
    nz = np.flatnonzero(problem.c)
    w(f"c {nz.size}\n")
    for j in nz:
        w(f"{j} {float(problem.c[j])!r}\n")
    nz = np.flatnonzero(problem.b)
    w(f"b {nz.size}\n")
    for i in nz:
        w(f"{i} {float(problem.b[i])!r}\n")
    A = problem.A.tocoo()
    w(f"A {A.nnz}\n")
    for i, j, v in zip(A.row, A.col, A.data):
        w(f"{i} {j} {float(v)!r}\n")
    names = problem.var_names or []
    w(f"names {len(names)}\n")
    for name in names:
        w(f"{name}\n")


def load_problem(stream: TextIO) -> ConicProblem:
    """Read the listing produced by :func:`dump_problem`."""
    lines = iter(stream.read().splitlines())

    def header(tag):
        parts = next(lines).split()
        if parts[0] != tag:
            raise ConicShapeError(f"expected {tag!r}, found {parts[0]!r}")
        return [int(p) for p in parts[1:]]

    if next(lines).strip() != "conic-problem v1":
        raise ConicShapeError("not a conic-problem listing")
    m, n = header("shape")
    tag, value = next(lines).split()
    if tag != "offset":
        raise ConicShapeError(f"expected 'offset', found {tag!r}")
    (count,) = header("cones")
    cones = []
    for _ in range(count):
        kind, dim = next(lines).split()
        cones.append(Cone(kind, int(dim)))
    c = np.zeros(n)
    for _ in range(header("c")[0]):
        j, v = next(lines).split()
        c[int(j)] = float(v)
    b = np.zeros(m)
    for _ in range(header("b")[0]):
        i, v = next(lines).split()
        b[int(i)] = float(v)
    (nnz,) = header("A")
    trip = np.array([next(lines).split() for _ in range(nnz)], dtype=float).reshape(nnz, 3)
    A = sp.coo_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(m, n))
    names = [next(lines) for _ in range(header("names")[0])] or None
    return ConicProblem(c, A, b, cones, names, float(value))


def hermitian_psd_entries(re_idx: np.ndarray, im_idx: np.ndarray, n: int) -> dict:
    """Entries of the real embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.

    ``re_idx[i, j]`` (i <= j) indexes the real part, ``im_idx[i, j]`` (i < j)
    the imaginary part of the upper triangle; the embedding has side 2n.
    """
    entries = {}
    for i in range(n):
        for j in range(i, n):
            re = Affine.var([re_idx[i, j]])
            entries[(i, j)] = re
            entries[(n + i, n + j)] = re
            if i == j:
                continue
            im = Affine.var([im_idx[i, j]])
            # block (0,1) is -Im; Im is antisymmetric so -Im[i, j] at (i, n+j)
            entries[(i, n + j)] = -im
            entries[(j, n + i)] = im
    return entries


__all__ = [
    "Affine",
    "ConicBuilder",
    "ConicProblem",
    "ConicShapeError",
    "ConicSolution",
    "DUAL_INFEASIBLE",
    "MAX_ITER",
    "OPTIMAL",
    "PRIMAL_INFEASIBLE",
    "dump_problem",
    "hermitian_psd_entries",
    "load_problem",
    "svec_index",
]
