"""Compressed sparse row storage with product tallies and Matrix Market input.

Thread-safety: the matrix arrays are never modified after construction,
so concurrent products are safe. The product tally is guarded by a lock,
so ``mv_count`` stays exact when products run on several threads.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels


class MatrixMarketError(ValueError):
    """Raised for unsupported or malformed Matrix Market input."""


class _Tally:
    """Lock-protected counter shared between a matrix and its transpose view."""

    def __init__(self):
        self._lock = threading.Lock()
        self.value = 0

    def bump(self):
        with self._lock:
            self.value += 1

    def reset(self):
        with self._lock:
            self.value = 0


@dataclass(frozen=True)
class NormEstimates:
    norm1: float
    norminf: float
    norme: float


def _canonical_csr(shape, rows, cols, vals):
    """Sort COO triplets row-major and sum duplicates.

    Explicit zeros are kept so the stored pattern matches the input.
    """
    m, n = shape
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size:
        if rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n:
            raise ValueError("entry index outside the declared matrix shape")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        key = rows * n + cols
        first = np.ones(key.size, dtype=bool)
        first[1:] = key[1:] != key[:-1]
        starts = np.flatnonzero(first)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=indptr[1:])
    return indptr, cols, vals


class SparseMatrix:
    """Real M-by-N matrix in CSR form.

    Every call to :meth:`apply` or :meth:`apply_transpose` adds one to
    ``mv_count``. The tally is shared with views from :meth:`transpose`,
    so a solver working on the transpose is charged to the same handle.
    """

    def __init__(self, shape, indptr, indices, data, *, _tally=None, _transpose=None):
        m, n = (int(shape[0]), int(shape[1]))
        self.shape = (m, n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self._check()
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)
        self._tally = _tally if _tally is not None else _Tally()
        self._transpose = _transpose
        self._norms = None
        self._matvec, self._rmatvec = kernels.get_kernels()

    def _check(self):
        m, n = self.shape
        if self.indptr.shape != (m + 1,) or self.indptr[0] != 0:
            raise ValueError("row offsets must have length M+1 and start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("row offsets must be nondecreasing")
        nnz = int(self.indptr[-1])
        if self.indices.shape != (nnz,) or self.data.shape != (nnz,):
            raise ValueError("column index/value arrays do not match row offsets")
        if nnz:
            if self.indices.min() < 0 or self.indices.max() >= n:
                raise ValueError("column index out of range")
            steps = np.diff(self.indices)
            same_row = np.ones(nnz - 1, dtype=bool)
            starts = self.indptr[1:-1]
            starts = starts[(starts > 0) & (starts < nnz)]
            same_row[starts - 1] = False
            if np.any(steps[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("matrix values must be finite")

    @classmethod
    def from_coo(cls, shape, rows, cols, vals):
        """Build from coordinate triplets; duplicates are summed."""
        indptr, indices, data = _canonical_csr(shape, rows, cols, vals)
        return cls(shape, indptr, indices, data)

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("expected a 2-D array")
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape, rows, cols, a[rows, cols])

    @property
    def nnz(self):
        return int(self.indptr[-1])

    @property
    def mv_count(self):
        return self._tally.value

    def reset_count(self):
        self._tally.reset()

    def apply(self, x, out=None):
        """Return ``A @ x``."""
        m, n = self.shape
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (n,):
            raise ValueError(f"apply expects a vector of length {n}, got shape {x.shape}")
        if out is None:
            out = np.empty(m)
        self._matvec(self.indptr, self.indices, self.data, x, out)
        self._tally.bump()
        return out

    def apply_transpose(self, y, out=None):
        """Return ``A.T @ y``."""
        m, n = self.shape
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (m,):
            raise ValueError(f"apply_transpose expects a vector of length {m}, got shape {y.shape}")
        if out is None:
            out = np.empty(n)
        self._rmatvec(self.indptr, self.indices, self.data, y, out)
        self._tally.bump()
        return out

    def use_backend(self, backend):
        """Switch product kernels (``"python"`` or ``"cython"``) here and on the transpose view."""
        self._matvec, self._rmatvec = kernels.get_kernels(backend)
        if self._transpose is not None:
            self._transpose._matvec, self._transpose._rmatvec = self._matvec, self._rmatvec
        return self

    def transpose(self):
        """CSR view of ``A.T`` that shares the product tally."""
        if self._transpose is None:
            m, n = self.shape
            rows = np.repeat(np.arange(m, dtype=np.int64), np.diff(self.indptr))
            indptr, indices, data = _canonical_csr((n, m), self.indices, rows, self.data)
            t = SparseMatrix((n, m), indptr, indices, data, _tally=self._tally, _transpose=self)
            t._matvec, t._rmatvec = self._matvec, self._rmatvec
            self._transpose = t
        return self._transpose

    def toarray(self):
        """Dense copy; does not touch the tally."""
        m, n = self.shape
        out = np.zeros((m, n))
        rows = np.repeat(np.arange(m), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def norm_estimates(self):
        if self._norms is None:
            self._norms = norm_estimates(self)
        return self._norms

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def norm_estimates(a: SparseMatrix) -> NormEstimates:
    """1-, infinity- and geometric-mean norm estimates of ``a``."""
    m, n = a.shape
    absval = np.abs(a.data)
    colsum = np.bincount(a.indices, weights=absval, minlength=n)
    rows = np.repeat(np.arange(m), np.diff(a.indptr))
    rowsum = np.bincount(rows, weights=absval, minlength=m)
    norm1 = float(colsum.max()) if n else 0.0
    norminf = float(rowsum.max()) if m else 0.0
    return NormEstimates(norm1, norminf, math.sqrt(norm1 * norminf))


_FIELDS = {"real", "integer"}
_REJECTED_FIELDS = {"complex", "pattern"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric"}


def load_matrix_market(path) -> SparseMatrix:
    """Read a real or integer Matrix Market file (coordinate or array).

    Symmetric and skew-symmetric storage is expanded to the full matrix and
    duplicate coordinates are summed.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(f"{path}:1: missing '%%MatrixMarket' banner")
    obj, fmt, field, symm = (tok.lower() for tok in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"{path}:1: unsupported object '{header[1]}'")
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"{path}:1: unsupported format '{header[2]}'")
    if field in _REJECTED_FIELDS or field not in _FIELDS:
        raise MatrixMarketError(f"{path}:1: unsupported field '{header[3]}'")
    if symm not in _SYMMETRIES:
        raise MatrixMarketError(f"{path}:1: unsupported symmetry '{header[4]}'")

    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError(f"{path}: missing size line")
    lineno, size_line = body[0]
    entries = body[1:]

    def parse_ints(line_no, text, count):
        toks = text.split()
        if len(toks) != count:
            raise MatrixMarketError(f"{path}:{line_no}: expected {count} integers, got {text!r}")
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise MatrixMarketError(f"{path}:{line_no}: malformed integer in {text!r}") from None

    def parse_value(line_no, tok):
        try:
            v = float(tok)
        except ValueError:
            raise MatrixMarketError(f"{path}:{line_no}: malformed value {tok!r}") from None
        if not math.isfinite(v):
            raise MatrixMarketError(f"{path}:{line_no}: non-finite value {tok!r}")
        return v

    if fmt == "coordinate":
        m, n, nnz = parse_ints(lineno, size_line, 3)
        if len(entries) != nnz:
            raise MatrixMarketError(f"{path}: size line declares {nnz} entries, found {len(entries)}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for p, (line_no, text) in enumerate(entries):
            toks = text.split()
            if len(toks) != 3:
                raise MatrixMarketError(f"{path}:{line_no}: expected 'row col value', got {text!r}")
            i, j = parse_ints(line_no, " ".join(toks[:2]), 2)
            if not (1 <= i <= m and 1 <= j <= n):
                raise MatrixMarketError(f"{path}:{line_no}: index ({i}, {j}) outside {m}x{n}")
            rows[p], cols[p], vals[p] = i - 1, j - 1, parse_value(line_no, toks[2])
    else:
        m, n = parse_ints(lineno, size_line, 2)
        if symm == "general":
            positions = [(i, j) for j in range(n) for i in range(m)]
        elif symm == "symmetric":
            positions = [(i, j) for j in range(n) for i in range(j, m)]
        else:
            positions = [(i, j) for j in range(n) for i in range(j + 1, m)]
        if len(entries) != len(positions):
            raise MatrixMarketError(
                f"{path}: array body has {len(entries)} values, expected {len(positions)}")
        rows = np.array([p[0] for p in positions], dtype=np.int64)
        cols = np.array([p[1] for p in positions], dtype=np.int64)
        vals = np.empty(len(positions))
        for p, (line_no, text) in enumerate(entries):
            toks = text.split()
            if len(toks) != 1:
                raise MatrixMarketError(f"{path}:{line_no}: expected one value, got {text!r}")
            vals[p] = parse_value(line_no, toks[0])

    if symm != "general":
        if m != n:
            raise MatrixMarketError(f"{path}: {symm} storage requires a square matrix")
        off = rows != cols
        if symm == "skew-symmetric" and np.any(~off & (vals != 0)):
            raise MatrixMarketError(f"{path}: skew-symmetric matrix with nonzero diagonal")
        sign = -1.0 if symm == "skew-symmetric" else 1.0
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, sign * vals[off]]))
    return SparseMatrix.from_coo((m, n), rows, cols, vals)


def write_matrix_market(path, a, comment=None):
    """Write ``a`` (SparseMatrix or dense array) as a general real coordinate file."""
    if not isinstance(a, SparseMatrix):
        a = SparseMatrix.from_dense(a)
    m, n = a.shape
    rows = np.repeat(np.arange(m), np.diff(a.indptr))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            fh.write(f"% {comment}\n")
        fh.write(f"{m} {n} {a.nnz}\n")
        for i, j, v in zip(rows, a.indices, a.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
