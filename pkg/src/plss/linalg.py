"""Sparse CSR kernels, diagonal weights and Matrix Market ingestion."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np


class DimensionError(ValueError):
    """Raised when a vector length does not match the operator."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market content."""


class UnsupportedFormatError(MatrixMarketError):
    """Valid Matrix Market header we deliberately do not handle."""


class SparseMatrix:
    """Immutable CSR matrix.

    Both ``A @ x`` and ``A.T @ u`` are served from the same CSR arrays, the
    transpose product by a scatter over column indices.
    """

    __slots__ = ("_m", "_n", "_row_ptr", "_col_idx", "_values", "_row_of")

    def __init__(self, m: int, n: int, row_ptr, col_idx, values, *, check: bool = True):
        row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if check:
            _check_csr(int(m), int(n), row_ptr, col_idx, values)
        for arr in (row_ptr, col_idx, values):
            arr.setflags(write=False)
        self._m = int(m)
        self._n = int(n)
        self._row_ptr = row_ptr
        self._col_idx = col_idx
        self._values = values
        row_of = np.repeat(np.arange(self._m, dtype=np.int64), np.diff(row_ptr))
        row_of.setflags(write=False)
        self._row_of = row_of

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        rows, cols = np.nonzero(dense)
        return build_csr_arrays(rows, cols, dense[rows, cols], *dense.shape)

    # -- properties -------------------------------------------------------
    @property
    def m(self) -> int:
        return self._m

    @property
    def n(self) -> int:
        return self._n

    @property
    def shape(self) -> Tuple[int, int]:
        return (self._m, self._n)

    @property
    def nnz(self) -> int:
        return int(self._values.size)

    @property
    def row_ptr(self) -> np.ndarray:
        return self._row_ptr

    @property
    def col_idx(self) -> np.ndarray:
        return self._col_idx

    @property
    def values(self) -> np.ndarray:
        return self._values

    # -- kernels ----------------------------------------------------------
    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._n,):
            raise DimensionError(f"matvec expects length {self._n}, got {x.shape}")
        return np.bincount(self._row_of, weights=self._values * x[self._col_idx], minlength=self._m)

    def rmatvec(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self._m,):
            raise DimensionError(f"matvec_transpose expects length {self._m}, got {u.shape}")
        return np.bincount(self._col_idx, weights=self._values * u[self._row_of], minlength=self._n)

    def matmat(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.column_stack([self.matvec(X[:, j]) for j in range(X.shape[1])]) if X.shape[1] else np.zeros((self._m, 0))

    def rmatmat(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=np.float64)
        return np.column_stack([self.rmatvec(U[:, j]) for j in range(U.shape[1])]) if U.shape[1] else np.zeros((self._n, 0))

    def row(self, i: int) -> np.ndarray:
        """Dense copy of row ``i`` (the vector ``A.T @ e_i``)."""
        lo, hi = self._row_ptr[i], self._row_ptr[i + 1]
        out = np.zeros(self._n)
        out[self._col_idx[lo:hi]] = self._values[lo:hi]
        return out

    def row_dot(self, i: int, x) -> float:
        lo, hi = self._row_ptr[i], self._row_ptr[i + 1]
        return float(np.dot(self._values[lo:hi], np.asarray(x)[self._col_idx[lo:hi]]))

    def row_norms(self) -> np.ndarray:
        return np.sqrt(np.bincount(self._row_of, weights=self._values**2, minlength=self._m))

    def column_norms(self) -> np.ndarray:
        return np.sqrt(np.bincount(self._col_idx, weights=self._values**2, minlength=self._n))

    def triplets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._row_of.copy(), self._col_idx.copy(), self._values.copy()

    def toarray(self) -> np.ndarray:
        out = np.zeros((self._m, self._n))
        out[self._row_of, self._col_idx] = self._values
        return out

    def __matmul__(self, other):
        other = np.asarray(other)
        return self.matvec(other) if other.ndim == 1 else self.matmat(other)

    def __repr__(self) -> str:
        return f"SparseMatrix(m={self._m}, n={self._n}, nnz={self.nnz})"


def _check_csr(m, n, row_ptr, col_idx, values):
    if m < 0 or n < 0:
        raise ValueError("negative dimensions")
    if row_ptr.shape != (m + 1,) or row_ptr[0] != 0 or row_ptr[-1] != values.size:
        raise ValueError("row_ptr must have length m+1, start at 0 and end at nnz")
    if np.any(np.diff(row_ptr) < 0):
        raise ValueError("row_ptr must be nondecreasing")
    if col_idx.shape != values.shape:
        raise ValueError("col_idx and values differ in length")
    if col_idx.size and (col_idx.min() < 0 or col_idx.max() >= n):
        raise IndexError("column index out of range")
    rows = np.repeat(np.arange(m), np.diff(row_ptr))
    same_row = rows[1:] == rows[:-1]
    if np.any(same_row & (col_idx[1:] <= col_idx[:-1])):
        raise ValueError("column indices must be strictly increasing within a row")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite matrix entry")


def build_csr_arrays(rows, cols, vals, m: int, n: int) -> SparseMatrix:
    """Vectorized :func:`build_csr` on parallel index/value arrays."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (rows.size == cols.size == vals.size):
        raise ValueError("rows, cols and values must have equal length")
    if rows.size:
        if rows.min() < 0 or rows.max() >= m:
            raise IndexError(f"row index out of range [0, {m})")
        if cols.min() < 0 or cols.max() >= n:
            raise IndexError(f"column index out of range [0, {n})")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite matrix entry")

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        new = np.ones(rows.size, dtype=bool)
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
    counts = np.bincount(rows, minlength=m)
    row_ptr = np.concatenate(([0], np.cumsum(counts)))
    return SparseMatrix(m, n, row_ptr, cols, vals, check=False)


def build_csr(entries: Iterable[Tuple[int, int, float]], m: int, n: int) -> SparseMatrix:
    """Assemble a canonical CSR matrix from ``(row, col, value)`` triplets.

    Duplicate coordinates are summed. Explicit zeros are kept as stored
    entries.
    """
    entries = list(entries)
    if not entries:
        return build_csr_arrays([], [], [], m, n)
    rows, cols, vals = zip(*entries)
    return build_csr_arrays(rows, cols, vals, m, n)


def matvec(A: SparseMatrix, x) -> np.ndarray:
    return A.matvec(x)


def matvec_transpose(A: SparseMatrix, u) -> np.ndarray:
    return A.rmatvec(u)


def column_norms(A: SparseMatrix) -> np.ndarray:
    return A.column_norms()


@dataclass(frozen=True)
class Weight:
    """Diagonal positive-definite parameter matrix ``W``.

    ``diag is None`` means the identity. ``zero_columns`` lists columns of the
    source matrix whose norm was zero and that were given weight 1.
    """

    mode: str = "identity"
    diag: Optional[np.ndarray] = None
    zero_columns: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.mode not in ("identity", "diagonal"):
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if (self.mode == "diagonal") != (self.diag is not None):
            raise ValueError("diag must be given exactly when mode is 'diagonal'")
        if self.diag is not None:
            d = np.asarray(self.diag, dtype=np.float64)
            if d.ndim != 1 or not np.all(np.isfinite(d)) or np.any(d <= 0):
                raise ValueError("weight entries must be positive and finite")
            d.setflags(write=False)
            object.__setattr__(self, "diag", d)

    @property
    def is_identity(self) -> bool:
        return self.diag is None

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``W @ v``."""
        return v if self.diag is None else self.diag * v

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        """``W^{-1} @ v``."""
        return v if self.diag is None else v / self.diag

    def sqrt(self) -> Optional[np.ndarray]:
        return None if self.diag is None else np.sqrt(self.diag)

    def inner_inverse(self, u: np.ndarray, v: np.ndarray) -> float:
        """``u^T W^{-1} v``."""
        return float(u @ self.apply_inverse(v))


IDENTITY = Weight()


# -- Matrix Market ------------------------------------------------------------

PathOrStream = Union[str, os.PathLike, io.TextIOBase]


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="ascii", errors="replace"), True
    return source, False


def _parse_header(line: str) -> Tuple[str, str, str, str]:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixMarketError(f"bad Matrix Market banner: {line.strip()!r}")
    obj, fmt, field_, symm = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise UnsupportedFormatError(f"object {obj!r} is not supported")
    return obj, fmt, field_, symm


def _data_lines(stream) -> Iterable[str]:
    for line in stream:
        s = line.strip()
        if s and not s.startswith("%"):
            yield s


def read_matrix_market(source: PathOrStream) -> SparseMatrix:
    """Read a coordinate real/integer general/symmetric Matrix Market file.

    ``source`` is a path or an open text stream. Symmetric storage is expanded
    to full storage with diagonal entries kept once.
    """
    stream, owned = _open_text(source)
    try:
        _, fmt, field_, symm = _parse_header(stream.readline())
        if fmt != "coordinate":
            raise UnsupportedFormatError(f"format {fmt!r} is not supported (need coordinate)")
        if field_ not in ("real", "integer", "double"):
            raise UnsupportedFormatError(f"field {field_!r} is not supported")
        if symm not in ("general", "symmetric"):
            raise UnsupportedFormatError(f"symmetry {symm!r} is not supported")

        lines = _data_lines(stream)
        try:
            size = next(lines).split()
        except StopIteration:
            raise MatrixMarketError("missing size line") from None
        try:
            m, n, nnz = (int(t) for t in size)
        except ValueError:
            raise MatrixMarketError(f"bad size line: {' '.join(size)!r}") from None

        body = " ".join(lines).split()
        if len(body) != 3 * nnz:
            raise MatrixMarketError(f"expected {nnz} entries of 3 fields, found {len(body)} tokens")
        try:
            data = np.array(body, dtype=np.float64).reshape(nnz, 3)
        except ValueError as exc:
            raise MatrixMarketError(f"non-numeric entry: {exc}") from None
    finally:
        if owned:
            stream.close()

    rows_f, cols_f, vals = data[:, 0], data[:, 1], data[:, 2]
    if np.any(rows_f != np.floor(rows_f)) or np.any(cols_f != np.floor(cols_f)):
        raise MatrixMarketError("non-integer coordinate")
    rows = rows_f.astype(np.int64) - 1
    cols = cols_f.astype(np.int64) - 1
    bad = (rows < 0) | (rows >= m) | (cols < 0) | (cols >= n)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise MatrixMarketError(f"entry {k + 1} at ({rows[k] + 1}, {cols[k] + 1}) outside {m}x{n}")
    if not np.all(np.isfinite(vals)):
        raise MatrixMarketError("non-finite value")

    if symm == "symmetric":
        if m != n:
            raise MatrixMarketError("symmetric matrix must be square")
        off = rows != cols
        rows, cols, vals = (
            np.concatenate((rows, cols[off])),
            np.concatenate((cols, rows[off])),
            np.concatenate((vals, vals[off])),
        )
    return build_csr_arrays(rows, cols, vals, m, n)


def write_matrix_market(A: SparseMatrix, target, comment: Optional[str] = None) -> None:
    """Write ``A`` as a coordinate real general file."""
    close = False
    if isinstance(target, (str, os.PathLike)):
        target, close = open(target, "w", encoding="ascii"), True
    try:
        target.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                target.write(f"% {line}\n")
        target.write(f"{A.m} {A.n} {A.nnz}\n")
        rows, cols, vals = A.triplets()
        for i, j, v in zip(rows, cols, vals):
            target.write(f"{i + 1} {j + 1} {float(v)!r}\n")
    finally:
        if close:
            target.close()


def read_vector(source: PathOrStream) -> np.ndarray:
    """Read a dense vector: Matrix Market ``array`` file or whitespace-separated values."""
    stream, owned = _open_text(source)
    try:
        text = stream.read()
    finally:
        if owned:
            stream.close()
    lines = text.splitlines()
    if lines and lines[0].lower().startswith("%%matrixmarket"):
        _, fmt, field_, _ = _parse_header(lines[0])
        if fmt != "array" or field_ not in ("real", "integer", "double"):
            raise UnsupportedFormatError("vector files must be real 'array' format")
        body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
        rows, cols = (int(t) for t in body[0].split()[:2])
        if cols != 1:
            raise MatrixMarketError("vector file must have a single column")
        vals = np.array(" ".join(body[1:]).split(), dtype=np.float64)
        if vals.size != rows:
            raise MatrixMarketError(f"expected {rows} values, found {vals.size}")
        return vals
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith(("%", "#"))]
    return np.array(" ".join(body).split(), dtype=np.float64)


def as_sparse(A) -> SparseMatrix:
    """Coerce dense arrays (and scipy sparse matrices) to :class:`SparseMatrix`."""
    if isinstance(A, SparseMatrix):
        return A
    if hasattr(A, "tocsr"):
        csr = A.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return SparseMatrix(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)
    return SparseMatrix.from_dense(A)


def check_vector(v, length: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (length,):
        raise DimensionError(f"{name} must have length {length}, got shape {v.shape}")
    return v


__all__: Sequence[str] = [
    "DimensionError",
    "MatrixMarketError",
    "UnsupportedFormatError",
    "SparseMatrix",
    "Weight",
    "IDENTITY",
    "build_csr",
    "build_csr_arrays",
    "matvec",
    "matvec_transpose",
    "column_norms",
    "read_matrix_market",
    "write_matrix_market",
    "read_vector",
    "as_sparse",
    "check_vector",
]
