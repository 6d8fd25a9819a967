"""Sparse symmetric matrices, submatrix extraction, factorizations, dense
generalized eigensolvers and truncated SVD/POD.

Everything in here is plain linear algebra; the domain decomposition logic
lives in :mod:`schwarzkit.decomposition` and :mod:`schwarzkit.coarse_spaces`.
All containers are immutable after construction and safe to share between
worker threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "IndexSet",
    "SparseMatrix",
    "EigenPairs",
    "StructuralError",
    "NotSPDError",
    "from_triplets",
    "extract_submatrix",
    "cholesky_factor",
    "CholeskyFactor",
    "generalized_sym_eig",
    "truncated_pod",
    "read_matrix_market",
    "write_matrix_market",
]

# Blocks at or below this size are factorized densely; larger ones go through
# a sparse direct factorization.
DENSE_LIMIT = 256


class StructuralError(ValueError):
    """Raised for invalid index sets, out-of-bounds triplets and the like."""


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization hits a non-positive pivot.

    The attribute ``pivot`` carries the (0-based) index of the offending
    pivot when known, else ``-1``.
    """

    def __init__(self, message, pivot=-1):
        super().__init__(message)
        self.pivot = int(pivot)


@dataclass(frozen=True)
class IndexSet:
    """A sorted, duplicate-free set of global indices."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise StructuralError("IndexSet must be sorted, unique and nonnegative")
        object.__setattr__(self, "indices", idx)
        idx.setflags(write=False)

    @classmethod
    def make(cls, indices) -> "IndexSet":
        """Build an IndexSet from any iterable, sorting and deduplicating."""
        if isinstance(indices, IndexSet):
            return indices
        return cls(np.unique(np.asarray(list(indices) if not hasattr(indices, "__array__") else indices, dtype=np.int64)))

    def __len__(self):
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        pos = np.searchsorted(self.indices, i)
        return pos < len(self.indices) and self.indices[pos] == i

    def check_bounds(self, n: int) -> None:
        if len(self) and self.indices[-1] >= n:
            raise StructuralError(
                f"index {self.indices[-1]} out of bounds for dimension {n}"
            )

    def positions_of(self, sub: "IndexSet") -> np.ndarray:
        """Positions of the members of ``sub`` within this set."""
        pos = np.searchsorted(self.indices, sub.indices)
        if np.any(pos >= len(self.indices)) or np.any(self.indices[pos] != sub.indices):
            raise StructuralError("subset contains indices not present in the set")
        return pos

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(np.union1d(self.indices, other.indices))

    def difference(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(np.setdiff1d(self.indices, other.indices, assume_unique=True))


@dataclass(frozen=True)
class SparseMatrix:
    """Immutable CSR matrix; symmetric matrices carry ``symmetric=True``.

    Attributes
    ----------
    n_rows, n_cols : int
        Matrix dimensions.
    row_offsets, col_indices, values : ndarray
        Standard CSR arrays.  Column indices are strictly increasing within
        each row and duplicates have been summed.
    symmetric : bool
        If set, construction verifies (i, j) == (j, i) to 1e-14 relative.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    symmetric: bool = False
    _csr: sp.csr_matrix = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        csr = sp.csr_matrix(
            (np.asarray(self.values, dtype=float),
             np.asarray(self.col_indices, dtype=np.int32),
             np.asarray(self.row_offsets, dtype=np.int64)),
            shape=(self.n_rows, self.n_cols),
        )
        csr.sum_duplicates()
        csr.sort_indices()
        object.__setattr__(self, "row_offsets", csr.indptr)
        object.__setattr__(self, "col_indices", csr.indices)
        object.__setattr__(self, "values", csr.data)
        object.__setattr__(self, "_csr", csr)
        if not np.all(np.isfinite(csr.data)):
            raise StructuralError("matrix entries must be finite")
        if self.symmetric:
            if self.n_rows != self.n_cols:
                raise StructuralError("symmetric matrix must be square")
            gap = abs(csr - csr.T)
            scale = max(abs(csr).max(), 1.0)
            if gap.nnz and gap.max() > 1e-14 * scale:
                raise StructuralError(
                    f"matrix flagged symmetric but |A - A^T| = {gap.max():.3e}"
                )

    @classmethod
    def from_scipy(cls, mat, symmetric=False) -> "SparseMatrix":
        csr = sp.csr_matrix(mat)
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data,
                   symmetric=symmetric)

    @classmethod
    def from_dense(cls, arr, symmetric=False) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=float)), symmetric)

    def tocsr(self) -> sp.csr_matrix:
        return self._csr

    def todense(self) -> np.ndarray:
        return self._csr.toarray()

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ x

    def __matmul__(self, x):
        return self._csr @ x

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()


def from_triplets(n_rows: int, n_cols: int, triplets, symmetric=False) -> SparseMatrix:
    """Assemble a SparseMatrix from (row, col, value) triplets.

    Duplicate triplets are summed, matching finite element assembly
    semantics.  Out-of-bounds indices raise :class:`StructuralError`.
    """
    trip = list(triplets)
    if trip:
        rows, cols, vals = zip(*trip)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=float)
    if rows.size:
        if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
            raise StructuralError("triplet index out of bounds")
    coo = sp.coo_matrix((vals.astype(float), (rows, cols)), shape=(n_rows, n_cols))
    return SparseMatrix.from_scipy(coo.tocsr(), symmetric=symmetric)


def extract_submatrix(A: SparseMatrix, rows, cols) -> SparseMatrix:
    """Extract A[rows, cols] as a new SparseMatrix.

    Entry (i, j) of the result equals A(rows[i], cols[j]).  The result keeps
    the symmetric flag only when rows and cols are the same set.
    """
    rows = IndexSet.make(rows)
    cols = IndexSet.make(cols)
    rows.check_bounds(A.n_rows)
    cols.check_bounds(A.n_cols)
    sub = A.tocsr()[rows.indices][:, cols.indices].tocsr()
    symmetric = A.symmetric and len(rows) == len(cols) and np.array_equal(
        rows.indices, cols.indices)
    return SparseMatrix.from_scipy(sub, symmetric=symmetric)


class CholeskyFactor:
    """Direct factorization of an SPD matrix with reusable solves.

    Small or dense inputs are factorized with LAPACK Cholesky; larger sparse
    inputs use a sparse LU in symmetric mode, whose pivots double as an SPD
    check.
    """

    def __init__(self, A, dense_limit=DENSE_LIMIT):
        if isinstance(A, SparseMatrix):
            mat = A.tocsr()
        elif sp.issparse(A):
            mat = sp.csr_matrix(A)
        else:
            mat = np.asarray(A, dtype=float)
        n = mat.shape[0]
        if mat.shape[0] != mat.shape[1]:
            raise StructuralError("factorization requires a square matrix")
        self.n = n
        if n == 0:
            self._mode = "empty"
            return
        if not sp.issparse(mat) or n <= dense_limit:
            dense = mat.toarray() if sp.issparse(mat) else mat
            try:
                self._chol = sla.cho_factor(dense, lower=True, check_finite=False)
            except sla.LinAlgError as err:
                raise NotSPDError(str(err), pivot=_pivot_from_message(str(err))) from err
            self._mode = "dense"
        else:
            lu = spla.splu(
                mat.tocsc(),
                diag_pivot_thresh=0.0,
                permc_spec="MMD_AT_PLUS_A",
                options={"SymmetricMode": True},
            )
            d = lu.U.diagonal()
            bad = np.where(d <= 0.0)[0]
            if bad.size:
                raise NotSPDError(
                    f"matrix is not SPD: pivot {bad[0]} is {d[bad[0]]:.3e}",
                    pivot=bad[0],
                )
            self._lu = lu
            self._mode = "sparse"

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self._mode == "empty":
            return np.zeros_like(b)
        if self._mode == "dense":
            return sla.cho_solve(self._chol, b, check_finite=False)
        if b.ndim == 1:
            return self._lu.solve(b)
        return self._lu.solve(b)


def _pivot_from_message(msg: str) -> int:
    m = re.search(r"(\d+)", msg)
    return int(m.group(1)) - 1 if m else -1


def cholesky_factor(A, dense_limit=DENSE_LIMIT) -> CholeskyFactor:
    """Factorize an SPD matrix; raises :class:`NotSPDError` otherwise."""
    return CholeskyFactor(A, dense_limit=dense_limit)


def solve(factor: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """Solve with a previously computed factorization."""
    return factor.solve(b)


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in ascending order, with B-orthonormal eigenvectors as
    the matching columns of ``vectors``."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=float))
        if self.values.size > 1 and np.any(np.diff(self.values) < 0):
            raise StructuralError("eigenvalues must be ascending")


def generalized_sym_eig(A, B) -> EigenPairs:
    """Solve the dense generalized symmetric eigenproblem A v = lambda B v.

    A must be symmetric positive semidefinite and B symmetric positive
    definite.  The full spectrum is returned in ascending order; the
    eigenvectors are B-orthonormal.  Internally B is reduced by Cholesky,
    B = L L^T, followed by a standard symmetric eigensolve of
    L^-1 A L^-T.
    """
    A = _as_dense(A)
    B = _as_dense(B)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise StructuralError("A and B must be square with matching shapes")
    n = A.shape[0]
    if n == 0:
        return EigenPairs(np.zeros(0), np.zeros((0, 0)))
    try:
        L = sla.cholesky(B, lower=True, check_finite=False)
    except sla.LinAlgError as err:
        raise NotSPDError(
            f"B is not positive definite ({err})",
            pivot=_pivot_from_message(str(err)),
        ) from err
    # C = L^-1 A L^-T, symmetrized against round-off before the eigensolve
    C = sla.solve_triangular(L, A, lower=True, check_finite=False)
    C = sla.solve_triangular(L, C.T, lower=True, check_finite=False)
    C = 0.5 * (C + C.T)
    w, Q = sla.eigh(C, check_finite=False)
    V = sla.solve_triangular(L, Q, lower=True, trans="T", check_finite=False)
    return EigenPairs(w, V)


def truncated_pod(columns, tol_o: float) -> np.ndarray:
    """Orthonormal basis of the dominant left singular vectors of ``columns``.

    Classical snapshot POD: directions are ranked by the eigenvalues of the
    correlation matrix (the squared singular values), and every direction
    with sigma_i^2 > tol_o * sigma_1^2 is kept, ordered by descending
    sigma.  An all-zero input yields an empty basis.
    """
    if tol_o <= 0:
        raise StructuralError("tol_o must be positive")
    cols = np.asarray(columns, dtype=float)
    if cols.ndim != 2 or cols.size == 0:
        return np.zeros((cols.shape[0] if cols.ndim == 2 else 0, 0))
    U, s, _ = sla.svd(cols, full_matrices=False, check_finite=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((cols.shape[0], 0))
    keep = int(np.sum(s**2 > tol_o * s[0] ** 2))
    return U[:, :keep]


def _as_dense(M) -> np.ndarray:
    if isinstance(M, SparseMatrix):
        return M.todense()
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


# ---------------------------------------------------------------------------
# Matrix Market coordinate I/O
# ---------------------------------------------------------------------------


class MatrixMarketError(ValueError):
    """Parse error carrying the 1-based line number of the offense."""

    def __init__(self, message, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = int(line)


def write_matrix_market(A: SparseMatrix, path) -> None:
    """Write a SparseMatrix in Matrix Market coordinate format.

    Symmetric matrices are stored in lower-triangular symmetric form.
    """
    coo = A.tocsr().tocoo()
    sym = A.symmetric
    with open(path, "w") as fh:
        kind = "symmetric" if sym else "general"
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        if sym:
            mask = coo.row >= coo.col
            rows, cols, vals = coo.row[mask], coo.col[mask], coo.data[mask]
        else:
            rows, cols, vals = coo.row, coo.col, coo.data
        fh.write(f"{A.n_rows} {A.n_cols} {len(vals)}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_matrix_market(path) -> SparseMatrix:
    """Read a Matrix Market coordinate file; honors symmetric storage."""
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    header = lines[0].split()
    if (
        len(header) < 5
        or header[0] != "%%MatrixMarket"
        or header[1].lower() != "matrix"
        or header[2].lower() != "coordinate"
        or header[3].lower() != "real"
    ):
        raise MatrixMarketError("expected '%%MatrixMarket matrix coordinate real ...'", 1)
    symmetry = header[4].lower()
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", 1)
    k = 1
    while k < len(lines) and lines[k].lstrip().startswith("%"):
        k += 1
    if k >= len(lines):
        raise MatrixMarketError("missing size line", len(lines))
    parts = lines[k].split()
    if len(parts) != 3:
        raise MatrixMarketError("size line must be 'rows cols nnz'", k + 1)
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError as err:
        raise MatrixMarketError(f"bad size line: {err}", k + 1) from None
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=float)
    entry = 0
    for off, line in enumerate(lines[k + 1:]):
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        parts = line.split()
        if entry >= nnz:
            raise MatrixMarketError("more entries than declared", k + 2 + off)
        if len(parts) != 3:
            raise MatrixMarketError("entry line must be 'row col value'", k + 2 + off)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as err:
            raise MatrixMarketError(f"bad entry: {err}", k + 2 + off) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise MatrixMarketError(f"entry ({i}, {j}) out of bounds", k + 2 + off)
        rows[entry], cols[entry], vals[entry] = i - 1, j - 1, v
        entry += 1
    if entry != nnz:
        raise MatrixMarketError(
            f"declared {nnz} entries but found {entry}", len(lines))
    if symmetry == "symmetric":
        off_diag = rows != cols
        rows, cols = (
            np.concatenate([rows, cols[off_diag]]),
            np.concatenate([cols, rows[off_diag]]),
        )
        vals = np.concatenate([vals, vals[off_diag]])
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    return SparseMatrix.from_scipy(coo.tocsr(), symmetric=(symmetry == "symmetric"))
