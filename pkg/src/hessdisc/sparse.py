"""Sparse assembly and direct solvers.

Everything downstream works with ``scipy.sparse.csr_matrix`` objects that are
canonical (duplicates summed, column indices sorted).  Factorizations are
SuperLU based with a fixed, recorded column ordering so that reruns are
bit-identical.
"""
from __future__ import annotations

import os

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

#: Column orderings handed to SuperLU; recorded in study metadata.
ORDERING = {"spd": "COLAMD", "general": "COLAMD"}

PIVOT_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a factorization hits a (numerically) zero pivot."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


def assemble_from_triplets(n_rows, n_cols, rows, cols=None, vals=None):
    """Build a canonical CSR matrix from (row, col, value) triplets.

    Either pass three parallel arrays, or a single list of 3-tuples as
    ``rows``.  Duplicate entries are summed.
    """
    if cols is None:
        trip = list(rows)
        if trip:
            r, c, v = zip(*trip)
        else:
            r, c, v = (), (), ()
        rows, cols, vals = r, c, v
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise ValueError("triplet arrays must have equal length")
    if rows.size:
        if rows.min() < 0 or rows.max() >= n_rows:
            bad = int(rows[(rows < 0) | (rows >= n_rows)][0])
            raise IndexError(f"row index {bad} out of range for {n_rows} rows")
        if cols.min() < 0 or cols.max() >= n_cols:
            bad = int(cols[(cols < 0) | (cols >= n_cols)][0])
            raise IndexError(f"column index {bad} out of range for {n_cols} columns")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, rtol=1e-12):
    """Entrywise check ``|A_ij - A_ji| <= rtol * max(1, |A_ij|)``."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    D = (A - A.T).tocoo()
    if D.nnz == 0:
        return True
    scale = np.maximum(1.0, np.abs(np.asarray(A[D.row, D.col]).ravel()))
    return bool(np.all(np.abs(D.data) <= rtol * scale))


class Factorization:
    """Reusable sparse LU decomposition of a square matrix.

    ``kind="spd"`` checks symmetry up front and uses a symmetric fill-reducing
    ordering; the numerical factorization itself is an LU either way.
    """

    def __init__(self, A, kind="general"):
        if kind not in ORDERING:
            raise ValueError(f"unknown factorization kind {kind!r}")
        A = sp.csc_matrix(A, dtype=float)
        n, m = A.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {n}x{m}")
        if kind == "spd" and not is_symmetric(A):
            raise ValueError("matrix flagged SPD is not symmetric")
        self.shape = A.shape
        self.kind = kind
        self.ordering = ORDERING[kind]
        self._n = n
        if n == 0:
            self._lu = None
            return
        diag_max = np.abs(A.diagonal()).max()
        scale = max(diag_max, abs(A).max()) if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrixError("zero matrix", row=0)
        try:
            lu = spla.splu(A, permc_spec=self.ordering,
                           options={"SymmetricMode": kind == "spd"})
        except RuntimeError as exc:
            raise SingularMatrixError(f"factorization failed: {exc}") from exc
        piv = np.abs(lu.U.diagonal())
        small = np.flatnonzero(piv < PIVOT_RTOL * scale)
        if small.size:
            # U row k corresponds to original row perm_r^{-1}[k]
            inv = np.empty(n, dtype=np.int64)
            inv[lu.perm_r] = np.arange(n)
            row = int(inv[small[0]])
            raise SingularMatrixError(
                f"numerically singular matrix: pivot {piv[small[0]]:.3e} at row {row}",
                row=row)
        self._lu = lu

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self._n:
            raise ValueError(f"rhs has length {b.shape[0]}, expected {self._n}")
        if self._n == 0:
            return b.copy()
        return self._lu.solve(b)


def factorize(A, kind="general"):
    return Factorization(A, kind=kind)


def solve(A, b, kind="general"):
    return Factorization(A, kind=kind).solve(b)


def solve_block_2x2(A11, A12, A21, A22, b1, b2):
    """Solve ``[[A11, A12], [A21, A22]] [x1; x2] = [b1; b2]`` monolithically."""
    n1 = A11.shape[0]
    K = sp.bmat([[A11, A12], [A21, A22]], format="csc")
    rhs = np.concatenate([np.asarray(b1, float), np.asarray(b2, float)])
    x = Factorization(K, kind="general").solve(rhs)
    return x[:n1], x[n1:]


def residual_ok(A, x, b, rtol=1e-8):
    """The factorization acceptance test ``|Ax-b| <= rtol (|A|_F |x| + |b|)``."""
    r = np.linalg.norm(A @ x - b)
    return r <= rtol * (spla.norm(A, "fro") * np.linalg.norm(x) + np.linalg.norm(b))


def dump_matrix(A, path):
    """Write ``A`` in MatrixMarket coordinate format."""
    scipy.io.mmwrite(os.fspath(path), sp.coo_matrix(A), precision=17)


def maybe_dump(A, name):
    """Dump ``A`` to ``$HESSDISC_DUMP_DIR/<name>.mtx`` if that variable is set."""
    target = os.environ.get("HESSDISC_DUMP_DIR")
    if target:
        os.makedirs(target, exist_ok=True)
        dump_matrix(A, os.path.join(target, f"{name}.mtx"))
