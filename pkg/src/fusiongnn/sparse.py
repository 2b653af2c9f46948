"""Square sparse matrices in sorted coordinate form with a cached CSR view."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionError, NonFiniteError


class SparseMatrix:
    """An ``n x n`` matrix stored as (row, col, value) triples sorted by (row, col).

    Duplicate coordinates passed to the constructor are summed. Instances are
    treated as immutable once built.
    """

    __slots__ = ("n", "rows", "cols", "vals", "indptr", "_t_perm", "_t_indptr")

    def __init__(self, n, rows, cols, vals=None):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if vals is None:
            vals = np.ones(len(rows))
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise DimensionError("rows, cols and vals must have equal length")
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise DimensionError(f"index out of range for n={n}")
        if not np.isfinite(vals).all():
            raise NonFiniteError("sparse values must be finite")
        key = rows * n + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        uniq, start = np.unique(key, return_index=True)
        self.n = int(n)
        self.rows = uniq // n if n else uniq
        self.cols = uniq % n if n else uniq
        self.vals = np.add.reduceat(vals[order], start) if len(uniq) else vals[:0]
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.rows, minlength=self.n), out=self.indptr[1:])
        self._t_perm = None
        self._t_indptr = None

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self):
        return len(self.vals)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, idx, idx)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionError(f"expected a square matrix, got {dense.shape}")
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], r, c, dense[r, c])

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = self.vals
        return out

    def transpose_layout(self):
        """Permutation putting entries in column-major order plus the matching indptr.

        ``vals[perm]`` listed against ``rows[perm]`` is the CSR layout of the transpose.
        """
        if self._t_perm is None:
            self._t_perm = np.lexsort((self.rows, self.cols))
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.cols, minlength=self.n), out=indptr[1:])
            self._t_indptr = indptr
        return self._t_perm, self._t_indptr

    def transpose(self):
        return SparseMatrix(self.n, self.cols, self.rows, self.vals)

    def with_values(self, vals):
        """Same sparsity pattern, new values (no re-sorting)."""
        out = object.__new__(SparseMatrix)
        out.n, out.rows, out.cols, out.indptr = self.n, self.rows, self.cols, self.indptr
        out.vals = np.ascontiguousarray(vals, dtype=np.float64)
        out._t_perm, out._t_indptr = self._t_perm, self._t_indptr
        return out

    def matmul(self, dense, vals=None):
        dense = np.ascontiguousarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.n:
            raise DimensionError(f"spmm: sparse {self.shape} x dense {dense.shape}")
        v = self.vals if vals is None else np.ascontiguousarray(vals, dtype=np.float64)
        return kernels.csr_spmm(self.indptr, self.cols, v, dense)

    def rmatmul_t(self, dense, vals=None):
        """Compute ``self.T @ dense`` without materialising the transpose."""
        dense = np.ascontiguousarray(dense, dtype=np.float64)
        perm, indptr = self.transpose_layout()
        v = self.vals if vals is None else np.asarray(vals, dtype=np.float64)
        return kernels.csr_spmm(indptr, np.ascontiguousarray(self.rows[perm]),
                                np.ascontiguousarray(v[perm]), dense)

    def row_sums(self):
        return kernels.segment_sum(self.indptr, self.vals)

    def is_symmetric(self, tol=0.0):
        t = self.transpose()
        if t.nnz != self.nnz:
            return False
        return (np.array_equal(t.rows, self.rows) and np.array_equal(t.cols, self.cols)
                and np.allclose(t.vals, self.vals, atol=tol, rtol=0))

    def __repr__(self):
        return f"SparseMatrix(n={self.n}, nnz={self.nnz})"
