"""COO sparse matrix used for normalized adjacencies."""

from __future__ import annotations

import numpy as np
import scipy.sparse

from .errors import ContractError, ShapeError


class SparseMatrix:
    """Immutable COO matrix, entries sorted by (row, col) with no duplicates.

    Duplicate coordinates passed to the constructor are summed unless
    ``sum_duplicates=False``, in which case they raise.  Explicit zeros are
    dropped.
    """

    __slots__ = ("shape", "row", "col", "val", "symmetric", "_csr")

    def __init__(self, shape, row, col, val, *, symmetric=False, sum_duplicates=True):
        n_rows, n_cols = (int(shape[0]), int(shape[1]))
        row = np.asarray(row, dtype=np.int64).ravel()
        col = np.asarray(col, dtype=np.int64).ravel()
        val = np.asarray(val, dtype=np.float64).ravel()
        if not (len(row) == len(col) == len(val)):
            raise ShapeError("row, col and val must have equal length")
        if len(row) and (row.min() < 0 or row.max() >= n_rows or col.min() < 0 or col.max() >= n_cols):
            raise ContractError(f"index out of range for shape {(n_rows, n_cols)}")
        if not np.all(np.isfinite(val)):
            raise ContractError("sparse values must be finite")

        order = np.lexsort((col, row))
        row, col, val = row[order], col[order], val[order]
        if len(row) > 1:
            dup = (row[1:] == row[:-1]) & (col[1:] == col[:-1])
            if dup.any():
                if not sum_duplicates:
                    raise ContractError("duplicate (row, col) entries")
                keys = row * n_cols + col
                uniq, inverse = np.unique(keys, return_inverse=True)
                summed = np.zeros(len(uniq))
                np.add.at(summed, inverse, val)
                row, col, val = uniq // n_cols, uniq % n_cols, summed
        keep = val != 0.0
        self.shape = (n_rows, n_cols)
        self.row = row[keep]
        self.col = col[keep]
        self.val = val[keep]
        for arr in (self.row, self.col, self.val):
            arr.setflags(write=False)
        self.symmetric = bool(symmetric)
        self._csr = None
        if self.symmetric and not self._is_symmetric():
            raise ContractError("matrix flagged symmetric is not symmetric")

    @classmethod
    def from_dense(cls, dense, *, symmetric=False):
        dense = np.asarray(dense, dtype=np.float64)
        row, col = np.nonzero(dense)
        return cls(dense.shape, row, col, dense[row, col], symmetric=symmetric)

    @classmethod
    def from_edges(cls, n, edges, *, symmetric=True):
        """Build an n x n matrix from ``(i, j, w)`` triples, mirroring each pair."""
        edges = list(edges)
        if not edges:
            return cls((n, n), [], [], [], symmetric=symmetric)
        arr = np.asarray(edges, dtype=np.float64)
        i, j, w = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
        if symmetric:
            off = i != j
            i, j, w = (np.concatenate([i, j[off]]), np.concatenate([j, i[off]]),
                       np.concatenate([w, w[off]]))
        return cls((n, n), i, j, w, symmetric=symmetric, sum_duplicates=False)

    @property
    def nnz(self):
        return len(self.val)

    def _is_symmetric(self):
        if self.shape[0] != self.shape[1]:
            return False
        order = np.lexsort((self.row, self.col))
        return (np.array_equal(self.row, self.col[order])
                and np.array_equal(self.col, self.row[order])
                and np.array_equal(self.val, self.val[order]))

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row, self.col] = self.val
        return out

    def transpose(self):
        return SparseMatrix(self.shape[::-1], self.col, self.row, self.val,
                            symmetric=self.symmetric)

    @property
    def T(self):
        return self.transpose()

    def row_sums(self):
        out = np.zeros(self.shape[0])
        np.add.at(out, self.row, self.val)
        return out

    def diagonal(self):
        out = np.zeros(min(self.shape))
        on = self.row == self.col
        out[self.row[on]] = self.val[on]
        return out

    def scale_rows_cols(self, left, right):
        """Return diag(left) @ self @ diag(right)."""
        val = self.val * (left[self.row] * right[self.col])
        return SparseMatrix(self.shape, self.row, self.col, val, symmetric=self.symmetric
                            and np.array_equal(left, right))

    def without_diagonal(self):
        off = self.row != self.col
        return SparseMatrix(self.shape, self.row[off], self.col[off], self.val[off],
                            symmetric=self.symmetric)

    def submatrix(self, index):
        """Rows and columns restricted to ``index`` (in the given order)."""
        index = np.asarray(index, dtype=np.int64)
        remap = np.full(self.shape[0], -1, dtype=np.int64)
        remap[index] = np.arange(len(index))
        keep = (remap[self.row] >= 0) & (remap[self.col] >= 0)
        return SparseMatrix((len(index), len(index)), remap[self.row[keep]],
                            remap[self.col[keep]], self.val[keep], symmetric=self.symmetric)

    def dot(self, b):
        """Plain (untaped) product with a dense matrix in O(nnz * cols)."""
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 2 or self.shape[1] != b.shape[0]:
            raise ShapeError(f"cannot multiply sparse {self.shape} by {b.shape}")
        if self._csr is None:
            self._csr = scipy.sparse.csr_matrix((self.val, (self.row, self.col)), shape=self.shape)
        return np.asarray(self._csr @ b)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.row, other.row)
                and np.array_equal(self.col, other.col) and np.array_equal(self.val, other.val))

    __hash__ = None

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz}, symmetric={self.symmetric})"
