"""Vectorised numpy versions of the sparse kernels.

Used when the compiled extension is unavailable or ``FUSIONGNN_PURE_PYTHON`` is
set. Every function takes CSR arrays (``indptr``, ``indices``) with int64 dtype.
"""

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def _segment_reduce(indptr, values, out):
    # reduceat misbehaves on empty segments, so only reduce the non-empty ones
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if len(nonempty):
        out[nonempty] = np.add.reduceat(values, indptr[nonempty], axis=0)
    return out


def csr_spmm(indptr, indices, data, dense):
    n = len(indptr) - 1
    out = np.zeros((n, dense.shape[1]), dtype=np.float64)
    if len(indices) == 0:
        return out
    contrib = data[:, None] * dense[indices]
    return _segment_reduce(indptr, contrib, out)


def sddmm(indptr, indices, left, right):
    rows = _row_ids(indptr)
    return np.einsum("ij,ij->i", left[rows], right[indices])


def segment_sum(indptr, values):
    out = np.zeros(len(indptr) - 1, dtype=np.float64)
    if len(values) == 0:
        return out
    return _segment_reduce(indptr, values, out)


def segment_softmax(indptr, scores):
    out = np.empty_like(scores)
    if len(scores) == 0:
        return out
    rows = _row_ids(indptr)
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    row_max = np.full(len(indptr) - 1, -np.inf)
    row_max[nonempty] = np.maximum.reduceat(scores, indptr[nonempty])
    e = np.exp(scores - row_max[rows])
    z = segment_sum(indptr, e)
    out[:] = e / z[rows]
    return out
