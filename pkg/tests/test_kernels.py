import os
import subprocess
import sys

import numpy as np
import pytest

from fusiongnn import _kernels_py as py
from fusiongnn import kernels

compiled = pytest.importorskip("fusiongnn._kernels")


def random_csr(rng, n, m, density=0.3, empty_rows=True):
    mask = rng.random((n, m)) < density
    if empty_rows:
        mask[rng.integers(n)] = False
    indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int64)
    rows, cols = np.nonzero(mask)
    return indptr, cols.astype(np.int64), rng.normal(size=len(cols))


def test_default_backend_is_compiled():
    if os.environ.get("FUSIONGNN_PURE_PYTHON") == "1":
        assert kernels.BACKEND == "python"
    else:
        assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    env = {**os.environ, "FUSIONGNN_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from fusiongnn import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout
    assert out.strip() == "python"


@pytest.mark.parametrize("seed", range(10))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n, m, d = rng.integers(1, 30, size=3)
    indptr, idx, data = random_csr(rng, n, m)
    dense = rng.normal(size=(m, d))
    left, right = rng.normal(size=(n, d)), rng.normal(size=(m, d))
    assert np.allclose(compiled.csr_spmm(indptr, idx, data, dense), py.csr_spmm(indptr, idx, data, dense),
                       rtol=0, atol=1e-12)
    assert np.allclose(compiled.sddmm(indptr, idx, left, right), py.sddmm(indptr, idx, left, right),
                       rtol=0, atol=1e-12)
    assert np.allclose(compiled.segment_sum(indptr, data), py.segment_sum(indptr, data), rtol=0, atol=1e-12)
    a, b = compiled.segment_softmax(indptr, data), py.segment_softmax(indptr, data)
    assert np.allclose(a, b, rtol=0, atol=1e-15)


def test_against_dense():
    rng = np.random.default_rng(0)
    indptr, idx, data = random_csr(rng, 7, 5)
    A = np.zeros((7, 5))
    for r in range(7):
        A[r, idx[indptr[r]:indptr[r + 1]]] = data[indptr[r]:indptr[r + 1]]
    X = rng.normal(size=(5, 3))
    for k in (compiled, py):
        assert np.allclose(k.csr_spmm(indptr, idx, data, X), A @ X)
        assert np.allclose(k.segment_sum(indptr, data), A.sum(axis=1))
        sm = k.segment_softmax(indptr, data)
        sums = np.add.reduceat(sm, indptr[:-1][np.diff(indptr) > 0])
        assert np.allclose(sums, 1.0)


def test_softmax_is_shift_stable():
    indptr = np.array([0, 2], dtype=np.int64)
    for k in (compiled, py):
        out = k.segment_softmax(indptr, np.array([1000.0, 999.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1 / (1 + np.exp(-1)))
