"""Backend selection for the sparse kernels.

The compiled extension is preferred; the numpy fallback is used when it is not
built or when the environment variable ``FUSIONGNN_PURE_PYTHON=1`` is set.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FUSIONGNN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

csr_spmm = _impl.csr_spmm
sddmm = _impl.sddmm
segment_sum = _impl.segment_sum
segment_softmax = _impl.segment_softmax

__all__ = ["BACKEND", "csr_spmm", "sddmm", "segment_sum", "segment_softmax"]
