"""Backend selection for the hot kernels.

The compiled extension is preferred; the numpy fallback is used when the
extension was not built or when ``TOKENUAP_PURE_PYTHON`` is set to a
non-empty value other than ``0``.
"""

import os

import numpy as np

from . import _kernels_py

MODE_NONE = 0
MODE_SINGLE = 1
MODE_PER_TOKEN = 2


def _load_backend():
    if os.environ.get("TOKENUAP_PURE_PYTHON", "0") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "cython"


_impl, BACKEND = _load_backend()


def pool_mean(table, ids, offsets, delta=None, mode=MODE_NONE):
    table = np.ascontiguousarray(table, dtype=np.float64)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if mode != MODE_NONE:
        delta = np.ascontiguousarray(delta, dtype=np.float64)
    return _impl.pool_mean(table, ids, offsets, delta, mode)


def scatter_mean(grad_pooled, ids, offsets, out):
    if not (out.flags.c_contiguous and out.dtype == np.float64):
        raise ValueError("scatter target must be a C-contiguous float64 array")
    grad_pooled = np.ascontiguousarray(grad_pooled, dtype=np.float64)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    return _impl.scatter_mean(grad_pooled, ids, offsets, out)


def topk_rows(scores, k, exclude=None):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if exclude is None:
        exclude = np.full(scores.shape[0], -1, dtype=np.int64)
    exclude = np.ascontiguousarray(exclude, dtype=np.int64)
    return _impl.topk_rows(scores, int(k), exclude)
