"""Pure-numpy implementations of the hot kernels.

Used whenever the compiled ``_kernels`` extension is unavailable, or when
``TOKENUAP_PURE_PYTHON=1`` is set.  Every function here has the same
signature and semantics as its counterpart in ``_kernels.pyx``.
"""

import numpy as np

MODE_NONE = 0
MODE_SINGLE = 1
MODE_PER_TOKEN = 2


def pool_mean(table, ids, offsets, delta, mode):
    """Mean of (possibly perturbed) embedding rows per ragged segment.

    ``ids[offsets[b]:offsets[b + 1]]`` are the token ids of example ``b``.
    ``mode`` selects how ``delta`` is added to every gathered row: not at all,
    one shared vector, or the row of ``delta`` indexed by the same token id.
    """
    rows = table[ids]
    if mode == MODE_SINGLE:
        rows = rows + delta
    elif mode == MODE_PER_TOKEN:
        rows = rows + delta[ids]
    counts = np.diff(offsets)
    starts = offsets[:-1]
    pooled = np.zeros((counts.size, table.shape[1]))
    # position-by-position accumulation reproduces the compiled summation order
    for j in range(int(counts.max()) if counts.size else 0):
        live = np.nonzero(counts > j)[0]
        pooled[live] += rows[starts[live] + j]
    return pooled / counts[:, None]


def scatter_mean(grad_pooled, ids, offsets, out):
    """Adjoint of :func:`pool_mean` w.r.t. the gathered rows, accumulated into ``out``."""
    counts = np.diff(offsets)
    per_pos = np.repeat(grad_pooled / counts[:, None], counts, axis=0)
    np.add.at(out, ids, per_pos)
    return out


def topk_rows(scores, k, exclude):
    """Column indices of the ``k`` largest scores in every row.

    Order is descending score, ties broken by ascending column index.
    ``exclude[i] >= 0`` removes that column from row ``i``.  Returns an
    ``(n_rows, min(k, available))`` int64 array, where ``available`` is one
    less than the column count as soon as any row excludes a column.
    """
    n_rows, n_cols = scores.shape
    excluding = bool(np.any(exclude >= 0))
    kk = min(k, n_cols - 1 if excluding else n_cols)
    if kk <= 0:
        return np.empty((n_rows, 0), dtype=np.int64)
    work = np.array(scores, dtype=np.float64, copy=True)
    rows = np.nonzero(exclude >= 0)[0]
    work[rows, exclude[rows]] = -np.inf
    # stable sort on the negated scores keeps equal scores in index order
    order = np.argsort(-work, axis=1, kind="stable")[:, :kk]
    return order.astype(np.int64, copy=False)
