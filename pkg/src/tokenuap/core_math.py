"""Norms, lp-ball projection, cosine similarity and exact nearest neighbours.

Only the orders ``p = 2`` and ``p = inf`` are supported.  Everything is
float64; inputs are converted, never mutated.
"""

import math

import numpy as np

from . import kernels
from .exceptions import DegenerateVectorError, InvalidInputError

INF = math.inf


def norm_order(p):
    """Canonicalize a norm order to ``2`` or ``math.inf``.

    Accepts ``2``, ``2.0``, ``"2"``, ``math.inf``, ``"inf"``.
    """
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("inf", "infinity", "linf"):
            return INF
        if key in ("2", "l2"):
            return 2
        raise InvalidInputError(f"unsupported norm order {p!r}; use 2 or inf")
    if p == 2:
        return 2
    if p == INF:
        return INF
    raise InvalidInputError(f"unsupported norm order {p!r}; use 2 or inf")


def norm_order_name(p):
    return "inf" if norm_order(p) == INF else "2"


def _as_finite(v, name="v"):
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def lp_norm(v, p=2):
    v = _as_finite(v)
    if norm_order(p) == 2:
        return float(np.sqrt(np.dot(v.ravel(), v.ravel())))
    return float(np.max(np.abs(v))) if v.size else 0.0


def row_norms(m, p=2):
    """lp norm of every row of a 2-D array."""
    m = _as_finite(m, "matrix")
    if norm_order(p) == 2:
        return np.sqrt(np.einsum("ij,ij->i", m, m))
    if m.shape[1] == 0:
        return np.zeros(m.shape[0])
    return np.max(np.abs(m), axis=1)


def project_lp_ball(v, eps, p=2):
    """Euclidean projection of ``v`` onto ``{x : ||x||_p <= eps}``.

    Vectors already inside the ball are returned unchanged (as a copy).
    """
    if eps < 0:
        raise InvalidInputError(f"eps must be non-negative, got {eps}")
    v = _as_finite(v)
    if norm_order(p) == INF:
        return np.clip(v, -eps, eps)
    n = lp_norm(v, 2)
    if n <= eps:
        return v.copy()
    return v * (eps / n)


def project_rows(m, eps, p=2):
    """Apply :func:`project_lp_ball` to every row of ``m`` independently."""
    if eps < 0:
        raise InvalidInputError(f"eps must be non-negative, got {eps}")
    m = _as_finite(m, "matrix")
    if norm_order(p) == INF:
        return np.clip(m, -eps, eps)
    norms = row_norms(m, 2)
    out = m.copy()
    over = norms > eps
    out[over] *= (eps / norms[over])[:, None]
    return out


def cosine_similarity(a, b):
    a = _as_finite(a, "a")
    b = _as_finite(b, "b")
    na = lp_norm(a, 2)
    nb = lp_norm(b, 2)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero vector is undefined")
    # clamp guards against 1 + ulp from rounding
    return float(min(1.0, max(-1.0, np.dot(a, b) / (na * nb))))


def unit_rows(m):
    m = _as_finite(m, "matrix")
    norms = row_norms(m, 2)
    if np.any(norms == 0.0):
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise DegenerateVectorError(f"row {bad} has zero norm; cosine is undefined")
    return m / norms[:, None]


class NeighborIndex:
    """Exact cosine k-nearest-neighbour search over the rows of a matrix.

    ``candidates`` restricts which row ids may be returned (default: all).
    Results are ordered by descending similarity, ties by ascending id.
    """

    similarity = "cosine"

    def __init__(self, matrix, candidates=None):
        matrix = _as_finite(matrix, "matrix")
        if matrix.ndim != 2 or matrix.shape[0] == 0:
            raise InvalidInputError("neighbor index needs a non-empty 2-D matrix")
        if candidates is None:
            candidates = np.arange(matrix.shape[0], dtype=np.int64)
        else:
            candidates = np.unique(np.asarray(candidates, dtype=np.int64))
        if candidates.size == 0:
            raise InvalidInputError("neighbor index has no candidate rows")
        self.matrix = matrix
        self.candidates = candidates
        self._unit = unit_rows(matrix[candidates])
        # score against distinct rows only, so equal rows get bitwise-equal
        # similarities and ties fall back to id order (BLAS may differ by an ulp)
        self._distinct, self._expand = np.unique(self._unit, axis=0, return_inverse=True)
        self._expand = self._expand.reshape(-1)
        self._pos = np.full(matrix.shape[0], -1, dtype=np.int64)
        self._pos[candidates] = np.arange(candidates.size)

    def __len__(self):
        return int(self.candidates.size)

    def query(self, queries, k, exclude_ids=None, chunk=1024):
        """Top-``k`` candidate ids for each row of ``queries``.

        ``exclude_ids[i]`` (or ``-1``) is removed from the answer for query
        ``i``.  Returns an int64 array of shape ``(n_queries, min(k, available))``.
        """
        if k < 1:
            raise InvalidInputError(f"k must be >= 1, got {k}")
        q = unit_rows(np.atleast_2d(queries))
        n = q.shape[0]
        if exclude_ids is None:
            excl_pos = np.full(n, -1, dtype=np.int64)
        else:
            exclude_ids = np.asarray(exclude_ids, dtype=np.int64).reshape(n)
            excl_pos = np.where(
                (exclude_ids >= 0) & (exclude_ids < self._pos.size),
                self._pos[np.clip(exclude_ids, 0, self._pos.size - 1)],
                -1,
            )
        width = min(k, len(self) - (1 if np.any(excl_pos >= 0) else 0))
        parts = []
        for start in range(0, n, chunk):
            scores = (q[start:start + chunk] @ self._distinct.T)[:, self._expand]
            top = kernels.topk_rows(scores, k, excl_pos[start:start + chunk])
            parts.append(top[:, :width])
        return self.candidates[np.concatenate(parts, axis=0)]

    def k_nearest(self, query, k, exclude_id=None):
        query = _as_finite(query, "query")
        excl = None if exclude_id is None else [exclude_id]
        if exclude_id is not None and 0 <= exclude_id < self._pos.size and self._pos[exclude_id] >= 0:
            width = min(k, len(self) - 1)
        else:
            width = min(k, len(self))
            excl = None
        if width <= 0:
            return []
        return [int(t) for t in self.query(query[None, :], k, excl)[0][:width]]


def k_nearest(index, query, k, exclude_id=None):
    """Ids of the ``k`` rows of ``index`` most cosine-similar to ``query``."""
    return index.k_nearest(query, k, exclude_id)
