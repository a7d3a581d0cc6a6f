"""Independent reference implementations used to check the library.

Nothing here calls the gradient code or the neighbour index under test.
"""

import numpy as np

from tokenuap.classifier import PARAM_NAMES, ClassifierParams


def loss_direct(params, examples, delta=None):
    """Mean cross-entropy computed example by example with plain numpy."""
    total = 0.0
    for ex in examples:
        rows = []
        for t in ex.tokens:
            e = params.embeddings[t].copy()
            if delta is not None:
                e = e + (delta if delta.ndim == 1 else delta[t])
            rows.append(e)
        pooled = np.mean(rows, axis=0)
        logits = np.tanh(pooled @ params.W1 + params.b1) @ params.W2 + params.b2
        m = logits.max()
        total += -(logits[ex.label] - m - np.log(np.sum(np.exp(logits - m))))
    return total / len(examples)


def central_difference(f, x, step=1e-5):
    """Gradient of scalar ``f`` at array ``x`` (perturbed in place, restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return g


def fd_grad_delta(params, examples, delta, step=1e-5):
    delta = np.array(delta, dtype=np.float64)
    return central_difference(lambda: loss_direct(params, examples, delta), delta, step)


def fd_grad_params(params, examples, step=1e-5):
    p = ClassifierParams(*(t.copy() for t in params.tensors()))
    return {n: central_difference(lambda: loss_direct(p, examples), getattr(p, n), step) for n in PARAM_NAMES}


def rel_error(a, b):
    """Norm-wise relative error; zero when both are (numerically) zero."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-12:
        return float(np.linalg.norm(a - b))
    return float(np.linalg.norm(a - b) / scale)


def cosine_row(m, t):
    """Cosine of row ``t`` against every row, one pair at a time (equal rows give equal values)."""
    q = m[t]
    qn = np.sqrt(np.dot(q, q))
    return np.array([np.dot(q, r) / (qn * np.sqrt(np.dot(r, r))) for r in m])


def brute_neighbors(sim_row, k, self_id, allowed):
    cand = [j for j in allowed if j != self_id]
    cand.sort(key=lambda j: (-sim_row[j], j))
    return cand[:k]


def brute_ni(t, embeddings, delta, k, excluded=()):
    """NI(t) from full pairwise cosine matrices before and after perturbation."""
    allowed = [i for i in range(embeddings.shape[0]) if i not in set(excluded)]
    after = embeddings + (0 if delta is None else delta)
    after = np.broadcast_to(after, embeddings.shape)
    nb = brute_neighbors(cosine_row(embeddings, t), k, t, allowed)
    na = brute_neighbors(cosine_row(after, t), k, t, allowed)
    return len(set(nb) & set(na)) / min(len(na), len(nb))


def brute_substitution(embeddings, delta, excluded=()):
    """token -> nearest original row (cosine) to its perturbed embedding, by explicit loops."""
    allowed = [i for i in range(embeddings.shape[0]) if i not in set(excluded)]
    after = embeddings + (0 if delta is None else delta)
    out = {}
    for t in allowed:
        q = after[t]
        best = None
        for s in allowed:
            if s == t:
                continue
            e = embeddings[s]
            sim = (q @ e) / (np.linalg.norm(q) * np.linalg.norm(e))
            if best is None or sim > best[0]:
                best = (sim, s)
        out[t] = best[1]
    return out
