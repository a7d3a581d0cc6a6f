"""Attack efficacy and imperceptibility measurements."""

from dataclasses import dataclass, field

import numpy as np

from .classifier import evaluate_accuracy, predict
from .core_math import NeighborIndex
from .exceptions import InvalidInputError


def accuracy(params, examples, delta=None):
    """Fraction of examples whose argmax prediction (lowest class on ties) is correct."""
    return evaluate_accuracy(params, examples, delta)


def predictions(params, examples, delta=None):
    return predict(params, list(examples), delta)


def matthews_corr(predictions, labels):
    """Matthews correlation for binary labels; 0 when any marginal is empty."""
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape:
        raise InvalidInputError("predictions and labels differ in length")
    if not (np.isin(pred, (0, 1)).all() and np.isin(lab, (0, 1)).all()):
        raise InvalidInputError("Matthews correlation is defined for binary labels only")
    tp = int(np.sum((pred == 1) & (lab == 1)))
    tn = int(np.sum((pred == 0) & (lab == 0)))
    fp = int(np.sum((pred == 1) & (lab == 0)))
    fn = int(np.sum((pred == 0) & (lab == 1)))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / float(np.sqrt(denom))


def perturbed_embeddings(embeddings, delta):
    """Embedding table with the perturbation added to every row (shared or row-wise)."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if delta is None:
        return emb
    d = np.asarray(getattr(delta, "data", delta), dtype=np.float64)
    if d.ndim == 1 and d.shape[0] != emb.shape[1]:
        raise InvalidInputError("perturbation width differs from the embeddings")
    if d.ndim == 2 and d.shape != emb.shape:
        raise InvalidInputError("per-token perturbation shape differs from the embeddings")
    return emb + d


def _candidates(n_rows, exclude_ids):
    excluded = set(int(i) for i in (exclude_ids or ()))
    return np.array([i for i in range(n_rows) if i not in excluded], dtype=np.int64)


def _neighborhoods(embeddings, delta, tokens, k, candidates):
    before = NeighborIndex(embeddings, candidates)
    after = NeighborIndex(perturbed_embeddings(embeddings, delta), candidates)
    n_b = before.query(embeddings[tokens], k, tokens)
    n_a = after.query(after.matrix[tokens], k, tokens)
    return n_b, n_a


def _intersection_score(n_b, n_a):
    denom = min(len(n_a), len(n_b))
    return len(set(n_b.tolist()) & set(n_a.tolist())) / denom


def ni_token(t, embeddings, delta, k=5, exclude_ids=()):
    """Neighbourhood preservation of token ``t`` under the perturbation.

    ``|N_before & N_after| / min(|N_after|, |N_before|)`` where both are the
    ``k`` cosine-nearest other tokens; after perturbation every row of the
    table is perturbed.  Rows in ``exclude_ids`` are never neighbours.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    candidates = _candidates(embeddings.shape[0], exclude_ids)
    if candidates.size < k + 1:
        raise InvalidInputError(f"need at least k+1={k + 1} candidate tokens, have {candidates.size}")
    tokens = np.array([t], dtype=np.int64)
    n_b, n_a = _neighborhoods(embeddings, delta, tokens, k, candidates)
    return _intersection_score(n_b[0], n_a[0])


@dataclass
class NIReport:
    k: int
    per_token: dict
    aggregate: float
    similarity: str = "cosine"
    metadata: dict = field(default_factory=dict)


def ni_vocab(embeddings, delta, k=5, exclude_ids=()):
    """Per-token and mean neighbourhood intersection over all non-excluded tokens."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    candidates = _candidates(embeddings.shape[0], exclude_ids)
    if candidates.size < k + 1:
        raise InvalidInputError(f"need at least k+1={k + 1} candidate tokens, have {candidates.size}")
    n_b, n_a = _neighborhoods(embeddings, delta, candidates, k, candidates)
    scores = {int(t): _intersection_score(b, a) for t, b, a in zip(candidates, n_b, n_a)}
    aggregate = float(np.mean(list(scores.values())))
    return NIReport(k=k, per_token=scores, aggregate=aggregate)


@dataclass
class AttackReport:
    clean_accuracy: float
    n_test: int
    cells: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def accuracy(self, method, eps):
        for c in self.cells:
            if c.method == method and np.isclose(c.eps, eps, rtol=0, atol=1e-12):
                return c.accuracy
        raise KeyError((method, eps))

    def methods(self):
        return list(dict.fromkeys(c.method for c in self.cells))

    def eps_grid(self):
        return sorted(set(c.eps for c in self.cells))

    def table(self):
        """``{method: [accuracy per eps in ascending order]}``."""
        grid = self.eps_grid()
        return {m: [self.accuracy(m, e) for e in grid] for m in self.methods()}
