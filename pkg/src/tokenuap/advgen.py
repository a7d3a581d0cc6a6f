"""Adversarial text from an embedding-space perturbation.

Step one maps every lexical token to the vocabulary token whose original
embedding is most cosine-similar to the token's perturbed embedding.  Step
two replaces, in each input, the single token whose substitute lies
farthest from it (cosine distance in the original space).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .classifier import predict
from .core_math import NeighborIndex, unit_rows
from .exceptions import GenerationSkipped, InvalidInputError
from .metrics import perturbed_embeddings
from .text_data import LabeledExample

NO_NEIGHBOR = -1


@dataclass(frozen=True)
class SubstitutionTable:
    """``neighbor[t]`` and ``displacement[t]`` per token id; specials hold ``-1`` / ``nan``."""

    neighbor: np.ndarray
    displacement: np.ndarray
    special_ids: frozenset = frozenset()

    def __post_init__(self):
        nb = np.asarray(self.neighbor, dtype=np.int64)
        disp = np.asarray(self.displacement, dtype=np.float64)
        object.__setattr__(self, "neighbor", nb)
        object.__setattr__(self, "displacement", disp)
        object.__setattr__(self, "special_ids", frozenset(int(i) for i in self.special_ids))
        if nb.shape != disp.shape or nb.ndim != 1:
            raise InvalidInputError("neighbor and displacement must be equal-length vectors")
        ids = np.arange(nb.size)
        mapped = nb != NO_NEIGHBOR
        if np.any(nb[mapped] == ids[mapped]):
            bad = int(ids[mapped][nb[mapped] == ids[mapped]][0])
            raise InvalidInputError(f"substitution table maps token {bad} to itself")
        if np.any((nb[mapped] < 0) | (nb[mapped] >= nb.size)):
            raise InvalidInputError("substitution target outside the vocabulary")
        if any(int(t) in self.special_ids for t in nb[mapped]):
            raise InvalidInputError("substitution table targets a special token")
        if any(nb[s] != NO_NEIGHBOR for s in self.special_ids if s < nb.size):
            raise InvalidInputError("special tokens must not be substituted")
        d = disp[mapped]
        if np.any(~np.isfinite(d)) or np.any(d < 0) or np.any(d > 2):
            raise InvalidInputError("displacements must lie in [0, 2]")

    def __len__(self):
        return int(np.sum(self.neighbor != NO_NEIGHBOR))

    def covers(self, token_id):
        return self.neighbor[token_id] != NO_NEIGHBOR

    def as_dict(self):
        return {int(t): (int(n), float(self.displacement[t])) for t, n in enumerate(self.neighbor) if n != NO_NEIGHBOR}


def build_substitution_table(embeddings, delta, special_ids=()):
    """Nearest original embedding to each perturbed lexical token (excluding itself)."""
    emb = np.asarray(embeddings, dtype=np.float64)
    special = frozenset(int(i) for i in special_ids)
    lexical = np.array([i for i in range(emb.shape[0]) if i not in special], dtype=np.int64)
    if lexical.size < 2:
        raise InvalidInputError("need at least two lexical tokens to build substitutions")
    index = NeighborIndex(emb, lexical)
    queries = perturbed_embeddings(emb, delta)[lexical]
    nearest = index.query(queries, 1, lexical)[:, 0]
    unit = unit_rows(emb[lexical])
    pos = np.full(emb.shape[0], -1, dtype=np.int64)
    pos[lexical] = np.arange(lexical.size)
    cos = np.einsum("ij,ij->i", unit, unit[pos[nearest]])
    neighbor = np.full(emb.shape[0], NO_NEIGHBOR, dtype=np.int64)
    displacement = np.full(emb.shape[0], np.nan)
    neighbor[lexical] = nearest
    displacement[lexical] = np.clip(1.0 - cos, 0.0, 2.0)
    return SubstitutionTable(neighbor, displacement, special)


@dataclass(frozen=True)
class AdversarialSample:
    original: tuple
    adversarial: tuple
    position: int
    original_token: int
    new_token: int
    label: int
    clean_prediction: int = -1
    adversarial_prediction: int = -1

    @property
    def flipped(self):
        return self.clean_prediction != self.adversarial_prediction


def substitute(example, table):
    """The adversarial token sequence and the replaced position, without any classifier."""
    tokens = example.tokens
    best_pos, best_disp = -1, -np.inf
    for j, t in enumerate(tokens):
        if t >= table.neighbor.size or not table.covers(t):
            continue
        # strict '>' keeps the leftmost position on ties
        if table.displacement[t] > best_disp:
            best_pos, best_disp = j, table.displacement[t]
    if best_pos < 0:
        raise GenerationSkipped("example has no substitutable token")
    new = list(tokens)
    new[best_pos] = int(table.neighbor[tokens[best_pos]])
    return tuple(new), best_pos


def generate_adversarial(example, table, params=None):
    """Replace the single maximally displaced token; predictions come from the clean classifier."""
    adv, pos = substitute(example, table)
    clean_pred = adv_pred = -1
    if params is not None:
        preds = predict(params, [example, LabeledExample(adv, example.label)])
        clean_pred, adv_pred = int(preds[0]), int(preds[1])
    return AdversarialSample(
        original=tuple(example.tokens),
        adversarial=adv,
        position=pos,
        original_token=int(example.tokens[pos]),
        new_token=int(adv[pos]),
        label=int(example.label),
        clean_prediction=clean_pred,
        adversarial_prediction=adv_pred,
    )


def attack_success_rate(examples, table, params):
    """Fraction of correctly classified examples whose adversarial text is misclassified.

    Examples without a substitutable token count as not flipped.  Returns 0.0
    (and warns) when no example is classified correctly to begin with.
    """
    examples = list(examples)
    if not examples:
        raise InvalidInputError("no examples")
    clean = predict(params, examples)
    correct = flipped = 0
    for ex, pred in zip(examples, clean):
        if pred != ex.label:
            continue
        correct += 1
        try:
            s = generate_adversarial(ex, table, params)
        except GenerationSkipped:
            continue
        flipped += s.adversarial_prediction != s.label
    if correct == 0:
        warnings.warn("no correctly classified examples; attack success rate defined as 0", RuntimeWarning)
        return 0.0
    return flipped / correct
