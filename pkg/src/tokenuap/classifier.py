"""Mean-pooled bag-of-embeddings classifier with a two-layer tanh MLP head.

Forward pass for one example with tokens ``t_1..t_m``::

    pooled = mean_j (E[t_j] + delta_j)
    hidden = tanh(pooled @ W1 + b1)
    logits = hidden @ W2 + b2

``delta_j`` is one shared vector (token-agnostic perturbation), the row
``delta[t_j]`` of a per-token table, or absent.  Gradients are derived by
hand and checked against finite differences in the test suite.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .exceptions import InvalidInputError, TrainingError
from .optim import make_optimizer
from .text_data import PAD_ID, LabeledExample

log = logging.getLogger(__name__)

PARAM_NAMES = ("embeddings", "W1", "b1", "W2", "b2")


@dataclass
class ClassifierParams:
    embeddings: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        for name in PARAM_NAMES:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
        v, d = self.embeddings.shape
        if self.W1.shape[0] != d or self.b1.shape != (self.W1.shape[1],):
            raise InvalidInputError("W1/b1 shapes do not match the embedding width")
        if self.W2.shape[0] != self.W1.shape[1] or self.b2.shape != (self.W2.shape[1],):
            raise InvalidInputError("W2/b2 shapes do not match the hidden width")
        if self.W2.shape[1] < 2:
            raise InvalidInputError("need at least two classes")
        if self.activation != "tanh":
            raise InvalidInputError(f"unsupported activation {self.activation!r}")

    @classmethod
    def init(cls, vocab_size, dim, hidden, num_classes, seed=0, scale=0.1):
        rng = np.random.default_rng(seed)
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        return cls(u(vocab_size, dim), u(dim, hidden), u(hidden), u(hidden, num_classes), u(num_classes))

    @property
    def vocab_size(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[1]

    @property
    def hidden(self):
        return self.W1.shape[1]

    @property
    def num_classes(self):
        return self.W2.shape[1]

    def tensors(self):
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self):
        return ClassifierParams(*(t.copy() for t in self.tensors()), activation=self.activation)

    def frozen(self):
        """Copy whose arrays are read-only; any in-place write raises."""
        out = self.copy()
        for t in out.tensors():
            t.flags.writeable = False
        return out

    def checksum(self):
        h = hashlib.sha256()
        for name, t in zip(PARAM_NAMES, self.tensors()):
            h.update(name.encode())
            h.update(np.asarray(t.shape, dtype=np.int64).tobytes())
            h.update(t.astype("<f8").tobytes())
        return h.hexdigest()


class Batch:
    """Ragged minibatch: concatenated token ids plus segment offsets."""

    def __init__(self, ids, offsets, labels):
        self.ids = np.ascontiguousarray(ids, dtype=np.int64)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        if self.offsets.size != self.labels.size + 1:
            raise InvalidInputError("offsets must have one more entry than labels")
        if self.labels.size == 0:
            raise InvalidInputError("empty batch")
        if np.any(np.diff(self.offsets) < 1):
            raise InvalidInputError("every example needs at least one token")

    def __len__(self):
        return int(self.labels.size)

    @property
    def lengths(self):
        return np.diff(self.offsets)

    @classmethod
    def from_examples(cls, examples):
        if isinstance(examples, LabeledExample):
            examples = [examples]
        examples = list(examples)
        if not examples:
            raise InvalidInputError("empty batch")
        lengths = [len(ex.tokens) for ex in examples]
        offsets = np.zeros(len(examples) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        ids = np.fromiter((t for ex in examples for t in ex.tokens), dtype=np.int64, count=int(offsets[-1]))
        return cls(ids, offsets, [ex.label for ex in examples])

    @classmethod
    def from_padded(cls, id_matrix, labels, pad_id=PAD_ID):
        """Strip padding from a rectangular ``(batch, length)`` id array."""
        id_matrix = np.asarray(id_matrix, dtype=np.int64)
        mask = id_matrix != pad_id
        offsets = np.zeros(id_matrix.shape[0] + 1, dtype=np.int64)
        np.cumsum(mask.sum(axis=1), out=offsets[1:])
        return cls(id_matrix[mask], offsets, labels)


def as_batch(data):
    return data if isinstance(data, Batch) else Batch.from_examples(data)


def _delta_array(delta):
    if delta is None:
        return None
    return np.asarray(getattr(delta, "data", delta), dtype=np.float64)


def _delta_mode(params, delta):
    if delta is None:
        return kernels.MODE_NONE
    if delta.ndim == 1:
        if delta.shape[0] != params.dim:
            raise InvalidInputError(f"perturbation has dim {delta.shape[0]}, embeddings have {params.dim}")
        return kernels.MODE_SINGLE
    if delta.ndim == 2:
        if delta.shape != params.embeddings.shape:
            raise InvalidInputError(
                f"per-token perturbation has shape {delta.shape}, embeddings have {params.embeddings.shape}"
            )
        return kernels.MODE_PER_TOKEN
    raise InvalidInputError("perturbation must be a vector or a |V| x d table")


@dataclass
class ForwardTrace:
    batch: Batch
    pooled: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    log_probs: np.ndarray
    delta_mode: int = field(default=kernels.MODE_NONE)

    @property
    def probs(self):
        return np.exp(self.log_probs)

    def predictions(self):
        # argmax returns the first maximum: ties go to the lowest class id
        return np.argmax(self.logits, axis=1)


def log_softmax(logits):
    logits = np.atleast_2d(logits)
    shift = logits - logits.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def forward(params, data, delta=None):
    """Run the classifier on an example, a list of examples, or a :class:`Batch`."""
    batch = as_batch(data)
    if batch.ids.size and (batch.ids.min() < 0 or batch.ids.max() >= params.vocab_size):
        raise InvalidInputError("token id outside the vocabulary")
    d = _delta_array(delta)
    mode = _delta_mode(params, d)
    pooled = kernels.pool_mean(params.embeddings, batch.ids, batch.offsets, d, mode)
    pre = pooled @ params.W1 + params.b1
    hidden = np.tanh(pre)
    logits = hidden @ params.W2 + params.b2
    return ForwardTrace(batch, pooled, pre, hidden, logits, log_softmax(logits), mode)


def cross_entropy(trace, labels=None):
    """Mean negative log-likelihood of ``labels`` (default: the batch labels)."""
    if labels is None:
        labels = trace.batch.labels
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if np.any(labels >= trace.logits.shape[1]) or np.any(labels < 0):
        raise InvalidInputError("label outside the class range")
    picked = trace.log_probs[np.arange(labels.size), labels]
    return float(-picked.mean())


def _backward_to_pooled(params, trace):
    """Gradients of the mean batch loss w.r.t. the head and the pooled vectors."""
    n = len(trace.batch)
    dlogits = trace.probs
    dlogits[np.arange(n), trace.batch.labels] -= 1.0
    dlogits /= n
    grads = {
        "W2": trace.hidden.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dpre = (dlogits @ params.W2.T) * (1.0 - trace.hidden**2)
    grads["W1"] = trace.pooled.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    dpooled = dpre @ params.W1.T
    return grads, dpooled


def loss_and_grad_delta(params, data, delta):
    batch = as_batch(data)
    d = _delta_array(delta)
    trace = forward(params, batch, d)
    _, dpooled = _backward_to_pooled(params, trace)
    if d.ndim == 1:
        # every position receives dpooled / m and there are m positions
        g = dpooled.sum(axis=0)
    else:
        g = np.zeros_like(params.embeddings)
        kernels.scatter_mean(dpooled, batch.ids, batch.offsets, g)
    return cross_entropy(trace), g


def grad_delta(params, data, delta):
    """Exact gradient of the mean batch cross-entropy w.r.t. the perturbation."""
    return loss_and_grad_delta(params, data, delta)[1]


def loss_and_grad_params(params, data):
    batch = as_batch(data)
    trace = forward(params, batch)
    grads, dpooled = _backward_to_pooled(params, trace)
    g_emb = np.zeros_like(params.embeddings)
    kernels.scatter_mean(dpooled, batch.ids, batch.offsets, g_emb)
    grads["embeddings"] = g_emb
    return cross_entropy(trace), grads


def grad_params(params, data):
    """Gradients of the mean batch loss w.r.t. every parameter tensor, keyed by name."""
    return loss_and_grad_params(params, data)[1]


def predict(params, data, delta=None):
    return forward(params, data, delta).predictions()


def evaluate_accuracy(params, examples, delta=None, batch_size=256):
    examples = list(examples)
    if not examples:
        raise InvalidInputError("accuracy of an empty example list is undefined")
    correct = 0
    for start in range(0, len(examples), batch_size):
        batch = Batch.from_examples(examples[start:start + batch_size])
        correct += int(np.sum(predict(params, batch, delta) == batch.labels))
    return correct / len(examples)


@dataclass
class ClassifierConfig:
    dim: int = 16
    hidden: int = 16
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.01
    optimizer: str = "adam"
    momentum: float = 0.9
    patience: int = 5
    seed: int = 0
    init_scale: float = 0.1


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_eval_accuracy: float = float("nan")


def train_classifier(train, eval_examples, num_classes, vocab_size, config=None, history=None):
    """Minibatch training with early stopping on eval accuracy.

    Returns the best-on-eval parameters (the initialization if no epoch ran).
    """
    config = config or ClassifierConfig()
    train = list(train)
    if not train:
        raise InvalidInputError("training set is empty")
    params = ClassifierParams.init(
        vocab_size, config.dim, config.hidden, num_classes, seed=config.seed, scale=config.init_scale
    )
    history = history if history is not None else TrainHistory()
    if config.epochs <= 0:
        return params
    opt = make_optimizer(config.optimizer, lr=config.lr, momentum=config.momentum)
    rng = np.random.default_rng(config.seed + 1)
    tensors = params.tensors()
    best = params.copy()
    best_acc = -1.0
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), config.batch_size):
            batch = Batch.from_examples([train[i] for i in order[start:start + config.batch_size]])
            loss, grads = loss_and_grad_params(params, batch)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}")
            opt.step(tensors, [grads[n] for n in PARAM_NAMES])
            losses.append(loss)
        if not all(np.all(np.isfinite(t)) for t in tensors):
            raise TrainingError(f"parameters became non-finite at epoch {epoch}")
        acc = evaluate_accuracy(params, eval_examples) if eval_examples else float("nan")
        mean_loss = float(np.mean(losses))
        history.epochs.append({"epoch": epoch, "train_loss": mean_loss, "eval_accuracy": acc})
        log.info("epoch %d loss %.4f eval acc %.4f", epoch, mean_loss, acc)
        if not eval_examples:
            best = params.copy()
            continue
        if acc > best_acc:
            best_acc, best, stale = acc, params.copy(), 0
            history.best_epoch, history.best_eval_accuracy = epoch, acc
        else:
            stale += 1
            if config.patience and stale >= config.patience:
                break
    return best
