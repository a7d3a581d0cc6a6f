"""Universal (token-agnostic) and per-token adversarial perturbations.

The trainer maximizes the mean cross-entropy of a frozen classifier over
``delta`` subject to ``||delta||_p <= eps`` by projected gradient ascent:
each minibatch gradient is optionally rescaled to ``eps * g / ||g||_p``,
fed to the configured optimizer in ascent mode, and the result is projected
back onto the lp ball.  The epoch snapshot with the lowest eval accuracy is
kept.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .classifier import Batch, evaluate_accuracy, loss_and_grad_delta
from .core_math import lp_norm, norm_order, norm_order_name, project_lp_ball, project_rows, row_norms
from .exceptions import InvalidInputError
from .optim import make_optimizer

log = logging.getLogger(__name__)

SINGLE = "single"
PER_TOKEN = "per_token"
KINDS = (SINGLE, PER_TOKEN)


@dataclass
class Perturbation:
    kind: str
    data: np.ndarray
    eps: float
    p: object = 2
    provenance: str = "zero"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown perturbation kind {self.kind!r}")
        self.p = norm_order(self.p)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.eps < 0:
            raise InvalidInputError("eps must be non-negative")
        if self.kind == SINGLE and self.data.ndim != 1:
            raise InvalidInputError("a single perturbation is one vector")
        if self.kind == PER_TOKEN and self.data.ndim != 2:
            raise InvalidInputError("a per-token perturbation is a |V| x d table")

    @classmethod
    def zeros(cls, kind, dim, vocab_size=None, eps=0.0, p=2):
        shape = (dim,) if kind == SINGLE else (vocab_size, dim)
        return cls(kind, np.zeros(shape), eps, p, "zero")

    @property
    def dim(self):
        return self.data.shape[-1]

    @property
    def vocab_size(self):
        return self.data.shape[0] if self.kind == PER_TOKEN else None

    def norms(self):
        if self.kind == SINGLE:
            return np.array([lp_norm(self.data, self.p)])
        return row_norms(self.data, self.p)

    def max_norm(self):
        return float(self.norms().max()) if self.data.size else 0.0

    def satisfies_constraint(self, tol=1e-9):
        return self.max_norm() <= self.eps + tol

    def check_compatible(self, params):
        if self.dim != params.dim:
            raise InvalidInputError(f"perturbation dim {self.dim} != classifier embedding dim {params.dim}")
        if self.kind == PER_TOKEN and self.vocab_size != params.vocab_size:
            raise InvalidInputError(
                f"per-token perturbation covers {self.vocab_size} tokens, classifier has {params.vocab_size}"
            )

    def project(self):
        if self.kind == SINGLE:
            return project_lp_ball(self.data, self.eps, self.p)
        return project_rows(self.data, self.eps, self.p)

    def describe(self):
        return f"{self.kind} eps={self.eps:g} p={norm_order_name(self.p)} ({self.provenance})"


@dataclass
class PerturbTrainConfig:
    eps: float = 0.1
    p: object = 2
    lr: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    normalize_gradients: bool = True
    optimizer: str = "adam"
    momentum: float = 0.9
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        self.p = norm_order(self.p)
        if self.eps <= 0:
            raise InvalidInputError("eps must be positive")
        if self.lr <= 0:
            raise InvalidInputError("learning rate must be positive")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return PerturbTrainConfig(**values)


@dataclass
class PerturbHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    steps: int = 0
    skipped_steps: int = 0


def _normalized_direction(g, eps, p, kind):
    """``eps * g / ||g||_p``, per row for per-token tables; zero-norm rows stay zero.

    Returns the direction and whether any normalization was skipped.
    """
    if kind == SINGLE:
        n = lp_norm(g, p)
        if n == 0.0:
            return g, True
        return eps * (g / n), False
    norms = row_norms(g, p)
    live = norms > 0
    out = np.zeros_like(g)
    out[live] = eps * (g[live] / norms[live, None])
    return out, False


def train_perturbation(params, train, eval_examples, config, kind=SINGLE, on_step=None, history=None):
    """Projected gradient ascent on the mean loss of a frozen classifier.

    ``on_step(delta)`` is called after every projection with the current
    perturbation array (read-only view); use it to instrument constraints.
    """
    if kind not in KINDS:
        raise InvalidInputError(f"unknown perturbation kind {kind!r}")
    train = list(train)
    eval_examples = list(eval_examples)
    if not eval_examples:
        raise InvalidInputError("early stopping needs a non-empty eval set")
    history = history if history is not None else PerturbHistory()
    frozen = params.frozen()
    shape = (frozen.dim,) if kind == SINGLE else frozen.embeddings.shape
    delta = np.zeros(shape)
    best = Perturbation(kind, delta.copy(), config.eps, config.p, "zero", config.seed)
    if config.epochs <= 0 or not train:
        return best
    opt = make_optimizer(config.optimizer, lr=config.lr, momentum=config.momentum)
    rng = np.random.default_rng(config.seed)
    best_acc = np.inf
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), config.batch_size):
            batch = Batch.from_examples([train[i] for i in order[start:start + config.batch_size]])
            loss, g = loss_and_grad_delta(frozen, batch, delta)
            losses.append(loss)
            history.steps += 1
            if config.normalize_gradients:
                g, skipped = _normalized_direction(g, config.eps, config.p, kind)
                if skipped:
                    history.skipped_steps += 1
                    continue
            rows = None if kind == SINGLE else np.unique(batch.ids)
            opt.step([delta], [g], ascent=True, rows=rows)
            if kind == SINGLE:
                delta = project_lp_ball(delta, config.eps, config.p)
            else:
                delta = project_rows(delta, config.eps, config.p)
            if on_step is not None:
                view = delta.view()
                view.flags.writeable = False
                on_step(view)
        acc = evaluate_accuracy(frozen, eval_examples, delta)
        history.epochs.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "eval_accuracy": acc})
        log.info("delta epoch %d loss %.4f eval acc %.4f", epoch, np.mean(losses), acc)
        if acc < best_acc:
            best_acc, stale = acc, 0
            best = Perturbation(kind, delta.copy(), config.eps, config.p, "trained", config.seed)
            history.best_epoch = epoch
        else:
            stale += 1
            if config.patience and stale >= config.patience:
                break
    return best


def random_perturbation(kind, dim, eps, p=2, seed=0, vocab_size=None):
    """Standard-normal draw rescaled so every vector has lp norm exactly ``eps``."""
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    if kind not in KINDS:
        raise InvalidInputError(f"unknown perturbation kind {kind!r}")
    if kind == PER_TOKEN and not vocab_size:
        raise InvalidInputError("per-token perturbation needs vocab_size")
    rng = np.random.default_rng(seed)
    shape = (dim,) if kind == SINGLE else (vocab_size, dim)
    data = rng.standard_normal(shape)
    if kind == SINGLE:
        data = data * (eps / lp_norm(data, p))
    else:
        data = data * (eps / row_norms(data, p))[:, None]
    return Perturbation(kind, data, eps, p, "random", seed)


# method label -> (kind, trained?)
METHODS = {
    "VR": (PER_TOKEN, False),
    "SR": (SINGLE, False),
    "V": (PER_TOKEN, True),
    "Ours": (SINGLE, True),
}


@dataclass
class AttackCell:
    method: str
    eps: float
    accuracy: float
    n_test: int
    seed: int


def cell_seed(base_seed, method, eps):
    """Deterministic seed for one (method, eps) cell of a sweep."""
    return int(base_seed) * 100_000 + list(METHODS).index(method) * 10_000 + int(round(eps * 1000)) % 10_000


def build_perturbation(method, params, train, eval_examples, eps, config, seed, history=None):
    kind, trained = METHODS[method]
    if trained:
        return train_perturbation(params, train, eval_examples, config.replace(eps=eps, seed=seed), kind, history=history)
    return random_perturbation(kind, params.dim, eps, config.p, seed, vocab_size=params.vocab_size)


def apply_sweep(params, test, perturbations):
    """Test accuracy under each ``(method, perturbation)`` pair, plus the clean row."""
    from .metrics import AttackReport

    test = list(test)
    report = AttackReport(clean_accuracy=evaluate_accuracy(params, test), n_test=len(test))
    for method, pert in perturbations:
        pert.check_compatible(params)
        acc = evaluate_accuracy(params, test, pert)
        report.cells.append(AttackCell(method, float(pert.eps), acc, len(test), pert.seed))
    return report


def run_sweep(params, train, eval_examples, test, eps_grid, config, methods=tuple(METHODS), seed=None):
    """Build every (method, eps) perturbation and score it on ``test``.

    Returns ``(report, perturbations)`` where ``perturbations`` maps
    ``(method, eps)`` to the :class:`Perturbation` used for that cell.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid or any(e <= 0 for e in eps_grid):
        raise InvalidInputError("eps grid must be non-empty and positive")
    seed = config.seed if seed is None else seed
    built = {}
    pairs = []
    for method in methods:
        if method not in METHODS:
            raise InvalidInputError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
        for eps in eps_grid:
            pert = build_perturbation(method, params, train, eval_examples, eps, config, cell_seed(seed, method, eps))
            built[(method, eps)] = pert
            pairs.append((method, pert))
    report = apply_sweep(params, test, pairs)
    report.metadata.update({"seed": seed, "n_train": len(train), "n_eval": len(eval_examples)})
    return report, built
