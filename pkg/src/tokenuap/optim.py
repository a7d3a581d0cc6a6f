"""SGD with momentum and Adam over lists of numpy arrays, updated in place.

``ascent=True`` flips the sign of the step so the same optimizers can
maximize (used for the perturbation objective).  ``rows`` restricts an
update to a subset of rows of 2-D tensors, leaving the others and their
accumulators untouched.
"""

import numpy as np

from .exceptions import InvalidInputError


class Optimizer:
    def __init__(self, lr):
        if lr <= 0:
            raise InvalidInputError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.t = 0
        self._state = None

    def _init_state(self, tensors):
        raise NotImplementedError

    def _update(self, i, x, g, sel, sign):
        raise NotImplementedError

    def step(self, tensors, grads, ascent=False, rows=None):
        if len(tensors) != len(grads):
            raise InvalidInputError("tensor and gradient lists differ in length")
        for x, g in zip(tensors, grads):
            if x.shape != g.shape:
                raise InvalidInputError(f"gradient shape {g.shape} does not match tensor {x.shape}")
        if self._state is None:
            self._init_state(tensors)
        self.t += 1
        sign = 1.0 if ascent else -1.0
        for i, (x, g) in enumerate(zip(tensors, grads)):
            sel = slice(None) if rows is None or x.ndim < 2 else rows
            self._update(i, x, np.asarray(g, dtype=np.float64), sel, sign)
        return tensors


class SGD(Optimizer):
    """``v <- momentum * v + g``; ``x <- x -/+ lr * v``."""

    def __init__(self, lr=0.01, momentum=0.0):
        super().__init__(lr)
        self.momentum = momentum

    def _init_state(self, tensors):
        self._state = [np.zeros_like(x) for x in tensors]

    def _update(self, i, x, g, sel, sign):
        if self.momentum:
            v = self._state[i]
            v[sel] = self.momentum * v[sel] + g[sel]
            x[sel] += sign * self.lr * v[sel]
        else:
            x[sel] += sign * self.lr * g[sel]


class Adam(Optimizer):
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def _init_state(self, tensors):
        self._state = [(np.zeros_like(x), np.zeros_like(x)) for x in tensors]

    def _update(self, i, x, g, sel, sign):
        m, v = self._state[i]
        m[sel] = self.beta1 * m[sel] + (1 - self.beta1) * g[sel]
        v[sel] = self.beta2 * v[sel] + (1 - self.beta2) * g[sel] ** 2
        m_hat = m[sel] / (1 - self.beta1**self.t)
        v_hat = v[sel] / (1 - self.beta2**self.t)
        x[sel] += sign * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind, lr, momentum=0.9, **kwargs):
    """``kind`` is ``"adam"``, ``"sgd"`` (with ``momentum``) or ``"plain"`` (SGD without momentum)."""
    kind = kind.lower()
    if kind == "adam":
        return Adam(lr, **kwargs)
    if kind == "sgd":
        return SGD(lr, momentum=momentum)
    if kind == "plain":
        return SGD(lr, momentum=0.0)
    raise InvalidInputError(f"unknown optimizer {kind!r}")
