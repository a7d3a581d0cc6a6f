import numpy as np
import pytest

from tokenuap import synthetic
from tokenuap.classifier import ClassifierConfig, ClassifierParams, train_classifier
from tokenuap.text_data import LabeledExample, build_vocab, encode_examples, load_tsv, split_train_eval

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_params(rng, vocab_size=None, dim=None, hidden=None, classes=None, scale=0.8):
    """Random tiny classifier; larger weights than the training init so tanh is not linear."""
    v = vocab_size or int(rng.integers(3, 21))
    d = dim or int(rng.integers(1, 5))
    h = hidden or int(rng.integers(1, 5))
    c = classes or int(rng.integers(2, 4))
    return ClassifierParams(
        rng.normal(0, scale, (v, d)),
        rng.normal(0, scale, (d, h)),
        rng.normal(0, scale, h),
        rng.normal(0, scale, (h, c)),
        rng.normal(0, scale, c),
    )


def random_examples(rng, params, n=None, max_len=6):
    n = n or int(rng.integers(1, 5))
    out = []
    for _ in range(n):
        m = int(rng.integers(1, max_len + 1))
        tokens = rng.integers(1, params.vocab_size, size=m)
        out.append(LabeledExample(tokens, int(rng.integers(0, params.num_classes))))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class Task:
    """A trained desk-scale classifier on the synthetic separable corpus."""

    def __init__(self, tmp_dir, seed=0, n_train=2000, n_test=500):
        tr, te = synthetic.write_task(tmp_dir, n_train, n_test, seed)
        data = load_tsv(tr, [0], 1, True)
        test = load_tsv(te, [0], 1, True, data.label_names)
        self.vocab = build_vocab([r.tokens for r in data.examples])
        examples = encode_examples(data.examples, self.vocab)
        self.test = encode_examples(test.examples, self.vocab)
        self.train, self.eval = split_train_eval(examples, 0.1, seed)
        cfg = ClassifierConfig(dim=16, hidden=16, epochs=20, lr=0.01, seed=seed)
        self.params = train_classifier(self.train, self.eval, 2, len(self.vocab), cfg)
        self.seed = seed
        self.paths = (tr, te)


@pytest.fixture(scope="session")
def task(tmp_path_factory):
    return Task(tmp_path_factory.mktemp("task"))
