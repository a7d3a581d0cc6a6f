"""Tokenization, vocabulary, TSV ingestion and the train/eval split protocol."""

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError, ParseError

PAD = "[pad]"
UNK = "[unk]"
SEP = "[sep]"
PAD_ID = 0
UNK_ID = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text):
    """Lowercase, split on whitespace, and split punctuation into standalone tokens.

    >>> tokenize("i walk, dana runs.")
    ['i', 'walk', ',', 'dana', 'runs', '.']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bidirectional token <-> id map with ``[pad]`` at 0 and ``[unk]`` at 1."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if len(tokens) < 2 or tokens[PAD_ID] != PAD or tokens[UNK_ID] != UNK:
            raise InvalidInputError("vocabulary must start with [pad], [unk]")
        self._tokens = tokens
        self._ids = {}
        for i, tok in enumerate(tokens):
            if tok in self._ids:
                raise InvalidInputError(f"duplicate vocabulary entry {tok!r}")
            self._ids[tok] = i

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    @property
    def tokens(self):
        return tuple(self._tokens)

    def id_of(self, token):
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id):
        return self._tokens[token_id]

    def encode(self, tokens):
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        return [self._tokens[i] for i in ids]

    @property
    def special_ids(self):
        """Ids carrying no lexical content: pad, unk and the pair separator if present."""
        ids = {PAD_ID, UNK_ID}
        if SEP in self._ids:
            ids.add(self._ids[SEP])
        return frozenset(ids)

    def lexical_ids(self):
        special = self.special_ids
        return np.array([i for i in range(len(self)) if i not in special], dtype=np.int64)

    def to_text(self):
        return "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self._tokens))

    def hash(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected 'token<TAB>id'", lineno)
                try:
                    idx = int(parts[1])
                except ValueError:
                    raise ParseError(f"bad id {parts[1]!r}", lineno) from None
                entries.append((idx, parts[0]))
        entries.sort()
        if [i for i, _ in entries] != list(range(len(entries))):
            raise ParseError("vocabulary ids must be dense and start at 0")
        return cls(tok for _, tok in entries)


def build_vocab(corpus, min_count=1):
    """Vocabulary from tokenized sentences.

    Tokens seen at least ``min_count`` times get ids in descending frequency
    order, ties broken lexicographically; everything else encodes as UNK.
    """
    if not corpus:
        raise InvalidInputError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for sent in corpus for tok in sent)
    counts.pop(PAD, None)
    counts.pop(UNK, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD, UNK] + kept)


@dataclass(frozen=True)
class LabeledExample:
    tokens: tuple
    label: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise InvalidInputError("an example needs at least one token")
        if PAD_ID in self.tokens:
            raise InvalidInputError("PAD ids are not allowed inside an example")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class RawExample:
    """A tokenized but not yet id-encoded record from a TSV file."""

    tokens: tuple
    label: int


@dataclass
class TsvData:
    examples: list
    label_names: list

    @property
    def num_classes(self):
        return len(self.label_names)


def load_tsv(path, text_cols, label_col, has_header=False, label_names=None):
    """Read a GLUE-style TSV file into tokenized :class:`RawExample` records.

    Multiple text columns are joined with a ``[sep]`` token.  Labels become
    dense class ids in first-seen order; pass ``label_names`` from an earlier
    call to share the mapping between train and test files.
    """
    path = Path(path)
    labels = list(label_names or [])
    label_ids = {name: i for i, name in enumerate(labels)}
    text_cols = list(text_cols)
    width = max(text_cols + [label_col]) + 1
    examples = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc.strerror}") from exc
    with fh:
        n_fields = None
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if lineno == 1 and has_header:
                n_fields = len(line.split("\t"))
                continue
            if not line.strip():
                continue
            fields = line.split("\t")
            if n_fields is None:
                n_fields = len(fields)
            if len(fields) != n_fields or len(fields) < width:
                raise ParseError(
                    f"{path.name}: expected {max(n_fields, width)} tab-separated fields, got {len(fields)}",
                    lineno,
                )
            tokens = []
            for j, col in enumerate(text_cols):
                if j:
                    tokens.append(SEP)
                tokens.extend(tokenize(fields[col]))
            if not tokens:
                raise ParseError(f"{path.name}: empty text", lineno)
            name = fields[label_col].strip()
            if name not in label_ids:
                label_ids[name] = len(labels)
                labels.append(name)
            examples.append(RawExample(tuple(tokens), label_ids[name]))
    return TsvData(examples, labels)


def encode_examples(raw, vocab):
    return [LabeledExample(vocab.encode(r.tokens), r.label) for r in raw]


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_train_eval(examples, eval_ratio=0.1, seed=0):
    """Deterministic shuffle-split into (train, eval); both keep source order."""
    if not 0 < eval_ratio < 1:
        raise InvalidInputError(f"eval_ratio must lie in (0, 1), got {eval_ratio}")
    n = len(examples)
    if n < 2:
        raise InvalidInputError("need at least 2 examples to split")
    n_eval = min(max(_round_half_up(eval_ratio * n), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    eval_idx = np.sort(perm[:n_eval])
    train_idx = np.sort(perm[n_eval:])
    return [examples[i] for i in train_idx], [examples[i] for i in eval_idx]


def subsample(examples, ratio, seed=0):
    """Stratified sample of ``round(ratio * N)`` examples without replacement.

    Per-class quotas use largest remainders, so every class gets its exact
    proportional share rounded up or down by at most one.
    """
    if not 0 < ratio <= 1:
        raise InvalidInputError(f"ratio must lie in (0, 1], got {ratio}")
    n = len(examples)
    if ratio == 1 or n == 0:
        return list(examples)
    target = _round_half_up(ratio * n)
    labels = np.array([ex.label for ex in examples])
    classes, counts = np.unique(labels, return_counts=True)
    quota = ratio * counts
    take = np.floor(quota).astype(int)
    remainder = quota - take
    short = target - int(take.sum())
    # largest fractional parts first, lower class id on ties
    for i in sorted(range(len(classes)), key=lambda i: (-remainder[i], classes[i]))[:max(short, 0)]:
        take[i] += 1
    rng = np.random.default_rng(seed)
    chosen = []
    for cls, n_take in zip(classes, take):
        idx = np.nonzero(labels == cls)[0]
        chosen.append(idx[rng.permutation(idx.size)[:n_take]])
    keep = np.sort(np.concatenate(chosen))
    return [examples[i] for i in keep]
