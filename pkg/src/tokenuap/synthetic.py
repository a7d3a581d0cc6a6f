"""Synthetic two-class corpora for tests, demos and the acceptance suite.

Each sentence mixes a few class-cue words with neutral filler, so the label
is a deterministic function of the text (the task is separable) while most
of every sentence carries no signal.

Run ``python -m tokenuap.synthetic OUT_DIR`` to write ``train.tsv`` and
``test.tsv`` in GLUE layout (``sentence<TAB>label`` with a header row).
"""

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "gr", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


def pseudo_words(n, rng):
    """``n`` distinct pronounceable lowercase words."""
    words = []
    seen = set()
    while len(words) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(int(rng.integers(2, 4))))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


@dataclass
class CorpusSpec:
    n_cue: int = 30
    n_neutral: int = 200
    min_len: int = 6
    max_len: int = 14
    min_cues: int = 1
    max_cues: int = 2
    punct_prob: float = 0.5


def make_corpus(n, seed=0, spec=None, lexicon_seed=None):
    """``n`` ``(sentence, label)`` pairs, labels balanced 0/1.

    The word lists depend on ``lexicon_seed`` (default ``seed``) only, so
    train and test corpora drawn with different ``seed`` but the same
    ``lexicon_seed`` share one vocabulary.
    """
    spec = spec or CorpusSpec()
    lex_rng = np.random.default_rng(seed if lexicon_seed is None else lexicon_seed)
    words = pseudo_words(2 * spec.n_cue + spec.n_neutral, lex_rng)
    cues = [words[: spec.n_cue], words[spec.n_cue: 2 * spec.n_cue]]
    neutral = words[2 * spec.n_cue:]
    rng = np.random.default_rng(seed + 7919)
    rows = []
    for i in range(n):
        label = i % 2
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        n_cues = int(rng.integers(spec.min_cues, spec.max_cues + 1))
        toks = [neutral[j] for j in rng.integers(0, len(neutral), size=length - n_cues)]
        for c in rng.integers(0, spec.n_cue, size=n_cues):
            toks.insert(int(rng.integers(0, len(toks) + 1)), cues[label][c])
        text = " ".join(toks)
        if rng.random() < spec.punct_prob:
            text += " ."
        rows.append((text, label))
    order = rng.permutation(n)
    return [rows[i] for i in order]


def write_tsv(path, rows, header=("sentence", "label")):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("\t".join(header) + "\n")
        for text, label in rows:
            fh.write(f"{text}\t{label}\n")


def write_task(out_dir, n_train=2000, n_test=500, seed=0, spec=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tsv(out / "train.tsv", make_corpus(n_train, seed, spec, lexicon_seed=seed))
    write_tsv(out / "test.tsv", make_corpus(n_test, seed + 1, spec, lexicon_seed=seed))
    return out / "train.tsv", out / "test.tsv"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    train, test = write_task(args.out_dir, args.train, args.test, args.seed)
    print(train)
    print(test)


if __name__ == "__main__":
    main()
