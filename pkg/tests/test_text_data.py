from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tokenuap.exceptions import InvalidInputError, ParseError
from tokenuap.text_data import (
    PAD_ID,
    SEP,
    UNK_ID,
    LabeledExample,
    RawExample,
    Vocabulary,
    build_vocab,
    encode_examples,
    load_tsv,
    split_train_eval,
    subsample,
    tokenize,
)


@pytest.mark.parametrize(
    "text, tokens",
    [
        ("The bears sniffed", ["the", "bears", "sniffed"]),
        ("i walk, dana runs.", ["i", "walk", ",", "dana", "runs", "."]),
        ("", []),
        ("  Terry   delighted;", ["terry", "delighted", ";"]),
    ],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


@given(st.text())
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_build_vocab_frequency_order():
    v = build_vocab([["a", "a", "b"]], 1)
    assert v.tokens == ("[pad]", "[unk]", "a", "b")
    assert build_vocab([["a", "b"]], 2).tokens == ("[pad]", "[unk]")
    v = build_vocab([["x"], ["x"], ["y"]], 1)
    assert v.id_of("x") == 2 and v.id_of("y") == 3


def test_build_vocab_lexicographic_ties():
    v = build_vocab([["b", "c", "a"]], 1)
    assert v.tokens[2:] == ("a", "b", "c")


def test_vocab_encode_decode_roundtrip():
    v = build_vocab([["the", "cat", "sat", "the"]])
    for i in range(2, len(v)):
        assert v.encode(v.decode([i])) == [i]
    assert v.encode(["dog"]) == [UNK_ID]
    assert v.id_of("[pad]") == PAD_ID


def test_vocab_file_roundtrip(tmp_path):
    v = build_vocab([["é", "b", "b", SEP]])
    v.save(tmp_path / "vocab.tsv")
    assert (tmp_path / "vocab.tsv").read_text(encoding="utf-8").splitlines()[:2] == ["[pad]\t0", "[unk]\t1"]
    w = Vocabulary.load(tmp_path / "vocab.tsv")
    assert w == v and w.hash() == v.hash()
    assert w.special_ids == {0, 1, w.id_of(SEP)}


def test_vocab_load_rejects_gaps(tmp_path):
    (tmp_path / "v.tsv").write_text("[pad]\t0\n[unk]\t1\nx\t3\n", encoding="utf-8")
    with pytest.raises(ParseError):
        Vocabulary.load(tmp_path / "v.tsv")


def test_example_invariants():
    with pytest.raises(InvalidInputError):
        LabeledExample([], 0)
    with pytest.raises(InvalidInputError):
        LabeledExample([3, PAD_ID, 4], 0)


def test_load_tsv_single_and_pair(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("sentence\tlabel\ngreat movie\t1\nawful, truly.\t0\n", encoding="utf-8")
    data = load_tsv(p, [0], 1, has_header=True)
    assert [r.tokens for r in data.examples] == [("great", "movie"), ("awful", ",", "truly", ".")]
    assert data.label_names == ["1", "0"]
    assert [r.label for r in data.examples] == [0, 1]

    q = tmp_path / "pair.tsv"
    q.write_text("1\tthe cat\ta dog\n", encoding="utf-8")
    pair = load_tsv(q, [1, 2], 0)
    assert pair.examples[0].tokens == ("the", "cat", SEP, "a", "dog")


def test_load_tsv_shared_label_map(tmp_path):
    p = tmp_path / "test.tsv"
    p.write_text("x\tneg\ny\tpos\n", encoding="utf-8")
    data = load_tsv(p, [0], 1, label_names=["pos", "neg"])
    assert [r.label for r in data.examples] == [1, 0]


def test_load_tsv_ragged_row_names_line(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("a\t1\nb\t0\textra\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        load_tsv(p, [0], 1)


def test_load_tsv_missing_file(tmp_path):
    with pytest.raises(OSError, match="missing.tsv"):
        load_tsv(tmp_path / "missing.tsv", [0], 1)


def test_encode_examples_maps_unknown_to_unk():
    v = build_vocab([["a"]])
    [ex] = encode_examples([RawExample(("a", "zzz"), 0)], v)
    assert ex.tokens == (2, UNK_ID)


def _examples(n, labels=None):
    labels = labels or [i % 2 for i in range(n)]
    return [LabeledExample([i + 2], lab) for i, lab in enumerate(labels)]


def test_split_ratio_and_determinism():
    ex = _examples(10)
    train, evals = split_train_eval(ex, 0.1, seed=3)
    assert len(train) == 9 and len(evals) == 1
    assert split_train_eval(ex, 0.1, seed=3) == (train, evals)
    assert not set(train) & set(evals)
    a, b = split_train_eval(_examples(4), 0.5, 0)
    assert len(a) == len(b) == 2


def test_split_errors():
    with pytest.raises(InvalidInputError):
        split_train_eval(_examples(1), 0.1)
    with pytest.raises(InvalidInputError):
        split_train_eval(_examples(5), 1.0)


def test_subsample_identity_and_size():
    ex = _examples(100)
    assert subsample(ex, 1.0, 0) == ex
    assert len(subsample(ex, 0.1, 0)) == 10
    assert subsample(ex, 0.3, 7) == subsample(ex, 0.3, 7)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=80), st.floats(0.01, 1.0), st.integers(0, 1000))
def test_subsample_stratified(labels, ratio, seed):
    ex = _examples(len(labels), labels)
    part = subsample(ex, ratio, seed)
    assert len(part) == int(ratio * len(ex) + 0.5) or ratio == 1.0
    assert len(set(part)) == len(part)
    full, got = Counter(labels), Counter(e.label for e in part)
    for cls, n in full.items():
        assert abs(got[cls] - ratio * n) <= 1


def test_subsample_two_classes_half():
    part = subsample(_examples(100), 0.5, 1)
    counts = Counter(e.label for e in part)
    assert abs(counts[0] - 25) <= 1 and abs(counts[1] - 25) <= 1
