import math

import numpy as np
import pytest

from conftest import random_params
from tokenuap.exceptions import FormatError
from tokenuap.metrics import ni_vocab
from tokenuap.perturbation import PER_TOKEN, SINGLE, Perturbation, apply_sweep, random_perturbation
from tokenuap.serialization import (
    attack_report_records,
    load_checkpoint,
    load_perturbation,
    ni_report_records,
    parse_attack_report,
    parse_ni_report,
    read_jsonl,
    save_checkpoint,
    save_perturbation,
    write_jsonl,
)
from tokenuap.text_data import LabeledExample, build_vocab


@pytest.fixture
def vocab():
    return build_vocab([["a", "b", "c"], ["c", "d", "e", "f"], ["g", "h"]])


@pytest.fixture
def params(rng, vocab):
    return random_params(rng, vocab_size=len(vocab), dim=4, hidden=3, classes=2)


def test_checkpoint_round_trip(tmp_path, params, vocab):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, vocab, {"seed": 3})
    loaded, header = load_checkpoint(path, vocab)
    for a, b in zip(params.tensors(), loaded.tensors()):
        assert a.tobytes() == b.tobytes()
    assert header["meta"] == {"seed": 3} and header["vocab_size"] == len(vocab)


def test_checkpoint_refuses_other_vocab(tmp_path, params, vocab):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, vocab)
    other = build_vocab([["x", "y"]])
    with pytest.raises(FormatError, match="vocabulary"):
        load_checkpoint(path, other)


def test_checkpoint_bytes_deterministic(tmp_path, params, vocab):
    save_checkpoint(tmp_path / "a", params, vocab, {"k": 1})
    save_checkpoint(tmp_path / "b", params, vocab, {"k": 1})
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_wrong_magic_and_truncation(tmp_path, params, vocab):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, vocab)
    with pytest.raises(FormatError):
        load_perturbation(path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(path)


@pytest.mark.parametrize("kind", [SINGLE, PER_TOKEN])
@pytest.mark.parametrize("p", [2, math.inf])
def test_perturbation_round_trip(tmp_path, params, vocab, kind, p):
    pert = random_perturbation(kind, 4, 0.1, p, seed=7, vocab_size=len(vocab))
    path = tmp_path / "d.pert"
    save_perturbation(path, pert, {"method": "SR"}, vocab.hash())
    loaded, header = load_perturbation(path, params)
    assert loaded.data.tobytes() == pert.data.tobytes()
    assert (loaded.kind, loaded.eps, loaded.p, loaded.seed) == (pert.kind, pert.eps, pert.p, pert.seed)
    assert header["vocab_hash"] == vocab.hash()


def test_perturbation_shape_checked_on_load(tmp_path, params):
    path = tmp_path / "d.pert"
    save_perturbation(path, Perturbation.zeros(SINGLE, 9))
    with pytest.raises(FormatError):
        load_perturbation(path, params)


def test_attack_report_round_trip(tmp_path, params):
    exs = [LabeledExample([2, 3], 0), LabeledExample([4], 1), LabeledExample([5, 6, 2], 1)]
    report = apply_sweep(params, exs, [("SR", random_perturbation(SINGLE, 4, 0.1, seed=1)),
                                       ("SR", random_perturbation(SINGLE, 4, 0.2, seed=2))])
    path = tmp_path / "r.jsonl"
    write_jsonl(path, attack_report_records(report, {"seed": 0}))
    back = parse_attack_report(read_jsonl(path))
    assert back.clean_accuracy == report.clean_accuracy
    assert back.table() == report.table()


def test_ni_report_round_trip(tmp_path, params, vocab):
    rep = ni_vocab(params.embeddings, random_perturbation(SINGLE, 4, 0.3, seed=1), 2, vocab.special_ids)
    path = tmp_path / "ni.jsonl"
    write_jsonl(path, ni_report_records(rep, vocab, {"seed": 0}))
    back = parse_ni_report(read_jsonl(path))
    assert back.aggregate == rep.aggregate and back.per_token == rep.per_token and back.k == 2


def test_jsonl_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        write_jsonl(tmp_path / "x.jsonl", [{"a": np.nan}])
