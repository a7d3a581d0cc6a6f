import math

import numpy as np
import pytest

from conftest import random_examples, random_params
from oracles import fd_grad_delta, loss_direct
from tokenuap.core_math import lp_norm, project_lp_ball
from tokenuap.exceptions import InvalidInputError
from tokenuap.metrics import accuracy
from tokenuap.perturbation import (
    METHODS,
    PER_TOKEN,
    SINGLE,
    PerturbHistory,
    PerturbTrainConfig,
    Perturbation,
    apply_sweep,
    random_perturbation,
    run_sweep,
    train_perturbation,
)


def tiny_setup(seed=0, n=6):
    rng = np.random.default_rng(seed)
    params = random_params(rng, vocab_size=10, dim=3, hidden=3, classes=2)
    return params, random_examples(rng, params, n=n)


def test_zero_epochs_returns_zero():
    params, exs = tiny_setup()
    pert = train_perturbation(params, exs, exs, PerturbTrainConfig(epochs=0))
    assert pert.kind == SINGLE and np.all(pert.data == 0) and pert.provenance == "zero"


def test_one_plain_normalized_step_is_projected_scaled_gradient():
    params, exs = tiny_setup(n=1)
    cfg = PerturbTrainConfig(eps=0.2, lr=0.05, epochs=1, batch_size=1, optimizer="plain", patience=0)
    got = train_perturbation(params, exs, exs, cfg)
    # gradient at delta = 0 from the finite-difference oracle, not the library
    g = fd_grad_delta(params, exs, np.zeros(3))
    expect = project_lp_ball(0.05 * 0.2 * g / np.linalg.norm(g), 0.2, 2)
    np.testing.assert_allclose(got.data, expect, rtol=1e-8)


def test_step_increases_loss():
    params, exs = tiny_setup(n=1)
    cfg = PerturbTrainConfig(eps=0.2, lr=0.05, epochs=1, batch_size=1, optimizer="plain", patience=0)
    pert = train_perturbation(params, exs, exs, cfg)
    assert loss_direct(params, exs, pert.data) > loss_direct(params, exs)


@pytest.mark.parametrize("kind", [SINGLE, PER_TOKEN])
@pytest.mark.parametrize("p", [2, math.inf])
@pytest.mark.parametrize("opt, normalize", [("adam", True), ("sgd", False), ("plain", True)])
def test_constraint_holds_after_every_step(kind, p, opt, normalize):
    params, exs = tiny_setup(3, n=20)
    cfg = PerturbTrainConfig(eps=0.1, p=p, lr=0.5, epochs=4, batch_size=3, optimizer=opt,
                             normalize_gradients=normalize, patience=0)
    seen = []

    def check(delta):
        rows = delta[None, :] if delta.ndim == 1 else delta
        norms = [lp_norm(r, p) for r in rows]
        assert max(norms) <= 0.1 + 1e-9
        seen.append(max(norms))

    pert = train_perturbation(params, exs, exs, cfg, kind, on_step=check)
    assert len(seen) == 4 * 7
    assert pert.satisfies_constraint()


def test_classifier_not_mutated():
    params, exs = tiny_setup()
    before = params.checksum()
    train_perturbation(params, exs, exs, PerturbTrainConfig(epochs=3, batch_size=2), PER_TOKEN)
    assert params.checksum() == before


def test_training_deterministic():
    params, exs = tiny_setup(n=12)
    cfg = PerturbTrainConfig(epochs=4, batch_size=4, seed=5)
    a = train_perturbation(params, exs, exs, cfg)
    b = train_perturbation(params, exs, exs, cfg)
    assert a.data.tobytes() == b.data.tobytes()


def test_per_token_rows_of_absent_tokens_stay_zero():
    params, _ = tiny_setup()
    from tokenuap.text_data import LabeledExample

    exs = [LabeledExample([2, 3], 0), LabeledExample([3, 4], 1)]
    pert = train_perturbation(params, exs, exs, PerturbTrainConfig(epochs=3, batch_size=1, patience=0), PER_TOKEN)
    untouched = [0, 1, 5, 6, 7, 8, 9]
    assert np.all(pert.data[untouched] == 0)


def test_zero_gradient_step_is_skipped():
    params, exs = tiny_setup()
    params.W2[:] = 0  # loss no longer depends on delta
    hist = PerturbHistory()
    pert = train_perturbation(params, exs, exs, PerturbTrainConfig(epochs=2, batch_size=3, patience=0), history=hist)
    assert hist.skipped_steps == hist.steps == 4
    assert np.all(pert.data == 0)


def test_early_stopping_keeps_lowest_eval_accuracy():
    params, exs = tiny_setup(7, n=30)
    hist = PerturbHistory()
    cfg = PerturbTrainConfig(eps=0.5, epochs=6, batch_size=5, patience=2)
    pert = train_perturbation(params, exs, exs, cfg, history=hist)
    accs = [e["eval_accuracy"] for e in hist.epochs]
    assert accuracy(params, exs, pert) == min(accs)
    assert hist.epochs[hist.best_epoch - 1]["eval_accuracy"] == min(accs)


def test_empty_eval_rejected():
    params, exs = tiny_setup()
    with pytest.raises(InvalidInputError):
        train_perturbation(params, exs, [], PerturbTrainConfig())


@pytest.mark.parametrize("p", [2, math.inf])
def test_random_perturbation_norm_exact(p):
    single = random_perturbation(SINGLE, 7, 0.15, p, seed=1)
    assert lp_norm(single.data, p) == pytest.approx(0.15, rel=1e-12)
    table = random_perturbation(PER_TOKEN, 7, 0.15, p, seed=1, vocab_size=3)
    assert table.data.shape == (3, 7)
    np.testing.assert_allclose(table.norms(), 0.15, rtol=1e-12)
    assert len({r.tobytes() for r in table.data}) == 3


def test_random_perturbation_deterministic():
    a = random_perturbation(SINGLE, 5, 0.1, seed=3)
    b = random_perturbation(SINGLE, 5, 0.1, seed=3)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.data.tobytes() != random_perturbation(SINGLE, 5, 0.1, seed=4).data.tobytes()


def test_config_validation():
    with pytest.raises(InvalidInputError):
        PerturbTrainConfig(eps=0)
    with pytest.raises(InvalidInputError):
        PerturbTrainConfig(lr=-1)
    with pytest.raises(InvalidInputError):
        PerturbTrainConfig(batch_size=0)


def test_perturbation_compatibility():
    params, _ = tiny_setup()
    with pytest.raises(InvalidInputError):
        Perturbation.zeros(SINGLE, 4).check_compatible(params)
    with pytest.raises(InvalidInputError):
        Perturbation.zeros(PER_TOKEN, 3, vocab_size=9).check_compatible(params)


def test_apply_sweep_zero_row_equals_clean():
    params, exs = tiny_setup(n=20)
    report = apply_sweep(params, exs, [("zero", Perturbation.zeros(SINGLE, 3))])
    assert report.accuracy("zero", 0.0) == report.clean_accuracy


def test_run_sweep_layout(task):
    grid = [0.05, 0.1, 0.15, 0.2]
    cfg = PerturbTrainConfig(epochs=2)
    report, built = run_sweep(task.params, task.train[:300], task.eval, task.test[:100], grid, cfg)
    assert set(report.methods()) == {"VR", "SR", "V", "Ours"} == set(METHODS)
    assert report.eps_grid() == grid
    assert len(report.cells) == 16 and len(built) == 16
    for pert in built.values():
        assert pert.satisfies_constraint()
