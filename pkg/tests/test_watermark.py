import math
from fractions import Fraction

import numpy as np
import pytest

from conflictbench.autodiff import TrainPlan, build_model, eval_accuracy, train_epoch
from conflictbench.data import LabeledSet, build_trigger_set, synth_dataset, synth_patterns
from conflictbench.watermark import (WmSpec, embed_watermark_train, eval_wm_accuracy, fill_batch,
                                     wm_confidence)

MLP = [{"kind": "dense", "out": 32}, {"kind": "relu"}, {"kind": "dense"}]
GRID = [(m, n, e) for m in (2, 10, 43) for n in (2, 25, 100, 1000) for e in ("0", "0.03", "0.1", "0.3")]


def exact_log_v(n, m, e):
    """log V summed term by term in exact rational arithmetic."""
    k = math.floor(Fraction(e) * n)
    v = sum(Fraction(math.comb(n, i) * (m - 1) ** i, m ** n) for i in range(k + 1))
    return math.log(v.numerator) - math.log(v.denominator)


@pytest.mark.parametrize("m, n, e", GRID)
def test_confidence_matches_exact_rational_sum(m, n, e):
    got = wm_confidence(1 - float(e), n, m)
    want = exact_log_v(n, m, e)
    assert abs(got.log_v - want) <= 1e-9 * abs(want)
    assert got.errors_tolerated == math.floor(Fraction(e) * n)


def test_single_term_case():
    c = wm_confidence(1.0, 2, 10)
    assert c.v == pytest.approx(1e-2, rel=1e-12)
    assert c.confidence == pytest.approx(0.99, rel=1e-12)


def test_reported_magnitudes():
    full = wm_confidence(0.97, 100, 10)
    assert full.v == pytest.approx(1.2e-92, rel=0.05)
    assert abs(full.log10_v + 92) <= 1
    # 22 of 25 triggers recovered, read off the trigger-size sweep
    small = wm_confidence(22 / 25, 25, 10)
    assert abs(small.log10_v + 18) <= 1
    assert full.log_v < small.log_v


def test_monotonicity():
    sizes = [wm_confidence(0.9, n, 10).log_v for n in (10, 20, 50, 100, 200)]
    assert all(b < a for a, b in zip(sizes, sizes[1:]))
    errs = [wm_confidence(1 - e, 100, 10).log_v for e in (0.0, 0.05, 0.1, 0.3, 0.6)]
    assert all(b > a for a, b in zip(errs, errs[1:]))
    assert wm_confidence(0.0, 50, 10).v == pytest.approx(1.0)


def test_confidence_errors():
    with pytest.raises(ValueError):
        wm_confidence(0.9, 0, 10)
    with pytest.raises(ValueError):
        wm_confidence(0.9, 10, 1)
    with pytest.raises(ValueError):
        wm_confidence(1.1, 10, 10)


def test_chance_level_of_random_model():
    ood = synth_patterns(400, shape=(6,), seed=0)
    trig = build_trigger_set(ood, 400, 10, seed=1)
    model = build_model(MLP, (6,), 10, seed=3)
    acc = eval_wm_accuracy(model, trig)
    assert acc == eval_accuracy(model, trig)
    # an untrained model ignores the random labels; 5 sigma binomial band
    assert abs(acc - 0.1) <= 5 * math.sqrt(0.09 / 400)
    with pytest.raises(ValueError):
        eval_wm_accuracy(model, LabeledSet(np.zeros((0, 6)), np.zeros(0), "trigger"))


def test_fill_batch_repeats_small_trigger_sets():
    t = LabeledSet(np.eye(3), [0, 1, 2], "trigger")
    f = fill_batch(t, 8)
    assert len(f) == 9 and f.role == "trigger"
    assert fill_batch(t, 2) is t


@pytest.mark.parametrize("mode", ["joint", "separate"])
def test_embedding_memorises_triggers_and_keeps_task(mode):
    train, test = synth_dataset("gaussian-blobs", 300, 3, dim=32, spread=0.05)
    trig = build_trigger_set(synth_patterns(100, shape=(32,), seed=4), 20, 3, seed=2)
    model = build_model(MLP, (32,), 3, seed=0)
    embed_watermark_train(model, train, trig, TrainPlan(epochs=40, lr_max=0.3), mode)
    assert eval_wm_accuracy(model, trig) >= 0.9
    assert eval_accuracy(model, test) >= 0.9


def test_base_epoch_hook_sees_task_data_only_in_separate_mode():
    train, _ = synth_dataset("gaussian-blobs", 64, 2, dim=3)
    trig = build_trigger_set(synth_patterns(20, shape=(3,)), 5, 2)
    sizes = []

    def hook(m, d, p, e):
        sizes.append(len(d))
        train_epoch(m, d, p, e)

    plan = TrainPlan(epochs=2)
    embed_watermark_train(build_model(MLP, (3,), 2), train, trig, plan, "separate", base_epoch=hook)
    assert sizes == [64, 64]
    sizes.clear()
    embed_watermark_train(build_model(MLP, (3,), 2), train, trig, plan, "joint", base_epoch=hook)
    assert sizes == [64 + 35, 64 + 35]


def test_embedding_input_errors():
    train, _ = synth_dataset("gaussian-blobs", 20, 2, dim=3)
    model = build_model(MLP, (3,), 2)
    with pytest.raises(ValueError):
        embed_watermark_train(model, train, train, TrainPlan(epochs=1))
    empty = LabeledSet(np.zeros((0, 3)), np.zeros(0), "trigger")
    with pytest.raises(ValueError):
        embed_watermark_train(model, train, empty, TrainPlan(epochs=1), trigger_size=5)
    with pytest.raises(ValueError):
        embed_watermark_train(model, train, fill_batch(empty, 1), TrainPlan(epochs=1), "mixed")
    with pytest.raises(ValueError):
        WmSpec(trigger_size=-1)
