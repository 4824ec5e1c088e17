import json
import math

import pytest

from conflictbench.conflict import (MetricSample, StatsPolicy, ThresholdPolicy, check_accuracy_bound,
                                    decide_conflict)
from conflictbench.published import DATASETS, replay_verdicts

# metrics marked as the cause of each reported conflict (empty: no conflict)
REPORTED = {
    ("dp", "wm"): {"MNIST": {"wm"}, "FMNIST": {"wm"}, "CIFAR10": {"wm"}},
    ("adv", "wm"): {"MNIST": set(), "FMNIST": {"adv"}, "CIFAR10": {"adv"}},
    ("dp", "rad"): {"MNIST": set(), "FMNIST": set(), "CIFAR10": set()},
    ("adv", "rad"): {"MNIST": {"rad"}, "FMNIST": {"rad"}, "CIFAR10": {"rad"}},
    ("dp", "di"): {"MNIST": set(), "FMNIST": set(), "CIFAR10": set()},
    ("adv", "di"): {"MNIST": set(), "FMNIST": set(), "CIFAR10": set()},
}


def s(metric, *values):
    return MetricSample(metric, list(values))


def test_replay_reproduces_every_reported_cell():
    verdicts = replay_verdicts()
    assert len(verdicts) == 18
    for (base, own), cells in REPORTED.items():
        for ds in DATASETS:
            v = verdicts[(base, own, ds)]
            assert set(v.failing) == cells[ds], (base, own, ds, v.failing)
            assert v.conflict == bool(cells[ds])
            assert v.pair == (own, base)


def test_significant_large_drop_is_a_conflict():
    base = {"acc": [s("acc", 0.90, 0.91, 0.92), s("acc", 0.95, 0.96, 0.94)], "wm": s("wm", 0.97, 0.98, 0.99)}
    comb = {"acc": s("acc", 0.89, 0.90, 0.91), "wm": s("wm", 0.30, 0.35, 0.40)}
    v = decide_conflict(base, comb, pair=("wm", "dp"), dataset="toy")
    assert v.conflict and v.failing == ["wm"]
    d = v.delta("wm")
    assert d.delta == pytest.approx(0.63)
    assert d.t_test.p < 0.05 and not d.tost.equivalent
    assert v.delta("acc").baseline_mean == pytest.approx(0.91)  # the weaker single mechanism
    assert v.bound_check


def test_noisy_drop_is_not_significant():
    base = {"acc": s("acc", 0.9, 0.5)}
    comb = {"acc": s("acc", 0.4, 0.75)}
    v = decide_conflict(base, comb)
    assert not v.conflict
    assert v.delta("acc").t_test.p > 0.05


def test_significant_but_small_drop_is_tolerated():
    base = {"acc": s("acc", 0.950, 0.951, 0.949, 0.950)}
    comb = {"acc": s("acc", 0.900, 0.901, 0.899, 0.900)}
    v = decide_conflict(base, comb)
    assert v.delta("acc").t_test.p < 1e-6
    assert not v.conflict


def test_gain_is_never_a_conflict():
    v = decide_conflict({"acc": s("acc", 0.5, 0.51)}, {"acc": s("acc", 0.9, 0.91)})
    assert not v.conflict


def test_threshold_rules_for_rad_di_and_epsilon():
    base = {"acc": s("acc", 0.9, 0.9), "rad": s("rad", 0.2, 0.21), "di": s("di", 1e-9, 1e-8),
            "epsilon": s("epsilon", 3.0, 3.0)}
    ok = decide_conflict(base, {"acc": s("acc", 0.9, 0.9), "rad": s("rad", 0.05, 0.06),
                                "di": s("di", 1e-5, 1e-4), "epsilon": s("epsilon", 2.9995, 2.9999)})
    assert not ok.conflict
    bad = decide_conflict(base, {"acc": s("acc", 0.9, 0.9), "rad": s("rad", 0.001, 0.002),
                                 "di": s("di", 0.2, 0.4), "epsilon": s("epsilon", 3.5, 3.5)})
    assert bad.failing == ["rad", "di", "epsilon"]
    loose = decide_conflict(base, {"acc": s("acc", 0.9, 0.9), "epsilon": s("epsilon", 3.5, 3.5)},
                            ThresholdPolicy(epsilon_cap_factor=1.2))
    assert not loose.conflict


def test_missing_inputs_are_errors():
    with pytest.raises(ValueError, match="acc"):
        decide_conflict({"acc": s("acc", 1, 1)}, {"wm": s("wm", 1, 1)})
    with pytest.raises(ValueError, match="wm"):
        decide_conflict({"acc": s("acc", 1, 1)}, {"acc": s("acc", 1, 1), "wm": s("wm", 1, 1)})
    with pytest.raises(ValueError):
        MetricSample("loss", [1.0])
    with pytest.raises(ValueError):
        MetricSample("acc", [1.0, math.inf])
    with pytest.raises(ValueError):
        ThresholdPolicy(t_acc=0)
    with pytest.raises(ValueError):
        StatsPolicy(alpha=1.0)


def test_accuracy_bound():
    assert check_accuracy_bound(0.80, 0.85, 0.90)
    assert check_accuracy_bound(0.86, 0.85, 0.90)
    assert not check_accuracy_bound(0.88, 0.85, 0.90)
    with pytest.raises(ValueError):
        check_accuracy_bound(1.2, 0.5, 0.5)


def test_verdict_serialises_infinite_statistics():
    base = {"acc": s("acc", 0.9, 0.9)}
    v = decide_conflict(base, {"acc": s("acc", 0.5, 0.5)})
    assert v.delta("acc").t_test.t == math.inf
    doc = json.loads(v.to_json())
    assert doc["deltas"][0]["t_test"]["t"] == "inf"
    assert doc["conflict"] is True and doc["failing"] == ["acc"]
