import numpy as np
import pytest

from conflictbench.adversarial import AdvSpec
from conflictbench.autodiff import TrainPlan
from conflictbench.compose import ConfigError, MechanismSpecs, Task, compose_training
from conflictbench.data import synth_dataset, synth_patterns
from conflictbench.dp import DpSpec, account_privacy
from conflictbench.inference import DiSpec
from conflictbench.radioactive import RadSpec
from conflictbench.watermark import WmSpec

MLP = [{"kind": "dense", "out": 16}, {"kind": "relu"}, {"kind": "dense"}]


@pytest.fixture(scope="module")
def task():
    train, test = synth_dataset("gaussian-blobs", 240, 3, dim=6, spread=0.1, n_test=80)
    return Task(train, test, MLP, 3, synth_patterns(100, shape=(6,)), "blobs")


@pytest.fixture(scope="module")
def specs():
    return MechanismSpecs(dp=DpSpec(target_epsilon=3.0), adv=AdvSpec(gamma=0.05, steps=3), wm=WmSpec(trigger_size=10),
                          rad=RadSpec(mark_fraction=0.1, perturb_budget=0.1, craft_steps=5),
                          di=DiSpec(walk_count=3, max_hops=10, ver_subset_size=20))


PLAN = TrainPlan(epochs=2)

EXPECTED = {
    ("none", "none"): {"acc"},
    ("dp", "none"): {"acc", "epsilon"},
    ("adv", "none"): {"acc", "adv"},
    ("none", "wm"): {"acc", "wm"},
    ("none", "rad"): {"acc", "rad"},
    ("none", "di"): {"acc", "di"},
    ("dp", "wm"): {"acc", "epsilon", "wm"},
    ("adv", "rad"): {"acc", "adv", "rad"},
    ("dp", "di"): {"acc", "epsilon", "di"},
}


@pytest.mark.parametrize("base, own", sorted(EXPECTED))
def test_each_combination_reports_its_metrics(task, specs, base, own):
    res = compose_training(base, own, "joint", specs, PLAN, 0, task)
    assert set(res.metrics) == EXPECTED[(base, own)]
    for k, v in res.metrics.items():
        assert np.isfinite(v), k
    if base == "dp":
        assert res.metrics["epsilon"] <= 3.0
        assert res.privacy.epsilon == res.metrics["epsilon"]
    if base == "adv":
        assert res.metrics["adv"] <= res.metrics["acc"]
    if own == "wm":
        assert res.extras["wm_log10_v"] <= 0


@pytest.mark.parametrize("base, own", [("dp", "wm"), ("adv", "wm"), ("dp", "rad"), ("adv", "rad")])
def test_relaxed_mode_runs_and_keeps_the_privacy_budget(task, specs, base, own):
    res = compose_training(base, own, "relaxed", specs, PLAN, 1, task)
    assert set(res.metrics) == EXPECTED.get((base, own), {"acc", "epsilon" if base == "dp" else "adv", own})
    if base == "dp":
        assert res.metrics["epsilon"] <= 3.0


def test_dp_budget_counts_the_watermark_triggers(task, specs):
    # joint training sees 240 records plus 10 triggers repeated 4 times; the accountant must cover all of them
    res = compose_training("dp", "wm", "joint", specs, PLAN, 0, task)
    trace = res.privacy.accountant_trace
    assert trace["q"] == pytest.approx(32 / (240 + 40))
    assert account_privacy(DpSpec(noise_sigma=trace["sigma"], sample_rate_q=trace["q"]), res.privacy.steps).epsilon \
        == pytest.approx(res.metrics["epsilon"])


def test_runs_are_reproducible(task, specs):
    a = compose_training("adv", "rad", "joint", specs, PLAN, 3, task)
    b = compose_training("adv", "rad", "joint", specs, PLAN, 3, task)
    assert a.metrics == b.metrics
    np.testing.assert_array_equal(a.model.get_flat(), b.model.get_flat())


def test_invalid_combinations(task, specs):
    with pytest.raises(ConfigError, match="relaxed"):
        compose_training("dp", "di", "relaxed", specs, PLAN, 0, task)
    with pytest.raises(ConfigError):
        compose_training("fairness", "wm", "joint", specs, PLAN, 0, task)
    with pytest.raises(ConfigError):
        compose_training("dp", "wm", "sometimes", specs, PLAN, 0, task)
    no_ood = Task(task.train, task.test, MLP, 3, None)
    with pytest.raises(ConfigError, match="out-of-distribution"):
        compose_training("none", "wm", "joint", specs, PLAN, 0, no_ood)
    tight = MechanismSpecs(dp=DpSpec(target_epsilon=1e-4))
    with pytest.raises(ConfigError):
        compose_training("dp", "none", "joint", tight, PLAN, 0, task)
