import numpy as np
import pytest

from conflictbench.autodiff import (TrainPlan, backward_grad, build_model, eval_accuracy, forward_eval,
                                    input_grad, loss_and_grads, lr_at, per_example_grads, per_example_loss,
                                    predict, steps_per_epoch, train_epoch)
from conflictbench.data import LabeledSet, synth_dataset

DENSE = [{"kind": "dense", "out": 6}, {"kind": "relu"}, {"kind": "dense"}]
CONV = [{"kind": "conv", "out": 2, "kernel": 3}, {"kind": "relu"}, {"kind": "pool"},
        {"kind": "flatten"}, {"kind": "dense", "out": 5}, {"kind": "relu"}, {"kind": "dense"}]


def mean_loss(model, x, y):
    return float(per_example_loss(model, x, y).mean())


def fd_grads(model, x, y, h=1e-6):
    """Central differences of the mean loss for every parameter entry."""
    out = []
    for p in model.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = mean_loss(model, x, y)
            p[i] = old - h
            down = mean_loss(model, x, y)
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def random_case(rng):
    m = int(rng.integers(2, 5))
    if rng.random() < 0.5:
        shape = (int(rng.integers(2, 6)),)
        topo = [{"kind": "dense", "out": int(rng.integers(2, 7))}, {"kind": "relu"}, {"kind": "dense"}]
    else:
        side = int(rng.choice([4, 6]))
        shape = (int(rng.integers(1, 3)), side, side)
        topo = CONV
    model = build_model(topo, shape, m, seed=int(rng.integers(1 << 30)))
    for p in model.params:
        p += 0.1 * rng.standard_normal(p.shape)  # non-zero biases exercise the bias path
    b = int(rng.integers(1, 5))
    x = rng.uniform(0, 1, (b,) + shape)
    y = rng.integers(0, m, b)
    return model, x, y


def test_backward_grad_matches_finite_differences_on_random_nets():
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(100):
        model, x, y = random_case(rng)
        ana = backward_grad(model, x, y)
        num = fd_grads(model, x, y)
        assert [a.shape for a in ana] == [p.shape for p in model.params]
        worst = max(worst, max(rel_err(a, n) for a, n in zip(ana, num)))
    assert worst < 1e-4


def test_per_example_grads_average_to_batch_gradient():
    rng = np.random.default_rng(5)
    model, x, y = random_case(rng)
    x = np.concatenate([x] * 3)
    y = np.concatenate([y] * 3)
    per = per_example_grads(model, x, y)
    for pe, g in zip(per, backward_grad(model, x, y)):
        assert pe.shape[0] == len(x)
        np.testing.assert_allclose(pe.mean(axis=0), g, atol=1e-12)


def test_per_example_grad_equals_single_example_gradient():
    rng = np.random.default_rng(6)
    model = build_model(CONV, (1, 6, 6), 3, seed=3)
    x = rng.uniform(0, 1, (4, 1, 6, 6))
    y = np.array([0, 1, 2, 1])
    per = per_example_grads(model, x, y)
    for i in range(4):
        single = backward_grad(model, x[i:i + 1], y[i:i + 1])
        for pe, g in zip(per, single):
            np.testing.assert_allclose(pe[i], g, atol=1e-12)


def test_input_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    model = build_model(CONV, (1, 4, 4), 3, seed=1)
    x = rng.uniform(0, 1, (2, 1, 4, 4))
    y = np.array([1, 2])
    losses, gx = input_grad(model, x, y)
    np.testing.assert_allclose(losses, per_example_loss(model, x, y))
    h = 1e-6
    num = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        b = i[0]
        num[i] = (per_example_loss(model, xp, y)[b] - per_example_loss(model, xm, y)[b]) / (2 * h)
    assert rel_err(gx, num) < 1e-5


def test_loss_of_uniform_logits_is_log_m():
    model = build_model(DENSE, (3,), 4, seed=0)
    for p in model.params:
        p[...] = 0
    loss, _ = loss_and_grads(model, np.ones((5, 3)), np.array([0, 1, 2, 3, 0]))
    assert loss == pytest.approx(np.log(4))
    np.testing.assert_allclose(forward_eval(model, np.ones((2, 3))), 0.25)


def test_build_model_validates_shapes_and_labels():
    with pytest.raises(ValueError):
        build_model([{"kind": "conv", "out": 2}, {"kind": "dense"}], (1, 4, 4), 3)
    with pytest.raises(ValueError):
        build_model([{"kind": "bogus"}], (3,), 2)
    with pytest.raises(ValueError):
        build_model(DENSE, (3,), 1)
    model = build_model(DENSE, (3,), 2)
    with pytest.raises(ValueError):
        backward_grad(model, np.zeros((2, 4)), [0, 1])
    with pytest.raises(ValueError):
        backward_grad(model, np.zeros((2, 3)), [0, 2])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_the_example():
    model = build_model(DENSE, (2,), 2)
    x = np.array([[0.0, 0.0], [np.inf, 0.0]])
    with pytest.raises(FloatingPointError, match="index 1"):
        backward_grad(model, x, [0, 1])


def test_flat_parameter_round_trip_and_copy_independence():
    model = build_model(CONV, (1, 4, 4), 3, seed=2)
    flat = model.get_flat()
    other = model.copy()
    other.set_flat(flat + 1)
    np.testing.assert_array_equal(model.get_flat(), flat)
    np.testing.assert_array_equal(other.get_flat(), flat + 1)
    with pytest.raises(ValueError):
        model.set_flat(np.zeros(flat.size + 1))


def test_one_cycle_schedule_shape():
    plan = TrainPlan(epochs=1, lr_initial=0.01, lr_max=0.1)
    lrs = [lr_at(plan, s, 100) for s in range(100)]
    assert lrs[0] == pytest.approx(0.01)
    assert max(lrs) == pytest.approx(0.1, rel=0.03)
    assert lrs[-1] == pytest.approx(0.001)
    assert int(np.argmax(lrs)) in (49, 50)
    const = TrainPlan(epochs=1, schedule_kind="constant")
    assert {lr_at(const, s, 10) for s in range(10)} == {const.lr_initial}
    with pytest.raises(ValueError):
        TrainPlan(lr_initial=0.2, lr_max=0.1)


def test_training_is_deterministic_and_learns_blobs():
    train, test = synth_dataset("gaussian-blobs", 300, 3, seed=0, dim=2)

    def run():
        model = build_model(DENSE, (2,), 3, seed=0)
        plan = TrainPlan(epochs=10, seed=4)
        for e in range(plan.epochs):
            train_epoch(model, train, plan, e)
        return model

    a, b = run(), run()
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())
    assert eval_accuracy(a, test) > 0.95
    assert steps_per_epoch(300, 32) == 10


def test_predict_chunks_agree_and_empty_sets_are_rejected():
    model = build_model(DENSE, (2,), 3, seed=0)
    x = np.random.default_rng(0).uniform(size=(50, 2))
    np.testing.assert_array_equal(predict(model, x, chunk=7), predict(model, x))
    with pytest.raises(ValueError):
        eval_accuracy(model, LabeledSet(np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(ValueError):
        train_epoch(model, LabeledSet(np.zeros((0, 2)), np.zeros(0)), TrainPlan(epochs=1))
