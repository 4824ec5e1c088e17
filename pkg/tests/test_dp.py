import math

import numpy as np
import pytest
from scipy import integrate, stats

from conflictbench import dp as dpmod
from conflictbench.autodiff import TrainPlan, build_model
from conflictbench.data import synth_dataset
from conflictbench.dp import (CalibrationError, DpSpec, account_privacy, calibrate_sigma, calibrated,
                              clip_per_example, dp_steps_per_epoch, dp_train_epoch, dp_train_step,
                              rdp_subsampled_gaussian)

MLP = [{"kind": "dense", "out": 8}, {"kind": "relu"}, {"kind": "dense"}]


def gaussian_rdp_epsilon(sigma, steps, delta, orders):
    """Closed form for the full-batch Gaussian mechanism: RDP(a) = a / (2 sigma^2) per step."""
    return min(steps * a / (2 * sigma ** 2) + math.log(1 / delta) / (a - 1) for a in orders)


def subsampled_rdp_by_quadrature(q, sigma, a):
    """log E_{z~N(0,s^2)}[((1-q) + q * N(1,s^2)(z)/N(0,s^2)(z))^a] / (a-1), integrated numerically."""
    def f(z):
        ratio = math.exp((2 * z - 1) / (2 * sigma ** 2))
        return stats.norm.pdf(z, scale=sigma) * ((1 - q) + q * ratio) ** a
    # the integrand's mass sits between 0 and a; 30 sigma either side is exhaustive
    val, _ = integrate.quad(f, -30 * sigma, a + 30 * sigma, points=[0.0, float(a)], epsabs=0, epsrel=1e-12,
                            limit=400)
    return math.log(val) / (a - 1)


def test_clipping_bounds_every_per_example_norm():
    rng = np.random.default_rng(0)
    grads = [rng.standard_normal((6, 3, 2)) * 5, rng.standard_normal((6, 4))]
    grads[0][2] *= 1e-3
    grads[1][2] *= 1e-3
    clipped, norms = clip_per_example(grads, 1.0)
    new = np.sqrt(sum((g.reshape(6, -1) ** 2).sum(axis=1) for g in clipped))
    assert np.all(new <= 1.0 + 1e-12)
    np.testing.assert_allclose(new[norms > 1], 1.0)
    np.testing.assert_allclose(clipped[0][2], grads[0][2])  # small gradients pass unchanged


def test_clipped_norms_hold_on_every_step_of_a_training_run(monkeypatch):
    seen = []
    orig = dpmod.clip_per_example

    def spy(grads, c):
        out, norms = orig(grads, c)
        b = out[0].shape[0]
        seen.append(np.sqrt(sum((g.reshape(b, -1) ** 2).sum(axis=1) for g in out)))
        return out, norms

    monkeypatch.setattr(dpmod, "clip_per_example", spy)
    train, _ = synth_dataset("gaussian-blobs", 200, 3, dim=4)
    model = build_model(MLP, (4,), 3, seed=1)
    spec = DpSpec(clip_c=0.05, noise_sigma=1.0, sample_rate_q=0.16)
    rng = np.random.default_rng(3)
    for step in range(100):
        idx = rng.choice(200, 32, replace=False)
        dp_train_step(model, train.x[idx], train.y[idx], spec, lr=0.5, rng=rng)
    assert len(seen) == 100
    assert max(float(s.max()) for s in seen) <= spec.clip_c + 1e-6


def test_noise_scale_matches_sigma_times_clip():
    model = build_model(MLP, (4,), 3, seed=0)
    before = model.get_flat().copy()
    spec = DpSpec(clip_c=2.0, noise_sigma=1.5)
    dp_train_step(model, np.zeros((0, 4)), np.zeros(0, dtype=int), spec, lr=1.0, expected_batch=10.0, seed=9)
    step = model.get_flat() - before
    assert step.std() == pytest.approx(1.5 * 2.0 / 10.0, rel=0.15)
    assert abs(step.mean()) < 0.1


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_full_batch_accountant_matches_closed_form(sigma):
    spec = DpSpec(noise_sigma=sigma, sample_rate_q=1.0, delta=1e-5)
    for steps in (1, 10, 100):
        got = account_privacy(spec, steps).epsilon
        assert abs(got - gaussian_rdp_epsilon(sigma, steps, 1e-5, dpmod.ORDERS)) < 1e-6


@pytest.mark.parametrize("q, sigma", [(0.01, 1.0), (0.1, 2.0), (0.05, 0.8)])
def test_subsampled_rdp_matches_numerical_integration(q, sigma):
    orders = (2, 3, 5, 8, 12)
    got = rdp_subsampled_gaussian(q, sigma, orders)
    for a, g in zip(orders, got):
        assert g == pytest.approx(subsampled_rdp_by_quadrature(q, sigma, a), rel=1e-6, abs=1e-12)


def test_epsilon_monotone_in_steps_and_sigma():
    spec = DpSpec(noise_sigma=1.1, sample_rate_q=0.02)
    eps = [account_privacy(spec, t).epsilon for t in (0, 1, 10, 100, 1000, 5000)]
    assert eps[0] == 0.0
    assert all(b > a for a, b in zip(eps, eps[1:]))
    by_sigma = [account_privacy(spec, 500, sigma=s).epsilon for s in (0.7, 1.0, 1.5, 3.0)]
    assert all(b < a for a, b in zip(by_sigma, by_sigma[1:]))
    trace = account_privacy(spec, 10).accountant_trace
    assert trace["best_order"] in trace["orders"]


def test_calibration_meets_target_tightly():
    spec = DpSpec(target_epsilon=3.0, sample_rate_q=0.02, delta=1e-6)
    sigma = calibrate_sigma(spec, 2000)
    assert account_privacy(spec, 2000, sigma=sigma).epsilon <= 3.0
    assert account_privacy(spec, 2000, sigma=sigma - 2e-3).epsilon > 3.0
    with pytest.raises(CalibrationError):
        calibrate_sigma(DpSpec(target_epsilon=1e-4, sample_rate_q=1.0), 10_000)
    plan = TrainPlan(epochs=4, batch_size=25)
    c = calibrated(spec, 500, plan)
    assert c.sample_rate_q == pytest.approx(0.05)
    assert account_privacy(c, dp_steps_per_epoch(500, 25) * 4).epsilon <= 3.0


def test_dp_epoch_reports_its_step_count_and_is_seeded():
    train, _ = synth_dataset("gaussian-blobs", 120, 3, dim=4)
    spec = DpSpec(noise_sigma=1.0, sample_rate_q=0.25)
    plan = TrainPlan(epochs=2, batch_size=30, seed=5)
    a, b = build_model(MLP, (4,), 3, seed=0), build_model(MLP, (4,), 3, seed=0)
    _, k = dp_train_epoch(a, train, plan, spec, 0)
    dp_train_epoch(b, train, plan, spec, 0)
    assert k == dp_steps_per_epoch(120, 30) == 4
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())


def test_spec_validation():
    for bad in ({"clip_c": 0}, {"delta": 1.0}, {"sample_rate_q": 0}, {"noise_sigma": -1}):
        with pytest.raises(ValueError):
            DpSpec(**bad)
    with pytest.raises(ValueError):
        account_privacy(DpSpec(), 10)
