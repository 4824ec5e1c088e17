"""DP-SGD: per-example clipping, Gaussian noise and a Renyi-DP accountant."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import gammaln, logsumexp

from .autodiff import ParamModel, TrainPlan, lr_at, per_example_grads, sgd_update

__all__ = [
    "DpSpec",
    "PrivacyBudget",
    "CalibrationError",
    "ORDERS",
    "clip_per_example",
    "dp_train_step",
    "dp_train_epoch",
    "rdp_subsampled_gaussian",
    "account_privacy",
    "calibrate_sigma",
    "calibrated",
    "dp_steps_per_epoch",
]

ORDERS = tuple(range(2, 65))
SIGMA_RANGE = (0.3, 100.0)


class CalibrationError(ValueError):
    pass


@dataclass
class DpSpec:
    clip_c: float = 1.0
    noise_sigma: float | None = None
    delta: float = 1e-6
    target_epsilon: float = 3.0
    sample_rate_q: float = 0.01

    def __post_init__(self):
        if self.clip_c <= 0:
            raise ValueError("clip_c must be positive")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.sample_rate_q <= 1:
            raise ValueError("sample_rate_q must lie in (0, 1]")


@dataclass
class PrivacyBudget:
    epsilon: float
    delta: float
    steps: int
    accountant_trace: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def clip_per_example(grads: list[np.ndarray], clip_c: float) -> tuple[list[np.ndarray], np.ndarray]:
    """Scale each example's gradient to L2 norm at most ``clip_c``; returns clipped grads and raw norms."""
    b = grads[0].shape[0]
    norms = np.sqrt(sum((g.reshape(b, -1) ** 2).sum(axis=1) for g in grads))
    scale = np.minimum(1.0, clip_c / np.maximum(norms, 1e-300))
    clipped = [g * scale.reshape((b,) + (1,) * (g.ndim - 1)) for g in grads]
    return clipped, norms


def dp_train_step(model: ParamModel, x, y, spec: DpSpec, lr: float, rng=None,
                  expected_batch: float | None = None, seed: int | None = None) -> ParamModel:
    """One DP-SGD update: clip, sum, add N(0, (sigma*c)^2) per coordinate, divide by expected batch size."""
    if rng is None:
        rng = np.random.default_rng(seed)
    sigma = spec.noise_sigma or 0.0
    shapes = [p.shape for p in model.params]
    if len(x):
        grads = per_example_grads(model, x, y)
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise FloatingPointError("non-finite per-example gradient")
        clipped, _ = clip_per_example(grads, spec.clip_c)
        summed = [g.sum(axis=0) for g in clipped]
    else:
        summed = [np.zeros(s) for s in shapes]
    denom = expected_batch if expected_batch is not None else max(len(x), 1)
    noisy = [(s + sigma * spec.clip_c * rng.standard_normal(s.shape)) / denom for s in summed]
    sgd_update(model, noisy, lr)
    return model


def dp_train_epoch(model: ParamModel, data, plan: TrainPlan, spec: DpSpec, epoch: int = 0,
                   total_steps: int | None = None, step_offset: int | None = None) -> tuple[ParamModel, int]:
    """One epoch of Poisson-subsampled DP-SGD with rate ``plan.batch_size / |data|``.

    Returns the model and the number of noisy steps taken (for accounting).
    """
    x, y = data.arrays()
    n = len(y)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    q = min(1.0, plan.batch_size / n)
    steps = dp_steps_per_epoch(n, plan.batch_size)
    total = total_steps if total_steps is not None else steps * plan.epochs
    offset = step_offset if step_offset is not None else epoch * steps
    rng = np.random.default_rng([plan.seed, epoch, 0xD9])
    for i in range(steps):
        mask = rng.random(n) < q
        dp_train_step(model, x[mask], y[mask], spec, lr_at(plan, offset + i, total), rng, expected_batch=q * n)
    return model, steps


def dp_steps_per_epoch(n: int, batch_size: int) -> int:
    return max(1, int(round(n / min(batch_size, n))))


def rdp_subsampled_gaussian(q: float, sigma: float, orders=ORDERS) -> np.ndarray:
    """Per-step RDP of the Poisson-subsampled Gaussian mechanism at integer orders.

    Uses the exact binomial expansion
    ``A = sum_k C(a,k) (1-q)^(a-k) q^k exp((k^2-k) / (2 sigma^2))`` and
    ``eps(a) = log(A) / (a-1)``.
    """
    out = []
    for a in orders:
        a = int(a)
        if sigma == 0:
            out.append(math.inf)
            continue
        if q == 1.0:
            out.append(a / (2.0 * sigma * sigma))
            continue
        k = np.arange(a + 1)
        log_terms = (gammaln(a + 1) - gammaln(k + 1) - gammaln(a - k + 1)
                     + (a - k) * math.log1p(-q) + k * math.log(q) + (k * k - k) / (2.0 * sigma * sigma))
        out.append(float(logsumexp(log_terms)) / (a - 1))
    return np.asarray(out)


def account_privacy(spec: DpSpec, steps: int, sigma: float | None = None, orders=ORDERS) -> PrivacyBudget:
    """(epsilon, delta) after ``steps`` compositions: min over orders of RDP + log(1/delta)/(a-1)."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    sigma = spec.noise_sigma if sigma is None else sigma
    if sigma is None:
        raise ValueError("noise_sigma is not set")
    if steps == 0:
        return PrivacyBudget(0.0, spec.delta, 0, {"orders": list(orders), "rdp": [0.0] * len(orders)})
    rdp = steps * rdp_subsampled_gaussian(spec.sample_rate_q, sigma, orders)
    eps = rdp + math.log(1.0 / spec.delta) / (np.asarray(orders, dtype=float) - 1.0)
    best = int(np.argmin(eps))
    trace = {"orders": [int(a) for a in orders], "rdp": rdp.tolist(), "best_order": int(orders[best]),
             "sigma": sigma, "q": spec.sample_rate_q}
    return PrivacyBudget(float(max(eps[best], 0.0)), spec.delta, int(steps), trace)


def calibrate_sigma(spec: DpSpec, steps: int, tol: float = 1e-3) -> float:
    """Smallest noise multiplier in [0.3, 100] (to within ``tol``) meeting ``spec.target_epsilon``."""
    if spec.target_epsilon <= 0:
        raise ValueError("target_epsilon must be positive")
    lo, hi = SIGMA_RANGE
    if steps == 0:
        return lo

    def eps(s):
        return account_privacy(spec, steps, sigma=s).epsilon

    if eps(hi) > spec.target_epsilon:
        raise CalibrationError(f"epsilon {spec.target_epsilon} unattainable with sigma <= {hi}")
    if eps(lo) <= spec.target_epsilon:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if eps(mid) <= spec.target_epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def calibrated(spec: DpSpec, n: int, plan: TrainPlan) -> DpSpec:
    """Copy of ``spec`` with sample rate and sigma set for a full ``plan`` over ``n`` records."""
    q = min(1.0, plan.batch_size / n)
    steps = dp_steps_per_epoch(n, plan.batch_size) * plan.epochs
    s = replace(spec, sample_rate_q=q)
    return replace(s, noise_sigma=calibrate_sigma(s, steps))
