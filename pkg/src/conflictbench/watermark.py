"""Backdoor watermarking with an out-of-distribution trigger set."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .autodiff import ParamModel, TrainPlan, eval_accuracy, steps_per_epoch, train_epoch
from .data import LabeledSet

__all__ = ["WmSpec", "WmConfidence", "embed_watermark_train", "eval_wm_accuracy", "wm_confidence", "fill_batch"]


@dataclass
class WmSpec:
    trigger_size: int = 100
    mix_mode: str = "interleave"
    tolerated_error_e: float | None = None

    def __post_init__(self):
        if self.trigger_size < 0:
            raise ValueError("trigger_size must be >= 0")
        if self.tolerated_error_e is not None and not 0 <= self.tolerated_error_e <= 1:
            raise ValueError("tolerated_error_e must lie in [0, 1]")


def fill_batch(trigger: LabeledSet, batch_size: int) -> LabeledSet:
    """Repeat a small trigger set until it fills at least one batch."""
    if len(trigger) == 0 or len(trigger) >= batch_size:
        return trigger
    reps = -(-batch_size // len(trigger))
    return LabeledSet(np.concatenate([trigger.x] * reps), np.concatenate([trigger.y] * reps),
                      "trigger", trigger.source_name)


def embed_watermark_train(model: ParamModel, train: LabeledSet, trigger: LabeledSet, plan: TrainPlan,
                          optimizer_mode: str = "joint", base_epoch: Callable | None = None,
                          trigger_size: int | None = None, trigger_passes: int = 3) -> ParamModel:
    """Train ``model`` for ``plan.epochs`` while embedding ``trigger``.

    ``joint`` trains each epoch on the shuffled union of the task data and the
    triggers with ``base_epoch`` (plain SGD by default).  ``separate`` runs
    ``base_epoch`` on the task data only, then a plain-SGD pass over the
    triggers, every epoch.
    """
    if trigger.role != "trigger":
        raise ValueError(f"trigger set has role {trigger.role!r}")
    if trigger_size and len(trigger) == 0:
        raise ValueError(f"trigger_size={trigger_size} but the trigger set is empty")
    base_epoch = base_epoch or (lambda m, d, p, e: train_epoch(m, d, p, e))
    padded = fill_batch(trigger, plan.batch_size)
    if optimizer_mode == "joint":
        data = train.concat(padded, role="train")
        for epoch in range(plan.epochs):
            base_epoch(model, data, plan, epoch)
    elif optimizer_mode == "separate":
        if trigger_passes < 1:
            raise ValueError("trigger_passes must be >= 1")
        tdata = padded.with_role("train")
        per_pass = steps_per_epoch(len(tdata), plan.batch_size) if len(tdata) else 0
        total = per_pass * trigger_passes * plan.epochs
        for epoch in range(plan.epochs):
            base_epoch(model, train, plan, epoch)
            for r in range(trigger_passes if len(tdata) else 0):
                k = epoch * trigger_passes + r
                train_epoch(model, tdata, plan, k, total_steps=total, step_offset=k * per_pass)
    else:
        raise ValueError(f"unknown optimizer_mode {optimizer_mode!r}")
    return model


def eval_wm_accuracy(model: ParamModel, trigger: LabeledSet) -> float:
    """Accuracy on the trigger set."""
    if len(trigger) == 0:
        raise ValueError("watermark accuracy of an empty trigger set is undefined")
    return eval_accuracy(model, trigger)


class WmConfidence(NamedTuple):
    v: float
    confidence: float
    log_v: float
    errors_tolerated: int

    @property
    def log10_v(self) -> float:
        return self.log_v / math.log(10)


def wm_confidence(phi_wm: float, trigger_size: int, m: int) -> WmConfidence:
    """Chance that a non-watermarked ``m``-class model matches the trigger labels.

    Sums the binomial tail ``C(n,i) ((m-1)/m)^i (1/m)^(n-i)`` for
    ``i <= floor((1 - phi_wm) * n)`` in log space; ``v`` underflows to 0 for
    very large trigger sets but ``log_v`` stays exact.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if not 0 <= phi_wm <= 1:
        raise ValueError("phi_wm must lie in [0, 1]")
    if trigger_size <= 0:
        raise ValueError("confidence is undefined for an empty trigger set")
    n = int(trigger_size)
    # guard against 1 - 0.9 = 0.0999.. truncating a whole error away
    k = min(n, int(math.floor((1.0 - phi_wm) * n + 1e-9)))
    i = np.arange(k + 1)
    log_terms = (gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
                 + i * math.log((m - 1) / m) - (n - i) * math.log(m))
    log_v = float(logsumexp(log_terms))
    v = math.exp(log_v)
    return WmConfidence(v, -math.expm1(log_v), log_v, k)
