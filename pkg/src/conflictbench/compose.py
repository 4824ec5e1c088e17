"""Train one model under a (regulariser, ownership mechanism) pair and measure every applicable metric."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adversarial import AdvSpec, adv_train_epoch, eval_robust_accuracy
from .autodiff import TrainPlan, build_model, eval_accuracy, steps_per_epoch, train_epoch
from .data import LabeledSet, build_trigger_set
from .dp import DpSpec, PrivacyBudget, account_privacy, calibrated, dp_steps_per_epoch, dp_train_epoch
from .inference import DiSpec, di_verify
from .radioactive import RadSpec, craft_marks, eval_rad_score
from .watermark import WmSpec, embed_watermark_train, eval_wm_accuracy, fill_batch, wm_confidence

__all__ = ["ConfigError", "Task", "MechanismSpecs", "ComposeResult", "compose_training", "BASES", "OWNERSHIP"]

BASES = ("none", "dp", "adv")
OWNERSHIP = ("none", "wm", "rad", "di")


class ConfigError(ValueError):
    pass


@dataclass
class Task:
    train: LabeledSet
    test: LabeledSet
    topology: list
    num_classes: int
    ood: LabeledSet | None = None
    name: str = ""

    @property
    def input_shape(self) -> tuple:
        return self.train.input_shape


@dataclass
class MechanismSpecs:
    dp: DpSpec = field(default_factory=DpSpec)
    adv: AdvSpec = field(default_factory=AdvSpec)
    wm: WmSpec = field(default_factory=WmSpec)
    rad: RadSpec = field(default_factory=RadSpec)
    di: DiSpec = field(default_factory=DiSpec)


@dataclass
class ComposeResult:
    model: object
    metrics: dict
    privacy: PrivacyBudget | None = None
    extras: dict = field(default_factory=dict)


def _check(base, ownership, mode, task):
    if base not in BASES:
        raise ConfigError(f"unknown base mechanism {base!r}")
    if ownership not in OWNERSHIP:
        raise ConfigError(f"unknown ownership mechanism {ownership!r}")
    if mode not in ("joint", "relaxed"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "relaxed" and ownership not in ("wm", "rad"):
        raise ConfigError(f"relaxed mode needs an embedded artifact (wm or rad), not {ownership!r}")
    if ownership == "wm" and task.ood is None:
        raise ConfigError("watermarking needs an out-of-distribution trigger source")


def compose_training(base: str, ownership: str, mode: str, specs: MechanismSpecs, plan: TrainPlan, seed: int,
                     task: Task, adv_eval_size: int | None = None) -> ComposeResult:
    """Train under ``base`` (none | dp | adv) with ``ownership`` (none | wm | rad | di).

    ``joint`` applies the base update rule to everything the model sees,
    trigger or marked records included.  ``relaxed`` applies it to the task
    data only: triggers get their own plain-SGD passes, marked records skip
    adversarial replacement (or DP noise, via a separate plain pass).
    """
    _check(base, ownership, mode, task)
    plan = replace(plan, seed=seed)
    m = task.num_classes
    model = build_model(task.topology, task.input_shape, m, seed=seed)
    train = task.train
    extras: dict = {}
    metrics: dict = {}

    trigger = pairs = None
    marked_mask = None
    if ownership == "wm":
        trigger = build_trigger_set(task.ood, specs.wm.trigger_size, m, seed=seed)
    elif ownership == "rad":
        marker = build_model(task.topology, task.input_shape, m, seed=seed + 10_000)
        mplan = replace(plan, seed=seed + 10_000)
        for e in range(plan.epochs):
            train_epoch(marker, train, mplan, e)
        pairs, train = craft_marks(train, marker, replace(specs.rad, carrier_seed=seed))
        marked_mask = np.zeros(len(train), dtype=bool)
        marked_mask[pairs.index] = True
        extras["rad_cos_final"] = float(np.mean(pairs.cos_final)) if len(pairs.cos_final) else 0.0

    # the data the base rule sees decides the DP sample rate and step count
    if ownership == "wm" and mode == "joint":
        dp_n = len(train) + len(fill_batch(trigger, plan.batch_size))
    elif ownership == "rad" and mode == "relaxed" and base == "dp":
        dp_n = int((~marked_mask).sum())
    else:
        dp_n = len(train)

    dp_spec = None
    dp_steps = [0]
    if base == "dp":
        try:
            dp_spec = calibrated(specs.dp, dp_n, plan) if specs.dp.noise_sigma is None else \
                replace(specs.dp, sample_rate_q=min(1.0, plan.batch_size / dp_n))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    exempt = marked_mask if (ownership == "rad" and mode == "relaxed" and base == "adv") else None

    def base_epoch(mod, data, p, e):
        if base == "dp":
            _, k = dp_train_epoch(mod, data, p, dp_spec, e)
            dp_steps[0] += k
        elif base == "adv":
            adv_train_epoch(mod, data, p, specs.adv, e, exempt=exempt if len(data) == len(train) else None)
        else:
            train_epoch(mod, data, p, e)

    if ownership == "wm":
        embed_watermark_train(model, train, trigger, plan, "joint" if mode == "joint" else "separate",
                              base_epoch=base_epoch, trigger_size=specs.wm.trigger_size)
    elif ownership == "rad" and mode == "relaxed" and base == "dp":
        clean_part = train.subset(np.flatnonzero(~marked_mask))
        marked_part = train.subset(np.flatnonzero(marked_mask))
        per_pass = steps_per_epoch(len(marked_part), plan.batch_size)
        for e in range(plan.epochs):
            base_epoch(model, clean_part, plan, e)
            train_epoch(model, marked_part, plan, e, total_steps=per_pass * plan.epochs, step_offset=e * per_pass)
    else:
        for e in range(plan.epochs):
            base_epoch(model, train, plan, e)

    metrics["acc"] = eval_accuracy(model, task.test)
    privacy = None
    if base == "dp":
        expected = dp_steps_per_epoch(dp_n, plan.batch_size) * plan.epochs
        if dp_steps[0] != expected:
            raise RuntimeError(f"DP step count {dp_steps[0]} differs from the calibrated {expected}")
        privacy = account_privacy(dp_spec, dp_steps[0])
        metrics["epsilon"] = privacy.epsilon
        extras["sigma"] = dp_spec.noise_sigma
    if base == "adv":
        test = task.test
        if adv_eval_size is not None and adv_eval_size < len(test):
            test = test.subset(np.arange(adv_eval_size))
        metrics["adv"] = eval_robust_accuracy(model, test, specs.adv, seed=seed)
    if ownership == "wm":
        metrics["wm"] = eval_wm_accuracy(model, trigger)
        extras["wm_log10_v"] = wm_confidence(metrics["wm"], len(trigger), m).log10_v
    elif ownership == "rad":
        metrics["rad"] = eval_rad_score(model, pairs)
    elif ownership == "di":
        metrics["di"] = di_verify(model, model, task.train, task.test, specs.di, seed)
    return ComposeResult(model, metrics, privacy, extras)
