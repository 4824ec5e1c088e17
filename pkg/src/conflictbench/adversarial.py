"""L-infinity PGD, adversarial training and robust accuracy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParamModel, TrainPlan, input_grad, per_example_loss, predict, train_epoch

__all__ = ["AdvSpec", "pgd_attack", "adv_train_epoch", "eval_robust_accuracy"]


@dataclass
class AdvSpec:
    gamma: float = 0.25
    steps: int = 10
    step_size: float | None = None
    random_start: bool = True
    norm: str = "linf"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.norm != "linf":
            raise ValueError("only the linf threat model is supported")

    @property
    def alpha(self) -> float:
        return self.step_size if self.step_size is not None else 2.5 * self.gamma / self.steps


def pgd_attack(model: ParamModel, x, y, spec: AdvSpec, rng=None, seed: int | None = None) -> np.ndarray:
    """Maximise cross-entropy inside the gamma-ball around ``x`` (clipped to [0, 1]).

    Accepts a batch or a single input.  Each example keeps whichever of the
    clean input and the final iterate has the larger loss, so the returned
    loss is never below the clean loss.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == tuple(model.input_shape)
    if single:
        x, y = x[None], np.atleast_1d(y)
    y = np.asarray(y, dtype=int)
    if spec.gamma == 0:
        out = x.copy()
        return out[0] if single else out
    if rng is None:
        rng = np.random.default_rng(seed)
    g = spec.gamma
    if spec.random_start:
        adv = np.clip(x + rng.uniform(-g, g, size=x.shape), 0.0, 1.0)
    else:
        adv = x.copy()
    for _ in range(spec.steps):
        losses, grad = input_grad(model, adv, y)
        if not np.all(np.isfinite(losses)):
            raise FloatingPointError("non-finite loss during PGD")
        adv = adv + spec.alpha * np.sign(grad)
        adv = np.clip(np.clip(adv, x - g, x + g), 0.0, 1.0)
    worse = per_example_loss(model, adv, y) < per_example_loss(model, x, y)
    adv[worse] = x[worse]
    return adv[0] if single else adv


def adv_train_epoch(model: ParamModel, data, plan: TrainPlan, spec: AdvSpec, epoch: int = 0,
                    exempt: np.ndarray | None = None, **kw) -> tuple[ParamModel, float]:
    """``train_epoch`` with every batch replaced by its PGD counterpart.

    Records flagged in the boolean ``exempt`` mask are trained on as-is.
    """
    def transform(m, xb, yb, rng, idx):
        if spec.gamma == 0:
            return xb
        keep = exempt[idx] if exempt is not None else np.zeros(len(idx), dtype=bool)
        if keep.all():
            return xb
        out = xb.copy()
        out[~keep] = pgd_attack(m, xb[~keep], yb[~keep], spec, rng)
        return out

    return train_epoch(model, data, plan, epoch, transform=transform, **kw)


def eval_robust_accuracy(model: ParamModel, data, spec: AdvSpec, seed: int = 0, chunk: int = 512) -> float:
    """Fraction of records classified correctly both clean and under the PGD attack."""
    x, y = data.arrays()
    if len(y) == 0:
        raise ValueError("robust accuracy of an empty set is undefined")
    rng = np.random.default_rng([seed, 0xAD7])
    ok = predict(model, x) == y
    if spec.gamma == 0:
        return float(ok.mean())
    for i in range(0, len(y), chunk):
        sl = slice(i, i + chunk)
        adv = pgd_attack(model, x[sl], y[sl], spec, rng)
        ok[sl] &= predict(model, adv) == y[sl]
    return float(ok.mean())
