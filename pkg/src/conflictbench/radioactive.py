"""Radioactive data: feature-space carrier marks and the black-box loss-gap score."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamModel, features_and_vjp, per_example_loss
from .data import LabeledSet

__all__ = ["RadSpec", "MarkedPairSet", "craft_marks", "eval_rad_score", "save_pairs", "load_pairs"]


@dataclass
class RadSpec:
    mark_fraction: float = 0.1
    carrier_seed: int = 0
    perturb_budget: float = 0.15
    craft_steps: int = 20
    craft_rate: float | None = None

    def __post_init__(self):
        if not 0 < self.mark_fraction <= 1:
            raise ValueError("mark_fraction must lie in (0, 1]")
        if self.perturb_budget < 0:
            raise ValueError("perturb_budget must be >= 0")

    @property
    def rate(self) -> float:
        return self.craft_rate if self.craft_rate is not None else 2.5 * self.perturb_budget / max(self.craft_steps, 1)


@dataclass
class MarkedPairSet:
    x_clean: np.ndarray
    x_marked: np.ndarray
    y: np.ndarray
    carriers: np.ndarray
    index: np.ndarray
    budget: float
    cos_initial: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cos_final: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.y)

    def permuted(self, perm) -> "MarkedPairSet":
        perm = np.asarray(perm)
        return MarkedPairSet(self.x_clean[perm], self.x_marked[perm], self.y[perm], self.carriers,
                             self.index[perm], self.budget)


def _carriers(dim: int, m: int, seed: int, readout: np.ndarray | None = None) -> np.ndarray:
    """Random unit carriers, one per class.

    With a ``readout`` matrix (classes x dim) the carriers are projected onto
    its null space, so moving features along a carrier leaves the marking
    model's logits unchanged to first order.
    """
    u = np.random.default_rng([seed, 0xCA77]).standard_normal((m, dim))
    if readout is not None and readout.shape[0] < dim:
        q, _ = np.linalg.qr(readout.T)
        u = u - (u @ q) @ q.T
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _cosine(d: np.ndarray, u: np.ndarray) -> np.ndarray:
    nd = np.linalg.norm(d, axis=1)
    return np.where(nd > 0, (d * u).sum(axis=1) / np.maximum(nd, 1e-300), 0.0)


def craft_marks(train: LabeledSet, marking_model: ParamModel, spec: RadSpec) -> tuple[MarkedPairSet, LabeledSet]:
    """Mark a ``mark_fraction`` subset of ``train`` and substitute the marks in place.

    Each marked input is found by signed gradient ascent on the cosine between
    its feature shift ``f(x_phi) - f(x)`` and the class carrier, projected to
    the L-inf ``perturb_budget`` ball and [0, 1].  Carriers are orthogonal to
    the marking model's readout weights, which keeps the marks from moving
    clean-trained models off their decision.
    """
    readout = marking_model.layers[marking_model.feature_index()].params[0]
    x, y = train.arrays()
    rng = np.random.default_rng([spec.carrier_seed, 0x4AD])
    n_mark = int(round(spec.mark_fraction * len(y)))
    idx = np.sort(rng.choice(len(y), size=n_mark, replace=False))
    xc, yc = x[idx], y[idx]
    f0 = features_and_vjp(marking_model, xc, lambda f: np.zeros_like(f))[0]
    carriers = _carriers(f0.shape[1], marking_model.num_classes, spec.carrier_seed, readout)
    u = carriers[yc]
    b = spec.perturb_budget
    if b == 0:
        xm = xc.copy()
        cos0 = cos1 = np.zeros(n_mark)
    else:
        xm = np.clip(xc + rng.uniform(-b / 4, b / 4, size=xc.shape), 0.0, 1.0)

        def g_of(f):
            d = f - f0
            nd = np.linalg.norm(d, axis=1, keepdims=True)
            cos = (d * u).sum(axis=1, keepdims=True) / np.maximum(nd, 1e-12)
            return np.where(nd > 1e-12, (u - cos * d / np.maximum(nd, 1e-12)) / np.maximum(nd, 1e-12), u)

        f_start, _ = features_and_vjp(marking_model, xm, lambda f: np.zeros_like(f))
        cos0 = _cosine(f_start - f0, u)
        for _ in range(spec.craft_steps):
            _, grad = features_and_vjp(marking_model, xm, g_of)
            xm = np.clip(np.clip(xm + spec.rate * np.sign(grad), xc - b, xc + b), 0.0, 1.0)
        f_end, _ = features_and_vjp(marking_model, xm, lambda f: np.zeros_like(f))
        cos1 = _cosine(f_end - f0, u)
    marked_x = x.copy()
    marked_x[idx] = xm
    marked = LabeledSet(marked_x, y.copy(), "train", train.source_name, {"marked_index": idx.tolist()})
    pairs = MarkedPairSet(xc.copy(), xm, yc.copy(), carriers, idx, b, cos0, cos1)
    return pairs, marked


def eval_rad_score(model: ParamModel, pairs: MarkedPairSet) -> float:
    """Mean over pairs of loss(clean) - loss(marked); positive when the model trained on the marks."""
    if len(pairs) == 0:
        raise ValueError("radioactive score of an empty pair set is undefined")
    gap = per_example_loss(model, pairs.x_clean, pairs.y) - per_example_loss(model, pairs.x_marked, pairs.y)
    return float(np.mean(gap))


def save_pairs(path, pairs: MarkedPairSet) -> None:
    np.savez(path, x_clean=pairs.x_clean, x_marked=pairs.x_marked, y=pairs.y, carriers=pairs.carriers,
             index=pairs.index, budget=np.array(pairs.budget))


def load_pairs(path) -> MarkedPairSet:
    with np.load(path, allow_pickle=False) as f:
        return MarkedPairSet(f["x_clean"], f["x_marked"], f["y"], f["carriers"], f["index"], float(f["budget"]))
