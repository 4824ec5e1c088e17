"""Dataset inference: Blind Walk margin embeddings, a logistic distinguisher and the ownership p-value."""
from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from .autodiff import ParamModel, predict
from .data import LabeledSet
from .stats import welch_one_sided

__all__ = ["DiSpec", "MarginEmbedding", "blind_walk_embed", "train_distinguisher", "di_pvalue",
           "embeddings_to_csv", "di_split", "di_verify"]


@dataclass
class DiSpec:
    walk_count: int = 10
    walk_step: float = 0.05
    max_hops: int = 40
    ver_subset_size: int = 100

    def __post_init__(self):
        if self.walk_count < 1:
            raise ValueError("walk_count must be >= 1")
        if self.walk_step <= 0:
            raise ValueError("walk_step must be positive")
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        if self.ver_subset_size < 10:
            raise ValueError("ver_subset_size must be >= 10")


@dataclass
class MarginEmbedding:
    distances: np.ndarray
    record_origin: str = "train"


def _record_seed(x: np.ndarray, seed: int) -> list[int]:
    # directions depend on the record itself, so embeddings do not depend on record order
    return [int(seed) & 0xFFFFFFFF, zlib.crc32(np.ascontiguousarray(x, dtype=np.float64).tobytes())]


def blind_walk_embed(model: ParamModel, records: LabeledSet, spec: DiSpec, seed: int = 0,
                     origin: str = "train") -> list[MarginEmbedding]:
    """Walk each record along ``walk_count`` random sign directions until it is misclassified.

    The distance for a direction is ``hops * walk_step`` at the first hop
    whose prediction differs from the record's label (hop 1 for records the
    model already gets wrong), or ``max_hops * walk_step`` if that never
    happens.
    """
    x, y = records.arrays()
    if len(x) == 0:
        raise ValueError("cannot embed an empty record set")
    n, w = len(x), spec.walk_count
    dirs = np.stack([np.random.default_rng(_record_seed(xi, seed)).choice([-1.0, 1.0], size=(w,) + xi.shape)
                     for xi in x])
    target = np.repeat(y, w)
    base = np.repeat(x, w, axis=0)
    dirs = dirs.reshape((n * w,) + x.shape[1:])
    hops = np.full(n * w, spec.max_hops)
    live = np.arange(n * w)
    for h in range(1, spec.max_hops + 1):
        if len(live) == 0:
            break
        probe = np.clip(base[live] + h * spec.walk_step * dirs[live], 0.0, 1.0)
        flipped = predict(model, probe) != target[live]
        hops[live[flipped]] = h
        live = live[~flipped]
    dist = (hops * spec.walk_step).reshape(n, w)
    return [MarginEmbedding(d, origin) for d in dist]


def _matrix(emb: list[MarginEmbedding]) -> np.ndarray:
    # sorted distances: the walk directions are exchangeable
    return np.sort(np.stack([e.distances for e in emb]), axis=1)


def train_distinguisher(train_emb: list[MarginEmbedding], test_emb: list[MarginEmbedding]) -> Callable:
    """Fit a logistic scorer separating train-origin from test-origin embeddings.

    The returned function maps a list of embeddings to scores that increase
    with train-likeness.  Degenerate inputs give a constant scorer.
    """
    if not train_emb or not test_emb:
        raise ValueError("both embedding lists must be non-empty")
    a, b = _matrix(train_emb), _matrix(test_emb)
    x = np.vstack([a, b])
    y = np.r_[np.ones(len(a)), np.zeros(len(b))]
    if np.ptp(x, axis=0).max() == 0:
        warnings.warn("distinguisher inputs are identical; using a constant scorer", RuntimeWarning)
        return lambda emb: np.full(len(emb), 0.5)
    scaler = StandardScaler().fit(x)
    clf = LogisticRegression(C=1.0, max_iter=1000).fit(scaler.transform(x), y)

    def score(emb: list[MarginEmbedding]) -> np.ndarray:
        return clf.decision_function(scaler.transform(_matrix(emb)))

    return score


def _keys(s: LabeledSet) -> set[bytes]:
    return {np.ascontiguousarray(xi, dtype=np.float64).tobytes() for xi in s.x}


def di_pvalue(suspect: ParamModel, ver_subset: LabeledSet, held_out: LabeledSet, scorer: Callable,
              spec: DiSpec, seed: int = 0) -> float:
    """One-sided Welch p-value that the suspect's D_ver scores exceed its held-out scores."""
    for name, s in (("ver_subset", ver_subset), ("held_out", held_out)):
        if len(s) < 10:
            raise ValueError(f"{name} has {len(s)} records; need at least 10")
    if _keys(ver_subset) & _keys(held_out):
        raise ValueError("ver_subset and held_out overlap")
    sv = scorer(blind_walk_embed(suspect, ver_subset, spec, seed, "train"))
    sh = scorer(blind_walk_embed(suspect, held_out, spec, seed, "test"))
    return welch_one_sided(sv, sh, alternative="greater")


def embeddings_to_csv(emb: list[MarginEmbedding]) -> str:
    """CSV text with columns record, origin, d0..d{k-1}."""
    if not emb:
        return "record,origin\n"
    k = len(emb[0].distances)
    lines = ["record,origin," + ",".join(f"d{i}" for i in range(k))]
    for i, e in enumerate(emb):
        lines.append(f"{i},{e.record_origin}," + ",".join(repr(float(v)) for v in e.distances))
    return "\n".join(lines) + "\n"


def di_split(train: LabeledSet, test: LabeledSet, spec: DiSpec, seed: int = 0):
    """Split owner data into (train_fit, ver_subset, test_fit, held_out).

    ``ver_subset`` and ``held_out`` hold ``ver_subset_size`` records each; the
    remainder fits the distinguisher.
    """
    k = spec.ver_subset_size
    for name, s in (("train", train), ("test", test)):
        if len(s) < k + 10:
            raise ValueError(f"{name} set has {len(s)} records; dataset inference needs at least {k + 10}")
    rng = np.random.default_rng([seed, 0xD1])
    pa, pt = rng.permutation(len(train)), rng.permutation(len(test))
    return train.subset(pa[k:]), train.subset(pa[:k]), test.subset(pt[k:]), test.subset(pt[:k])


def di_verify(victim: ParamModel, suspect: ParamModel, train: LabeledSet, test: LabeledSet, spec: DiSpec,
              seed: int = 0) -> float:
    """phi_DI of ``suspect`` against the owner of ``victim`` trained on ``train``."""
    train_fit, ver, test_fit, held = di_split(train, test, spec, seed)
    scorer = train_distinguisher(blind_walk_embed(victim, train_fit, spec, seed, "train"),
                                 blind_walk_embed(victim, test_fit, spec, seed, "test"))
    return di_pvalue(suspect, ver, held, scorer, spec, seed)
