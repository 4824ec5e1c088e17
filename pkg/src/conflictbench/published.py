"""Reported full-scale results (mean, sd) for MNIST, FMNIST and CIFAR10, and a verdict replay.

Single-mechanism rows come from 5 runs, except where a value was re-reported
alongside the 10-run combinations; combinations come from 10 runs.  Values
reported as "< 1e-30" are stored as 1e-30 with zero spread.  Dataset
inference adds nothing to training, so its accuracy (and robust accuracy
under adversarial training) equals that of the other mechanism alone.
"""
from __future__ import annotations

from .conflict import ConflictVerdict, MetricSample, StatsPolicy, ThresholdPolicy, decide_conflict

__all__ = ["DATASETS", "SINGLE", "COMBINED", "replay_verdicts"]

DATASETS = ("MNIST", "FMNIST", "CIFAR10")
_TINY_P = 1e-30

# (mean, sd, n) per dataset, mechanism and metric
SINGLE = {
    "MNIST": {
        "none": {"acc": (0.99, 0.00, 5)},
        "adv": {"acc": (0.99, 0.00, 5), "adv": (0.95, 0.00, 5)},
        "dp": {"acc": (0.98, 0.00, 10), "epsilon": (3.0, 0.0, 10)},
        "wm": {"acc": (0.99, 0.00, 10), "wm": (0.97, 0.01, 10)},
        "rad": {"acc": (0.98, 0.00, 10), "rad": (0.284, 0.001, 10)},
        "di": {"acc": (0.99, 0.00, 5), "di": (_TINY_P, 0.0, 5)},
    },
    "FMNIST": {
        "none": {"acc": (0.91, 0.00, 5)},
        "adv": {"acc": (0.87, 0.00, 5), "adv": (0.69, 0.00, 5)},
        "dp": {"acc": (0.86, 0.01, 10), "epsilon": (3.0, 0.0, 10)},
        "wm": {"acc": (0.87, 0.02, 10), "wm": (0.99, 0.02, 10)},
        "rad": {"acc": (0.88, 0.01, 10), "rad": (0.191, 0.002, 10)},
        "di": {"acc": (0.91, 0.00, 5), "di": (_TINY_P, 0.0, 5)},
    },
    "CIFAR10": {
        "none": {"acc": (0.92, 0.00, 5)},
        "adv": {"acc": (0.88, 0.00, 5), "adv": (0.82, 0.00, 5)},
        "dp": {"acc": (0.38, 0.00, 10), "epsilon": (3.0, 0.0, 10)},
        "wm": {"acc": (0.82, 0.00, 10), "wm": (0.97, 0.02, 10)},
        "rad": {"acc": (0.85, 0.00, 10), "rad": (0.202, 0.001, 10)},
        "di": {"acc": (0.92, 0.00, 5), "di": (_TINY_P, 0.0, 5)},
    },
}

# (base, ownership) -> dataset -> metric -> (mean, sd, n)
COMBINED = {
    ("dp", "wm"): {
        "MNIST": {"acc": (0.97, 0.00, 10), "wm": (0.36, 0.06, 10)},
        "FMNIST": {"acc": (0.86, 0.00, 10), "wm": (0.30, 0.05, 10)},
        "CIFAR10": {"acc": (0.38, 0.01, 10), "wm": (0.12, 0.01, 10)},
    },
    ("dp", "rad"): {
        "MNIST": {"acc": (0.97, 0.00, 10), "rad": (0.091, 0.01, 10)},
        "FMNIST": {"acc": (0.84, 0.01, 10), "rad": (0.11, 0.01, 10)},
        "CIFAR10": {"acc": (0.35, 0.01, 10), "rad": (0.19, 0.01, 10)},
    },
    ("dp", "di"): {ds: {"di": (_TINY_P, 0.0, 10)} for ds in DATASETS},
    ("adv", "wm"): {
        "MNIST": {"acc": (0.97, 0.02, 10), "wm": (0.99, 0.01, 10), "adv": (0.88, 0.09, 10)},
        "FMNIST": {"acc": (0.80, 0.06, 10), "wm": (0.99, 0.00, 10), "adv": (0.51, 0.11, 10)},
        "CIFAR10": {"acc": (0.78, 0.00, 10), "wm": (0.97, 0.01, 10), "adv": (0.65, 0.01, 10)},
    },
    ("adv", "rad"): {
        "MNIST": {"acc": (0.94, 0.01, 10), "rad": (0.001, 0.001, 10), "adv": (0.95, 0.01, 10)},
        "FMNIST": {"acc": (0.87, 0.02, 10), "rad": (0.000, 0.001, 10), "adv": (0.69, 0.02, 10)},
        "CIFAR10": {"acc": (0.81, 0.01, 10), "rad": (0.003, 0.002, 10), "adv": (0.81, 0.01, 10)},
    },
    ("adv", "di"): {ds: {"di": (_TINY_P, 0.0, 10)} for ds in DATASETS},
}


def _s(metric, triple):
    return MetricSample.from_summary(metric, *triple)


def _combined(base: str, own: str, ds: str) -> dict:
    rows = dict(COMBINED[(base, own)][ds])
    if own == "di":
        # verification does not alter training: the regulariser's own numbers carry over
        for metric, v in SINGLE[ds][base].items():
            if metric != "epsilon":
                rows.setdefault(metric, (v[0], v[1], 10))
    if base == "dp":
        rows.setdefault("epsilon", (3.0, 0.0, 10))
    return rows


def replay_verdicts(policy: ThresholdPolicy | None = None,
                    stats: StatsPolicy | None = None) -> dict[tuple[str, str, str], ConflictVerdict]:
    """Verdicts for every (base, ownership, dataset) cell from the reported means and sds."""
    out = {}
    for (base, own) in COMBINED:
        for ds in DATASETS:
            comb = {m: _s(m, v) for m, v in _combined(base, own, ds).items()}
            single_b, single_o = SINGLE[ds][base], SINGLE[ds][own]
            baseline = {"acc": [_s("acc", single_b["acc"]), _s("acc", single_o["acc"])]}
            for metric in ("adv", "wm", "rad", "di", "epsilon"):
                src = single_b if metric in single_b else single_o
                if metric in src:
                    baseline[metric] = _s(metric, src[metric])
            out[(base, own, ds)] = decide_conflict(baseline, comb, policy, stats, pair=(own, base), dataset=ds)
    return out
