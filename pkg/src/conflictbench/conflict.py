"""Effectiveness guards, threshold policies and the pairwise conflict decision."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .stats import Summary, TostResult, WelchResult, tost_equivalence, welch_t

__all__ = [
    "METRICS",
    "DROP_METRICS",
    "MetricSample",
    "ThresholdPolicy",
    "StatsPolicy",
    "DeltaReport",
    "ConflictVerdict",
    "decide_conflict",
    "check_accuracy_bound",
]

METRICS = ("acc", "wm", "adv", "rad", "di", "epsilon")
DROP_METRICS = ("acc", "wm", "adv")
_DIRECTION = {"acc": "higher-better", "wm": "higher-better", "adv": "higher-better",
              "rad": "threshold-compare", "di": "threshold-compare", "epsilon": "lower-better"}


@dataclass
class MetricSample:
    metric_name: str
    values: np.ndarray | None = None
    direction: str = ""
    context: dict = field(default_factory=dict)
    summary: Summary | None = None

    def __post_init__(self):
        if self.metric_name not in METRICS:
            raise ValueError(f"unknown metric {self.metric_name!r}")
        self.direction = self.direction or _DIRECTION[self.metric_name]
        if self.summary is None:
            self.values = np.asarray(self.values if self.values is not None else [], dtype=np.float64)
            if not np.all(np.isfinite(self.values)):
                raise ValueError(f"{self.metric_name}: values must be finite")

    @classmethod
    def from_summary(cls, metric_name: str, mean: float, sd: float, n: int, **kw) -> "MetricSample":
        """A sample known only by its reported mean and standard deviation."""
        return cls(metric_name, None, summary=Summary(mean, sd, n), **kw)

    @property
    def n(self) -> int:
        return self.summary.n if self.summary is not None else len(self.values)

    @property
    def mean(self) -> float:
        return float(self.summary.mean) if self.summary is not None else float(np.mean(self.values))

    @property
    def sd(self) -> float:
        if self.summary is not None:
            return float(self.summary.sd)
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    def to_dict(self) -> dict:
        d = {"metric": self.metric_name, "direction": self.direction, "n": self.n,
             "mean": self.mean, "sd": self.sd, "context": self.context}
        if self.summary is None:
            d["values"] = [float(v) for v in self.values]
        return d


@dataclass(frozen=True)
class ThresholdPolicy:
    t_acc: float = 0.10
    t_wm: float = 0.30
    t_adv: float = 0.10
    di_p_max: float = 1e-3
    rad_min: float = 1e-2
    epsilon_cap_factor: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"threshold {k} must be positive")

    def drop_bound(self, metric: str) -> float:
        return {"acc": self.t_acc, "wm": self.t_wm, "adv": self.t_adv}[metric]


@dataclass(frozen=True)
class StatsPolicy:
    alpha: float = 0.05
    alpha_star: float = 0.05

    def __post_init__(self):
        for k in ("alpha", "alpha_star"):
            if not 0 < getattr(self, k) < 1:
                raise ValueError(f"{k} must lie in (0, 1)")


@dataclass
class DeltaReport:
    metric: str
    baseline_mean: float
    combined_mean: float
    delta: float
    passes_threshold: bool
    rule: str
    t_test: WelchResult | None = None
    tost: TostResult | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("metric", "baseline_mean", "combined_mean", "delta",
                                            "passes_threshold", "rule")}
        d["t_test"] = asdict(self.t_test) if self.t_test else None
        d["tost"] = dict(asdict(self.tost), p=self.tost.p) if self.tost else None
        return d


@dataclass
class ConflictVerdict:
    pair: tuple[str, str]
    dataset: str
    deltas: list[DeltaReport]
    conflict: bool
    bound_check: bool | None
    thresholds: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    stats: StatsPolicy = field(default_factory=StatsPolicy)
    incomplete: bool = False
    provenance: dict = field(default_factory=dict)

    @property
    def failing(self) -> list[str]:
        return [d.metric for d in self.deltas if not d.passes_threshold]

    def delta(self, metric: str) -> DeltaReport:
        for d in self.deltas:
            if d.metric == metric:
                return d
        raise KeyError(metric)

    def to_dict(self) -> dict:
        return {"pair": list(self.pair), "dataset": self.dataset, "conflict": self.conflict,
                "incomplete": self.incomplete, "bound_check": self.bound_check, "failing": self.failing,
                "deltas": [d.to_dict() for d in self.deltas], "thresholds": asdict(self.thresholds),
                "stats": asdict(self.stats), "provenance": self.provenance}

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), sort_keys=True)


def _finite(obj):
    # JSON has no inf; keep the sign readable
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def check_accuracy_bound(acc_combined: float, acc_m1: float, acc_m2: float, slack: float = 0.02) -> bool:
    """Combined accuracy should not exceed the weaker single mechanism (plus sampling slack)."""
    for v in (acc_combined, acc_m1, acc_m2):
        if not 0 <= v <= 1:
            raise ValueError("accuracies must lie in [0, 1]")
    return bool(acc_combined <= min(acc_m1, acc_m2) + slack)


def _pick_baseline(sample):
    if isinstance(sample, MetricSample):
        return sample
    sample = list(sample)
    if not sample:
        raise ValueError("empty baseline list")
    # a combination is judged against the weaker single mechanism
    return min(sample, key=lambda s: s.mean)


def _drop_report(metric, base: MetricSample, comb: MetricSample, bound: float, stats: StatsPolicy) -> DeltaReport:
    t = welch_t(base, comb)
    tost = tost_equivalence(base, comb, bound, stats.alpha_star)
    drop = base.mean - comb.mean
    fails = t.p < stats.alpha and not tost.equivalent and drop > bound
    return DeltaReport(metric, base.mean, comb.mean, abs(drop), not bool(fails), f"drop <= {bound:g} or not significant",
                       t, tost)


def decide_conflict(baseline_samples: dict, combined_samples: dict, policy: ThresholdPolicy | None = None,
                    stats: StatsPolicy | None = None, pair: tuple[str, str] = ("", ""), dataset: str = "",
                    provenance: dict | None = None) -> ConflictVerdict:
    """Judge one mechanism pair.

    ``combined_samples`` maps metric names to the combination's samples and
    decides which metrics are judged (``acc`` is mandatory).  Drop-style
    metrics (acc, wm, adv) need a baseline sample, or a list of single-
    mechanism samples of which the weakest is used.  A drop-style metric
    fails when the two-sided Welch test rejects equality, TOST cannot show
    equivalence within the threshold, and the mean drop exceeds it.  ``rad``
    fails below ``rad_min``, ``di`` above ``di_p_max`` (mean p-value) and
    ``epsilon`` above ``epsilon_cap_factor`` times the baseline budget.
    """
    policy = policy or ThresholdPolicy()
    stats = stats or StatsPolicy()
    if "acc" not in combined_samples:
        raise ValueError("missing metric 'acc' in combined samples")
    deltas = []
    for metric in METRICS:
        if metric not in combined_samples:
            continue
        comb = combined_samples[metric]
        needs_base = metric in DROP_METRICS or metric == "epsilon"
        if needs_base and metric not in baseline_samples:
            raise ValueError(f"missing metric {metric!r} in baseline samples")
        if metric in DROP_METRICS:
            deltas.append(_drop_report(metric, _pick_baseline(baseline_samples[metric]), comb,
                                       policy.drop_bound(metric), stats))
        elif metric == "rad":
            base = baseline_samples.get("rad")
            bm = _pick_baseline(base).mean if base is not None else math.nan
            deltas.append(DeltaReport("rad", bm, comb.mean, abs(bm - comb.mean) if base is not None else math.nan,
                                      comb.mean >= policy.rad_min, f"mean >= {policy.rad_min:g}"))
        elif metric == "di":
            base = baseline_samples.get("di")
            bm = _pick_baseline(base).mean if base is not None else math.nan
            deltas.append(DeltaReport("di", bm, comb.mean, abs(bm - comb.mean) if base is not None else math.nan,
                                      comb.mean <= policy.di_p_max, f"mean p <= {policy.di_p_max:g}"))
        else:
            base = _pick_baseline(baseline_samples["epsilon"])
            cap = policy.epsilon_cap_factor * base.mean
            deltas.append(DeltaReport("epsilon", base.mean, comb.mean, abs(base.mean - comb.mean),
                                      comb.mean <= cap * (1 + 1e-9), f"epsilon <= {cap:g}"))
    bound = None
    accs = baseline_samples.get("acc")
    if accs is not None and not isinstance(accs, MetricSample) and len(list(accs)) == 2:
        a1, a2 = list(accs)
        bound = check_accuracy_bound(combined_samples["acc"].mean, a1.mean, a2.mean)
    conflict = any(not d.passes_threshold for d in deltas)
    return ConflictVerdict(tuple(pair), dataset, deltas, conflict, bound, policy, stats,
                           provenance=provenance or {})
