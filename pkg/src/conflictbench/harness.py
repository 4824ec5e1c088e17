"""Declarative experiments: config parsing, seeded run matrices with resume, sweeps and the DI chunk scenario."""
from __future__ import annotations

import copy
import functools
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .adversarial import AdvSpec
from .autodiff import TrainPlan, build_model, train_epoch
from .compose import ConfigError, MechanismSpecs, Task, compose_training
from .conflict import ConflictVerdict, MetricSample, StatsPolicy, ThresholdPolicy, decide_conflict
from .data import load_dataset, load_digits_task, split_chunks, synth_dataset, synth_patterns
from .dp import DpSpec
from .inference import DiSpec, blind_walk_embed, di_pvalue, di_split, train_distinguisher
from .radioactive import RadSpec
from .watermark import WmSpec

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MatrixResult",
    "SweepResult",
    "DiFalsePositive",
    "parse_config",
    "load_records",
    "run_matrix",
    "verdict_from_records",
    "sweep_hyperparams",
    "run_di_false_positive",
    "REFERENCE_CNN",
    "WORKERS_ENV",
]

log = logging.getLogger(__name__)

WORKERS_ENV = "CONFLICTBENCH_WORKERS"

REFERENCE_CNN = [
    {"kind": "conv", "out": 8, "kernel": 3}, {"kind": "relu"}, {"kind": "pool"},
    {"kind": "conv", "out": 16, "kernel": 3}, {"kind": "relu"}, {"kind": "pool"},
    {"kind": "flatten"}, {"kind": "dense", "out": 64}, {"kind": "relu"}, {"kind": "dense"},
]
REFERENCE_MLP = [{"kind": "dense", "out": 64}, {"kind": "relu"}, {"kind": "dense"}]

_REQUIRED = object()

# every accepted key with its default; _REQUIRED marks keys without one
SCHEMA = {
    "dataset": {
        "kind": "digits", "path": None, "format": "idx", "n": 1500, "n_test": None, "classes": 10, "dim": 2,
        "spread": 0.05, "background": 0, "test_spread": None, "seed": 0, "train_limit": None,
    },
    "ood": {"kind": "patterns", "n": 1000, "seed": 7},
    "model": {"topology": None},
    "train": {"epochs": 20, "batch_size": 32, "lr_initial": 0.01, "lr_max": 0.1, "schedule_kind": "one-cycle"},
    "pair": {"base": _REQUIRED, "ownership": _REQUIRED},
    "mode": "joint",
    "mechanisms": {
        "dp": {"target_epsilon": 3.0, "delta": 1e-6, "clip_c": 1.0, "noise_sigma": None},
        "adv": {"gamma": 0.25, "steps": 10, "step_size": None, "random_start": True},
        "wm": {"trigger_size": 100},
        "rad": {"mark_fraction": 0.1, "perturb_budget": 0.15, "craft_steps": 20},
        "di": {"walk_count": 10, "walk_step": 0.05, "max_hops": 40, "ver_subset_size": 100},
    },
    "repeats": {"baseline": 5, "pair": 10},
    "thresholds": {"t_acc": 0.10, "t_wm": 0.30, "t_adv": 0.10, "di_p_max": 1e-3, "rad_min": 1e-2,
                   "epsilon_cap_factor": 1.0},
    "stats": {"alpha": 0.05, "alpha_star": 0.05},
    "eval": {"adv_eval_size": None},
    "output": None,
}
# fields that do not change what a run computes
_UNHASHED = ("repeats", "output", "thresholds", "stats")
_DATASET_KINDS = ("digits", "blobs", "spirals", "idx", "csv")


def _merge(schema, given, path):
    if not isinstance(schema, dict):
        return given
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(given).__name__}")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"{_join(path, unknown[0])}: unknown key")
    out = {}
    for key, default in schema.items():
        p = _join(path, key)
        if key in given:
            out[key] = _merge(default, given[key], p) if isinstance(default, dict) else given[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{p}: required key missing")
        else:
            out[key] = copy.deepcopy(default) if not isinstance(default, dict) else _merge(default, {}, p)
    return out


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _num(d, path, key, lo=None, hi=None, integer=False, optional=False, open_lo=False):
    v = d[key]
    p = _join(path, key)
    if v is None:
        if optional:
            return
        raise ConfigError(f"{p}: value required")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{p}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{p}: expected an integer, got {v!r}")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"{p}: must be {'>' if open_lo else '>='} {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(f"{p}: must be <= {hi}, got {v!r}")


def _choice(d, path, key, options):
    if d[key] not in options:
        raise ConfigError(f"{_join(path, key)}: expected one of {', '.join(options)}, got {d[key]!r}")


def _validate(c: dict) -> None:
    ds = c["dataset"]
    _choice(ds, "dataset", "kind", _DATASET_KINDS)
    if ds["kind"] in ("idx", "csv") and not ds["path"]:
        raise ConfigError("dataset.path: required for file datasets")
    if ds["kind"] in ("idx", "csv"):
        ds["format"] = ds["kind"]
    _num(ds, "dataset", "n", lo=2, integer=True)
    _num(ds, "dataset", "classes", lo=2, integer=True)
    _num(ds, "dataset", "dim", lo=1, integer=True)
    _num(ds, "dataset", "spread", lo=0, open_lo=True)
    _num(ds, "dataset", "background", lo=0, integer=True)
    _num(ds, "dataset", "test_spread", lo=0, open_lo=True, optional=True)
    _num(ds, "dataset", "n_test", lo=1, integer=True, optional=True)
    _num(ds, "dataset", "train_limit", lo=2, integer=True, optional=True)
    _num(ds, "dataset", "seed", integer=True)
    _choice(c["ood"], "ood", "kind", ("patterns",))
    _num(c["ood"], "ood", "n", lo=1, integer=True)
    topo = c["model"]["topology"]
    if topo is not None and (not isinstance(topo, list) or not all(isinstance(t, dict) and "kind" in t for t in topo)):
        raise ConfigError("model.topology: expected a list of layer mappings with a 'kind'")
    tr = c["train"]
    _num(tr, "train", "epochs", lo=1, integer=True)
    _num(tr, "train", "batch_size", lo=1, integer=True)
    _num(tr, "train", "lr_initial", lo=0, open_lo=True)
    _num(tr, "train", "lr_max", lo=0, open_lo=True)
    _choice(tr, "train", "schedule_kind", ("one-cycle", "constant"))
    _choice(c["pair"], "pair", "base", ("dp", "adv"))
    _choice(c["pair"], "pair", "ownership", ("wm", "rad", "di"))
    _choice(c, "", "mode", ("joint", "relaxed"))
    if c["mode"] == "relaxed" and c["pair"]["ownership"] == "di":
        raise ConfigError("mode: relaxed training is undefined for dataset inference (nothing is embedded)")
    mech = c["mechanisms"]
    _num(mech["dp"], "mechanisms.dp", "target_epsilon", lo=0, open_lo=True)
    _num(mech["dp"], "mechanisms.dp", "delta", lo=0, hi=1, open_lo=True)
    _num(mech["dp"], "mechanisms.dp", "clip_c", lo=0, open_lo=True)
    _num(mech["dp"], "mechanisms.dp", "noise_sigma", lo=0, optional=True)
    _num(mech["adv"], "mechanisms.adv", "gamma", lo=0)
    _num(mech["adv"], "mechanisms.adv", "steps", lo=1, integer=True)
    _num(mech["adv"], "mechanisms.adv", "step_size", lo=0, open_lo=True, optional=True)
    _num(mech["wm"], "mechanisms.wm", "trigger_size", lo=0, integer=True)
    _num(mech["rad"], "mechanisms.rad", "mark_fraction", lo=0, hi=1, open_lo=True)
    _num(mech["rad"], "mechanisms.rad", "perturb_budget", lo=0)
    _num(mech["rad"], "mechanisms.rad", "craft_steps", lo=1, integer=True)
    _num(mech["di"], "mechanisms.di", "walk_count", lo=1, integer=True)
    _num(mech["di"], "mechanisms.di", "walk_step", lo=0, open_lo=True)
    _num(mech["di"], "mechanisms.di", "max_hops", lo=1, integer=True)
    _num(mech["di"], "mechanisms.di", "ver_subset_size", lo=10, integer=True)
    for key in ("baseline", "pair"):
        _num(c["repeats"], "repeats", key, lo=2, integer=True)
    for key in c["thresholds"]:
        _num(c["thresholds"], "thresholds", key, lo=0, open_lo=True)
    for key in c["stats"]:
        _num(c["stats"], "stats", key, lo=0, hi=1, open_lo=True)
    _num(c["eval"], "eval", "adv_eval_size", lo=1, integer=True, optional=True)


@dataclass
class ExperimentConfig:
    """A validated experiment; ``data`` is the normalized mapping with every default filled in."""
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if "repeats" in (raw or {}) and isinstance(raw["repeats"], int) and not isinstance(raw["repeats"], bool):
            raw = dict(raw, repeats={"baseline": raw["repeats"], "pair": raw["repeats"]})
        data = _merge(SCHEMA, raw, "")
        _validate(data)
        return cls(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    @property
    def hash(self) -> str:
        run = {k: v for k, v in self.data.items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(run, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]

    @property
    def pair(self) -> tuple[str, str]:
        return self.data["pair"]["base"], self.data["pair"]["ownership"]

    @property
    def dataset_name(self) -> str:
        ds = self.data["dataset"]
        return Path(ds["path"]).name if ds["kind"] in ("idx", "csv") else ds["kind"]

    def plan(self) -> TrainPlan:
        return TrainPlan(**self.data["train"])

    def specs(self) -> MechanismSpecs:
        m = self.data["mechanisms"]
        return MechanismSpecs(dp=DpSpec(**m["dp"]), adv=AdvSpec(**m["adv"]), wm=WmSpec(**m["wm"]),
                              rad=RadSpec(**m["rad"]), di=DiSpec(**m["di"]))

    def thresholds(self) -> ThresholdPolicy:
        return ThresholdPolicy(**self.data["thresholds"])

    def stats(self) -> StatsPolicy:
        return StatsPolicy(**self.data["stats"])

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        d = self.to_dict()
        node = d
        *head, last = dotted.split(".")
        for k in head:
            node = node[k]
        node[last] = value
        return ExperimentConfig.from_dict(d)


def parse_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment file, apply defaults and validate it."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(raw)


# ---- tasks -----------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _task_cached(key: str) -> Task:
    spec = json.loads(key)
    ds, ood, topo = spec["dataset"], spec["ood"], spec["topology"]
    kind = ds["kind"]
    if kind == "digits":
        train, test = load_digits_task(ds["n_test"] or 497)
    elif kind in ("blobs", "spirals"):
        train, test = synth_dataset("gaussian-blobs" if kind == "blobs" else "two-spirals", ds["n"], ds["classes"],
                                    seed=ds["seed"], n_test=ds["n_test"], dim=ds["dim"], spread=ds["spread"],
                                    background=ds["background"], test_spread=ds["test_spread"])
    else:
        train, test = load_dataset(ds["path"], ds["format"])
    if ds["train_limit"] and ds["train_limit"] < len(train):
        train = train.subset(np.arange(ds["train_limit"]))
    m = int(max(train.y.max(), test.y.max())) + 1
    if topo is None:
        topo = REFERENCE_CNN if len(train.input_shape) == 3 else REFERENCE_MLP
    patterns = synth_patterns(ood["n"], shape=train.input_shape, seed=ood["seed"])
    return Task(train, test, topo, m, patterns, kind)


def _task(config: ExperimentConfig) -> Task:
    d = config.data
    return _task_cached(json.dumps({"dataset": d["dataset"], "ood": d["ood"], "topology": d["model"]["topology"]},
                                   sort_keys=True))


# ---- runs -------------------------------------------------------------------

def _run_spec(config: ExperimentConfig, kind: str) -> tuple[str, str, str]:
    base, own = config.pair
    return {"base": (base, "none", "joint"), "own": ("none", own, "joint"),
            "pair": (base, own, config.data["mode"])}[kind]


def _jobs(config: ExperimentConfig) -> list[tuple[str, int]]:
    r = config.data["repeats"]
    return ([("base", s) for s in range(r["baseline"])] + [("own", s) for s in range(r["baseline"])]
            + [("pair", s) for s in range(r["pair"])])


def _execute(config_data: dict, kind: str, seed: int) -> dict:
    config = ExperimentConfig(config_data)
    rec = {"type": "run", "hash": config.hash, "kind": kind, "seed": seed, "artifacts": []}
    t0 = time.perf_counter()
    try:
        base, own, mode = _run_spec(config, kind)
        res = compose_training(base, own, mode, config.specs(), config.plan(), seed, _task(config),
                               adv_eval_size=config.data["eval"]["adv_eval_size"])
        rec.update(status="ok", metrics={k: float(v) for k, v in res.metrics.items()},
                   privacy=res.privacy.accountant_trace if res.privacy else None,
                   extras={k: float(v) for k, v in res.extras.items()})
    except Exception as exc:  # one failed run must not sink the matrix
        log.warning("run %s/%s seed %d failed: %s", config.hash, kind, seed, exc)
        rec.update(status="error", error=f"{type(exc).__name__}: {exc}", metrics={})
    rec["wall_time"] = time.perf_counter() - t0
    return rec


def load_records(path) -> list[dict]:
    """All JSON lines of a record file; a torn final line (from a crash) is ignored."""
    p = Path(path)
    if not p.exists():
        return []
    out = []
    lines = p.read_text().splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            if i == len(lines) - 1:
                log.warning("ignoring a truncated last record in %s", p)
                continue
            raise
    return out


class _Writer:
    """Single append-only writer; each record is flushed as its own line."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._drop_torn_tail()

    def _drop_torn_tail(self) -> None:
        # a crash mid-write leaves a partial last line; appending after it would corrupt the next record
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        if raw and not raw.endswith(b"\n"):
            with self.path.open("r+b") as f:
                f.truncate(raw.rfind(b"\n") + 1)

    def write(self, rec: dict) -> None:
        if self.path:
            with self.path.open("a") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
                f.flush()


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class MatrixResult:
    config: ExperimentConfig
    records: list[dict]
    verdict: ConflictVerdict
    executed: int = 0


def verdict_from_records(config: ExperimentConfig, records: list[dict]) -> ConflictVerdict:
    """Rebuild the verdict from persisted runs of ``config`` (latest successful record per seed)."""
    latest: dict = {}
    for r in records:
        if r.get("type") == "run" and r.get("hash") == config.hash and r.get("status") == "ok":
            latest[(r["kind"], r["seed"])] = r
    wanted = set(_jobs(config))
    by_kind: dict = {"base": {}, "own": {}, "pair": {}}
    for (kind, seed), r in sorted(latest.items()):
        if (kind, seed) not in wanted:
            continue
        for metric, v in r["metrics"].items():
            by_kind[kind].setdefault(metric, []).append(v)
    ctx = {"pair": list(config.pair), "dataset": config.dataset_name}
    samples = {k: {m: MetricSample(m, v, context=dict(ctx, run=k)) for m, v in d.items()} for k, d in by_kind.items()}
    prov = {"config_hash": config.hash, "config": config.to_dict(),
            "samples": {k: {m: s.to_dict() for m, s in sorted(d.items())} for k, d in samples.items()}}
    base, own = config.pair
    pair = (own, base)
    short = [k for k in by_kind if not by_kind[k] or min(len(v) for v in by_kind[k].values()) < 2]
    if short:
        return ConflictVerdict(pair, config.dataset_name, [], False, None, config.thresholds(), config.stats(),
                               incomplete=True, provenance=dict(prov, short_runs=short))
    baseline = {"acc": [samples["base"]["acc"], samples["own"]["acc"]]}
    if "adv" in samples["base"]:
        baseline["adv"] = samples["base"]["adv"]
    if "epsilon" in samples["pair"]:
        # the cap is the configured budget, not what the DP-only runs happened to spend
        dp = config.data["mechanisms"]["dp"]
        if dp.get("noise_sigma") is None and dp.get("target_epsilon") is not None:
            n = samples["pair"]["epsilon"].n
            baseline["epsilon"] = MetricSample("epsilon", [float(dp["target_epsilon"])] * n,
                                               context=dict(ctx, run="target"))
        elif "epsilon" in samples["base"]:
            baseline["epsilon"] = samples["base"]["epsilon"]
    for metric in ("wm", "rad", "di"):
        if metric in samples["own"]:
            baseline[metric] = samples["own"][metric]
    return decide_conflict(baseline, samples["pair"], config.thresholds(), config.stats(), pair=pair,
                           dataset=config.dataset_name, provenance=prov)


def run_matrix(config: ExperimentConfig, records_path=None, workers: int | None = None) -> MatrixResult:
    """Run both single-mechanism baselines and the combination over seeds, then decide the conflict.

    Runs already present (by config hash, run kind and seed) in
    ``records_path`` are not repeated.
    """
    records_path = records_path or config.data["output"]
    existing = load_records(records_path) if records_path else []
    done = {(r["kind"], r["seed"]) for r in existing
            if r.get("type") == "run" and r.get("hash") == config.hash and r.get("status") == "ok"}
    writer = _Writer(records_path)
    if not any(r.get("type") == "config" and r.get("hash") == config.hash for r in existing):
        rec = {"type": "config", "hash": config.hash, "config": config.to_dict()}
        writer.write(rec)
        existing.append(rec)
    todo = [j for j in _jobs(config) if j not in done]
    new = []
    n_workers = _workers(workers)
    if n_workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_execute, config.data, kind, seed) for kind, seed in todo]
            for fut in futures:
                rec = fut.result()
                writer.write(rec)
                new.append(rec)
    else:
        for kind, seed in todo:
            rec = _execute(config.data, kind, seed)
            writer.write(rec)
            new.append(rec)
    records = existing + new
    verdict = verdict_from_records(config, records)
    return MatrixResult(config, records, verdict, executed=len(todo))


# ---- sweeps -----------------------------------------------------------------

_AXES = {
    "gamma": ("mechanisms.adv.gamma", "base", "adv"),
    "epsilon": ("mechanisms.dp.target_epsilon", "base", "dp"),
    "trigger_size": ("mechanisms.wm.trigger_size", "ownership", "wm"),
    "mark_fraction": ("mechanisms.rad.mark_fraction", "ownership", "rad"),
}


@dataclass
class SweepResult:
    axis: str
    values: list
    verdicts: list[ConflictVerdict]
    curve: list[dict] = field(default_factory=list)

    def curve_csv(self) -> str:
        if not self.curve:
            return ""
        cols = list(self.curve[0])
        rows = [",".join(cols)] + [",".join(_fmt(r[c]) for c in cols) for r in self.curve]
        return "\n".join(rows) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_hyperparams(config: ExperimentConfig, axis: str, values, records_path=None,
                      workers: int | None = None) -> SweepResult:
    """One run matrix per value of ``axis``; returns verdicts and a curve table.

    Curve columns are the swept value, the config hash, the verdict flags and
    the combined runs' mean metrics (``pair_acc``, ``pair_wm`` and so on).
    """
    if axis not in _AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(_AXES)}")
    key, role, needed = _AXES[axis]
    if config.data["pair"][role] != needed:
        raise ConfigError(f"axis {axis!r} needs {role} = {needed!r}, config has {config.data['pair'][role]!r}")
    verdicts, curve = [], []
    for v in values:
        cfg = config.with_value(key, v)
        res = run_matrix(cfg, records_path, workers)
        verdicts.append(res.verdict)
        row = {axis: v, "config_hash": cfg.hash, "conflict": res.verdict.conflict,
               "incomplete": res.verdict.incomplete}
        pair_runs = [r for r in res.records if r.get("type") == "run" and r.get("hash") == cfg.hash
                     and r.get("kind") == "pair" and r.get("status") == "ok"]
        for metric in ("acc", "adv", "epsilon", "wm", "rad", "di"):
            vals = [r["metrics"][metric] for r in pair_runs if metric in r["metrics"]]
            if vals:
                row[f"pair_{metric}"] = float(np.mean(vals))
        logv = [r["extras"]["wm_log10_v"] for r in pair_runs if "wm_log10_v" in r.get("extras", {})]
        if logv:
            row["pair_wm_log10_v"] = float(np.mean(logv))
        curve.append(row)
    return SweepResult(axis, list(values), verdicts, curve)


# ---- dataset-inference false positive -----------------------------------------

@dataclass
class DiFalsePositive:
    victim: float
    independent: float
    test_model: float
    threshold: float = 1e-3
    null: list[float] = field(default_factory=list)

    @property
    def false_positive(self) -> bool:
        return self.independent < self.threshold

    def to_dict(self) -> dict:
        return dict(asdict(self), false_positive=self.false_positive)


def run_di_false_positive(config: ExperimentConfig, seed: int = 0, null_trials: int = 0) -> DiFalsePositive:
    """Split the training data into halves A and B; the victim trains on A.

    Reports phi_DI (suspect vs the victim's A records) for the victim, for an
    independent model trained on B, and for a model trained on the test set.
    With ``null_trials`` > 0 it also runs that many test-vs-test checks on the
    victim: both sides come from the test pool, so small p-values there are
    false alarms.
    """
    task = _task(config)
    plan, spec = config.plan(), config.specs().di
    split = split_chunks(task.train, seed)

    def fit(data, s):
        m = build_model(task.topology, task.input_shape, task.num_classes, seed=s)
        p = TrainPlan(**dict(config.data["train"], seed=s))
        for e in range(plan.epochs):
            train_epoch(m, data, p, e)
        return m

    victim = fit(split.chunk_a, seed)
    independent = fit(split.chunk_b, seed + 1)
    test_model = fit(task.test, seed + 2)
    train_fit, ver, test_fit, held = di_split(split.chunk_a, task.test, spec, seed)
    scorer = train_distinguisher(blind_walk_embed(victim, train_fit, spec, seed, "train"),
                                 blind_walk_embed(victim, test_fit, spec, seed, "test"))
    p = [di_pvalue(m, ver, held, scorer, spec, seed) for m in (victim, independent, test_model)]
    null = []
    half = min(spec.ver_subset_size, len(test_fit) // 2)
    for t in range(null_trials):
        perm = np.random.default_rng([seed, t, 0x0D]).permutation(len(test_fit))
        null.append(di_pvalue(victim, test_fit.subset(perm[:half]), test_fit.subset(perm[half:2 * half]), scorer,
                              spec, seed))
    return DiFalsePositive(*p, threshold=config.thresholds().di_p_max, null=null)
