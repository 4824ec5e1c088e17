"""Render verdicts and run records as markdown, CSV or JSON (byte-deterministic)."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict

import numpy as np

from .conflict import ConflictVerdict, _finite

__all__ = ["render_report", "FORMATS"]

FORMATS = ("markdown", "csv", "json")


def _num(v, digits=3) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v != 0 and abs(v) < 10 ** -digits:
        return f"{v:.2e}"
    return f"{v:.{digits}f}"


def _mean_sd(sample: dict | None) -> str:
    if not sample:
        return "-"
    return f"{_num(sample['mean'])} ± {_num(sample['sd'])} (n={sample['n']})"


def _sample(v: ConflictVerdict, kind: str, metric: str):
    return v.provenance.get("samples", {}).get(kind, {}).get(metric)


def _baseline_kind(v: ConflictVerdict, metric: str) -> str | None:
    if metric == "epsilon":
        return None  # the baseline is the configured budget
    if metric == "adv":
        return "base"
    if metric == "acc":
        # the weaker single mechanism is the reference
        a, b = _sample(v, "base", "acc"), _sample(v, "own", "acc")
        if a and b:
            return "base" if a["mean"] <= b["mean"] else "own"
        return "base"
    return "own"


def _label(v: ConflictVerdict) -> str:
    return "+".join(p.upper() for p in v.pair)


def _sorted(verdicts):
    return sorted(verdicts, key=lambda v: (v.pair, v.dataset, v.provenance.get("config_hash", "")))


def _markdown(records, verdicts) -> str:
    out = ["# Conflict report", ""]
    if verdicts:
        th, st = verdicts[0].thresholds, verdicts[0].stats
        out.append("Thresholds: " + ", ".join(f"{k}={v:g}" for k, v in asdict(th).items())
                   + f"; alpha={st.alpha:g}, alpha*={st.alpha_star:g}")
        out.append("")
    out += ["## Summary", "", "| Pair | Dataset | Verdict | Metrics |", "|---|---|---|---|"]
    for v in _sorted(verdicts):
        if v.incomplete:
            status, cells = "INCOMPLETE", "fewer than 2 surviving seeds"
        else:
            status = "CONFLICT" if v.conflict else "no conflict"
            cells = " ".join(f"{d.metric}:{'ok' if d.passes_threshold else 'FAIL'}" for d in v.deltas)
        out.append(f"| {_label(v)} | {v.dataset} | {status} | {cells} |")
    for v in _sorted(verdicts):
        out += ["", f"## {_label(v)} on {v.dataset}", ""]
        h = v.provenance.get("config_hash")
        if h:
            out += [f"Config hash `{h}`.", ""]
        if v.incomplete:
            out.append("Incomplete: " + ", ".join(v.provenance.get("short_runs", [])))
            continue
        out += ["| Metric | Baseline | Combined | Delta | p (Welch) | p (TOST) | Rule | Status |",
                "|---|---|---|---|---|---|---|---|"]
        for d in v.deltas:
            kind = _baseline_kind(v, d.metric)
            base = _sample(v, kind, d.metric) if kind else None
            comb = _sample(v, "pair", d.metric)
            out.append("| {} | {} | {} | {} | {} | {} | {} | {} |".format(
                d.metric, _mean_sd(base) if base else _num(d.baseline_mean), _mean_sd(comb) if comb
                else _num(d.combined_mean), _num(d.delta), _num(d.t_test.p) if d.t_test else "-",
                _num(d.tost.p) if d.tost else "-", d.rule, "ok" if d.passes_threshold else "**FAIL**"))
        if v.bound_check is not None:
            out += ["", f"Accuracy upper bound (weaker single mechanism + 0.02): "
                        f"{'holds' if v.bound_check else 'violated'}."]
    errors = [r for r in records if r.get("type") == "run" and r.get("status") == "error"]
    if errors:
        out += ["", "## Failed runs", ""]
        for r in sorted(errors, key=lambda r: (r["hash"], r["kind"], r["seed"])):
            out.append(f"- `{r['hash']}` {r['kind']} seed {r['seed']}: {r.get('error', '')}")
    return "\n".join(out) + "\n"


def _sample_rows(records):
    groups: dict = {}
    latest = {}
    for r in records:
        if r.get("type") == "run" and r.get("status") == "ok":
            latest[(r["hash"], r["kind"], r["seed"])] = r
    for (h, kind, seed), r in sorted(latest.items()):
        for metric, val in r["metrics"].items():
            groups.setdefault((h, kind, metric), []).append(val)
    return groups


def _csv(records, verdicts) -> str:
    pairs = {v.provenance.get("config_hash"): v for v in verdicts}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "pair", "dataset", "run", "metric", "n", "mean", "sd", "values"])
    for (h, kind, metric), vals in sorted(_sample_rows(records).items()):
        v = pairs.get(h)
        arr = np.asarray(vals, dtype=float)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        w.writerow([h, _label(v) if v else "", v.dataset if v else "", kind, metric, len(arr),
                    repr(float(arr.mean())), repr(sd), " ".join(repr(float(x)) for x in arr)])
    return buf.getvalue()


def _json(records, verdicts) -> str:
    samples = [{"config_hash": h, "run": k, "metric": m, "values": [float(x) for x in vals]}
               for (h, k, m), vals in sorted(_sample_rows(records).items())]
    doc = {"verdicts": [v.to_dict() for v in _sorted(verdicts)], "samples": samples}
    return json.dumps(_finite(doc), sort_keys=True, indent=2) + "\n"


def render_report(records: list[dict], verdicts: list[ConflictVerdict], format: str = "markdown") -> str:
    """Report text; identical inputs always give identical bytes."""
    if not verdicts:
        raise ValueError("nothing to report: no verdicts")
    if format not in FORMATS:
        raise ValueError(f"unknown report format {format!r}")
    return {"markdown": _markdown, "csv": _csv, "json": _json}[format](records, verdicts)
