"""Command line: ``run``, ``sweep``, ``di-fp`` and ``report``.

Exit status is 0 when no conflict is detected, 2 when one is (for
``di-fp``: when the independent model is flagged) and 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .compose import ConfigError
from .harness import (WORKERS_ENV, ExperimentConfig, load_records, parse_config, run_di_false_positive,
                      run_matrix, sweep_hyperparams, verdict_from_records)
from .report import FORMATS, render_report

OK, ERROR, CONFLICT = 0, 1, 2


def _parse_values(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        v = float(tok)
        out.append(int(v) if v.is_integer() and "." not in tok and "e" not in tok.lower() else v)
    if not out:
        raise argparse.ArgumentTypeError("no values given")
    return out


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    res = run_matrix(cfg, args.records, args.workers)
    _emit(render_report(res.records, [res.verdict], args.format), args.out)
    if res.verdict.incomplete:
        return ERROR
    return CONFLICT if res.verdict.conflict else OK


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    res = sweep_hyperparams(cfg, args.axis, args.values, args.records, args.workers)
    _emit(res.curve_csv(), args.out)
    if any(v.incomplete for v in res.verdicts):
        return ERROR
    return CONFLICT if any(v.conflict for v in res.verdicts) else OK


def _cmd_di_fp(args) -> int:
    cfg = parse_config(args.config)
    res = run_di_false_positive(cfg, args.seed, args.null_trials)
    _emit(json.dumps(res.to_dict(), sort_keys=True, indent=2) + "\n", args.out)
    return CONFLICT if res.false_positive else OK


def _cmd_report(args) -> int:
    records = load_records(args.records)
    if not records:
        raise ConfigError(f"{args.records}: no records")
    configs = {}
    for r in records:
        if r.get("type") == "config":
            configs[r["hash"]] = ExperimentConfig.from_dict(r["config"])
    verdicts = [verdict_from_records(c, records) for _, c in sorted(configs.items())]
    _emit(render_report(records, verdicts, args.format), args.out)
    if any(v.incomplete for v in verdicts):
        return ERROR
    return CONFLICT if any(v.conflict for v in verdicts) else OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conflictbench",
                                     description="Train under pairs of protection mechanisms and test for conflicts.",
                                     epilog=f"Set {WORKERS_ENV} to run seeds in parallel worker processes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one pair matrix and print its report")
    p.add_argument("config", help="experiment YAML/JSON file")
    p.add_argument("--records", help="append-only JSONL record file (enables resume)")
    p.add_argument("--format", choices=FORMATS, default="markdown")
    p.add_argument("--workers", type=int, default=None, help=f"overrides {WORKERS_ENV}")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="one matrix per hyperparameter value; prints a curve table (CSV)")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=("gamma", "trigger_size", "epsilon", "mark_fraction"))
    p.add_argument("--values", required=True, type=_parse_values, help="comma separated, e.g. 0.05,0.1")
    p.add_argument("--records")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("di-fp", help="dataset-inference false-positive scenario with two disjoint chunks")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--null-trials", type=int, default=0, help="also run this many test-vs-test checks on the victim")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_di_fp)

    p = sub.add_parser("report", help="rebuild verdicts from a record file and render them")
    p.add_argument("records")
    p.add_argument("--format", choices=FORMATS, default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for "conflict"
        return OK if exc.code == 0 else ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    except Exception as exc:  # anything else is still an execution error, not a verdict
        logging.getLogger(__name__).exception("unexpected failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
