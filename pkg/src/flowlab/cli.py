"""Batch experiment driver.

Usage::

    flowlab run <config.ini> [--seed S] [--threads N] [--out DIR]
    flowlab validate <config.ini>
    flowlab oracle-suite [--out DIR]

Experiments run sequentially; within one experiment the module-level
parallel contracts apply (``--threads`` only changes wall time, never a
byte of output).  Exit codes: 0 all checks passed, 1 experiment failure or
bound violation beyond the documented slack, 2 configuration error.
The default output directory is $FLOWLAB_OUT, falling back to ./flowlab_out.
"""

import argparse
import os
import sys

from .config import parse_config
from .errors import ConfigError, FlowLabError, OracleMismatchError
from .experiments import EXECUTORS
from .oracle_gate import oracle_suite
from .report import ReportRow, rows_all_passed, write_rows_csv, write_summary_json, write_table_csv


def _out_dir(args):
    out = args.out or os.environ.get("FLOWLAB_OUT") or "flowlab_out"
    os.makedirs(out, exist_ok=True)
    return out


def _run(args):
    try:
        configs = parse_config(args.config)
    except ConfigError as exc:
        loc = f" [section={exc.section!r} key={exc.key!r}]" if exc.section or exc.key else ""
        print(f"config error: {exc}{loc}", file=sys.stderr)
        return 2

    out = _out_dir(args)
    summary = {"config": os.path.abspath(args.config), "experiments": {}}
    status = 0
    for cfg in configs:
        seed = args.seed if args.seed is not None else cfg.seed
        try:
            rows, details = EXECUTORS[cfg.kind](cfg, seed, args.threads, out_dir=out)
        except FlowLabError as exc:
            print(f"experiment [{cfg.name}] failed: {exc}", file=sys.stderr)
            return 1
        write_rows_csv(rows, os.path.join(out, f"{cfg.name}.csv"))
        for label, (header, table) in details.items():
            write_table_csv(header, table, os.path.join(out, f"{cfg.name}_{label}.csv"))
        ok = rows_all_passed(rows)
        summary["experiments"][cfg.name] = {
            "kind": cfg.kind,
            "seed": seed,
            "passed": ok,
            "rows": [
                {"quantity": r.quantity, "value": r.value, "stderr": r.stderr,
                 "bound": r.bound, "passed": r.passed}
                for r in rows
            ],
        }
        if not ok:
            status = 1
        for r in rows:
            mark = "" if r.passed is None else ("  PASS" if r.passed else "  FAIL")
            print(f"[{cfg.name}] {r.quantity} = {r.value:.6g}{mark}")
    summary["passed"] = status == 0
    write_summary_json(summary, os.path.join(out, "summary.json"))
    return status


def _validate(args):
    try:
        configs = parse_config(args.config)
    except ConfigError as exc:
        loc = f" [section={exc.section!r} key={exc.key!r}]" if exc.section or exc.key else ""
        print(f"config error: {exc}{loc}", file=sys.stderr)
        return 2
    for cfg in configs:
        print(f"[{cfg.name}] kind={cfg.kind} ok")
    return 0


def _oracle(args):
    out = _out_dir(args)
    try:
        checks = oracle_suite()
    except OracleMismatchError as exc:
        print(f"oracle suite FAILED: {exc}", file=sys.stderr)
        return 1
    rows = [ReportRow("oracle_suite", c.name, c.value, None, c.recomputed, c.passed) for c in checks]
    write_rows_csv(rows, os.path.join(out, "oracle_suite.csv"))
    for c in checks:
        print(f"[oracle] {c.name}: {c.value:.12g} vs {c.recomputed:.12g}  PASS")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="flowlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run all experiments in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override every section seed")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(fn=_run)

    p_val = sub.add_parser("validate", help="check a config file against the schema")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_validate)

    p_orc = sub.add_parser("oracle-suite", help="run the dual-computation oracle gate")
    p_orc.add_argument("--out", default=None)
    p_orc.set_defaults(fn=_oracle)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
