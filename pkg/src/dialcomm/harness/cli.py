"""Command-line entry point: ``dialcomm run|summarize|histograms|protocol|acceptance``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from ..autodiff import CheckpointError
from .config import ConfigError, env_overrides, load


def _cmd_run(args) -> int:
    from .runner import run

    cfg, text = load(args.config)
    overrides = env_overrides()

    def progress(row):
        if not args.quiet:
            extra = "".join(f" {k}={row[k]:.4g}" for k in row if k not in ("seed", "iteration"))
            print(f"[{cfg.name}] seed={row['seed']} it={row['iteration']}{extra}", flush=True)

    report = run(cfg, text, overrides, out_dir=args.out, progress=progress)
    print(report)
    if os.path.exists(os.path.join(report, "ABORTED")):
        print(f"run aborted; see {os.path.join(report, 'ABORTED')}", file=sys.stderr)
        return 3
    return 0


def _cmd_summarize(args) -> int:
    from .summarize import SummaryError, format_table, summarize, write_summary_csv

    try:
        rows = summarize(args.dirs)
    except SummaryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    table = format_table(rows)
    print(table, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_summary_csv(os.path.join(args.out, "summary.csv"), rows)
        with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table)
    return 0


def _cmd_histograms(args) -> int:
    from .tools import histograms

    for path in histograms(args.out, draws=args.draws, seed=args.seed, sigma_g=args.sigma_g,
                           temperature=args.temperature):
        print(path)
    return 0


def _cmd_protocol(args) -> int:
    from .tools import protocol_from_checkpoint

    cfg, _ = load(args.env_config)
    try:
        table = protocol_from_checkpoint(args.checkpoint, cfg, episodes=args.episodes, seed=args.seed)
    except (CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        table.write_csv(args.out)
        print(args.out)
    else:
        print("input_number,message_bits_string,pre_channel_freq,post_channel_freq")
        for number, code, pre, post in table.rows():
            print(f"{number},{code},{pre:.6f},{post:.6f}")
    return 0


def _cmd_acceptance(args) -> int:
    from ..acceptance import CRITERIA, run_criteria

    if args.list:
        for c in CRITERIA:
            print(f"{c.number}  {c.tier:6s}  {c.title}")
        return 0
    results = run_criteria(args.only, tier=args.tier, work_dir=args.work_dir)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dialcomm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every seed of a run configuration and write a report")
    r.add_argument("config")
    r.add_argument("--out", help="parent directory for the report (default: the config's out_dir)")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="final-window comparison table across report directories")
    s.add_argument("dirs", nargs="+")
    s.add_argument("--out", help="directory for summary.csv and summary.txt")
    s.set_defaults(func=_cmd_summarize)

    h = sub.add_parser("histograms", help="output histograms of every discretization unit")
    h.add_argument("--out", default="reports/histograms")
    h.add_argument("--draws", type=int, default=10_000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--sigma-g", type=float, default=2.0)
    h.add_argument("--temperature", type=float, default=1.0)
    h.set_defaults(func=_cmd_histograms)

    t = sub.add_parser("protocol", help="protocol table of a matrix-game checkpoint")
    t.add_argument("checkpoint")
    t.add_argument("env_config", help="run configuration describing the environment and networks")
    t.add_argument("--episodes", type=int, help="presentations per input number")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="CSV path (default: print to stdout)")
    t.set_defaults(func=_cmd_protocol)

    a = sub.add_parser("acceptance", help="run the acceptance criteria and print PASS/FAIL lines")
    a.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    a.add_argument("--tier", choices=("quick", "full", "long"), default="quick",
                   help="quick: criteria runnable in minutes; full: adds training runs; long: everything")
    a.add_argument("--work-dir", default="reports/acceptance")
    a.add_argument("--list", action="store_true")
    a.set_defaults(func=_cmd_acceptance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
