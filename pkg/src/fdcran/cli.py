"""Command-line entry points: sweep runner, convergence traces, rate reports."""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .algorithm import GiaOptions, gia_optimize
from .channels import ChannelRealization, draw_realization
from .config import NetworkConfig
from .experiments import (RATE_REPORT_COLUMNS, Scenario, emit,
                          rate_report_row, run_scenario, summarize)
from .rates import DesignVariables, rate_report


def _add_run(sub):
    p = sub.add_parser("run", help="run a Monte-Carlo sweep scenario")
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--realizations", type=int, default=None,
                   help="override realization count")
    p.add_argument("--mode", action="append", default=None,
                   help="override modes (repeatable)")
    p.add_argument("--trace-dir", default=None,
                   help="write per-run convergence traces here")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--summary", default=None, help="also write summary CSV")


def _add_convergence(sub):
    p = sub.add_parser("convergence",
                       help="optimize one realization and dump the trace")
    p.add_argument("--config", default=None, help="network config YAML")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--index", type=int, default=0, help="realization index")
    p.add_argument("--out", required=True, help="trace CSV path")


def _add_rates(sub):
    p = sub.add_parser("rates",
                       help="print the rate report of a saved design point")
    p.add_argument("--config", default=None, help="network config YAML")
    p.add_argument("--vars", required=True, help="design-variable dump (npz)")
    p.add_argument("--realization", default=None,
                   help="channel realization dump (npz)")
    p.add_argument("--seed", type=int, default=None,
                   help="draw the realization from this seed instead")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", default=None, help="also write one CSV row here")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fdcran",
        description="secrecy-rate optimization for full-duplex C-RAN")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_convergence(sub)
    _add_rates(sub)
    args = parser.parse_args(argv)

    if args.command == "run":
        scenario = Scenario.from_file(args.scenario)
        if args.seed is not None:
            scenario.master_seed = args.seed
        if args.realizations is not None:
            scenario.n_realizations = args.realizations
        if args.mode:
            scenario.modes = tuple(args.mode)
            scenario.__post_init__()
        rows = run_scenario(scenario, max_workers=args.workers,
                            trace_dir=args.trace_dir)
        emit(rows, args.out)
        summary = summarize(rows)
        for entry in summary:
            print(f"{entry['mode']:>20} @ {entry['sweep_value']:>7.2f}: "
                  f"WSSR {entry['mean_wssr']:.4f} +- {entry['hw95_wssr']:.4f} "
                  f"(n={entry['n']})")
        if args.summary:
            with open(args.summary, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(summary[0].keys()))
                writer.writeheader()
                writer.writerows(summary)
        return 0

    if args.command == "convergence":
        config = NetworkConfig.from_file(args.config) if args.config \
            else NetworkConfig.defaults()
        real = draw_realization(config, args.seed, args.index)
        v, trace = gia_optimize(config, real, GiaOptions())
        trace.to_csv(args.out)
        last = trace.records[-1]
        print(f"converged={trace.converged} iterations={trace.outer_iterations} "
              f"surrogate={last.surrogate:.6f} wssr={last.exact_wssr:.6f}")
        return 0

    if args.command == "rates":
        config = NetworkConfig.from_file(args.config) if args.config \
            else NetworkConfig.defaults()
        if args.realization:
            real = ChannelRealization.load(args.realization, config)
        elif args.seed is not None:
            real = draw_realization(config, args.seed, args.index)
        else:
            print("rates: provide --realization or --seed", file=sys.stderr)
            return 2
        v = DesignVariables.load(args.vars, config)
        report = rate_report(v, real, config)
        np.set_printoptions(precision=6, suppress=True)
        print(f"WSSR: {report.wssr:.6f} bits/s/Hz")
        print(f"UL rates:      {report.r_ul}")
        print(f"DL rates:      {report.r_dl}")
        print(f"UL secrecy:    {report.sec_ul}")
        print(f"DL secrecy:    {report.sec_dl}")
        print(f"UL leak (RU):  {report.leak_ul_ru}")
        print(f"UL leak (eve): {report.leak_ul_eve}")
        print(f"DL leak (RU):  {report.leak_dl_ru}")
        print(f"DL leak (eve): {report.leak_dl_eve}")
        print(f"fronthaul DL:  {report.f_dl}")
        print(f"fronthaul UL:  {report.f_ul}")
        if args.out:
            with open(args.out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(RATE_REPORT_COLUMNS)
                writer.writerow(rate_report_row(report))
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
