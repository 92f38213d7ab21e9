"""Command line entry point: ``biutamp run`` and ``biutamp plot``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .exceptions import BiUtampError
from .harness import PRESETS, emit_plots, load_spec, schema_text
from .harness.runner import aggregate, clamp_counts, run_trials, write_csv


def _parser():
    p = argparse.ArgumentParser(prog="biutamp", description="UTAMP / Bi-UTAMP experiment runner")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo sweep and write a CSV")
    run.add_argument("--config", help="YAML or JSON experiment file")
    run.add_argument("--preset", choices=sorted(PRESETS), help="start from a built-in preset")
    run.add_argument("--seed", type=int, help="master seed (overrides the file)")
    run.add_argument("--out", help="output directory (overrides the file)")
    run.add_argument("--trials", type=int, help="number of trials per sweep point")
    run.add_argument("--threads", type=int, help="worker processes (default: $BIUTAMP_THREADS or 1)")
    run.add_argument("--record-runtime", action="store_true",
                     help="fill the runtime_s column (makes the CSV machine dependent)")
    run.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")

    plot = sub.add_parser("plot", help="draw figures from a result CSV")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--style", default="default")
    return p


def _run(args):
    if args.print_schema:
        print(schema_text())
        return 0
    overrides = {"seed": args.seed, "out": args.out, "trials": args.trials}
    if args.record_runtime:
        overrides["record_runtime"] = True
    spec = load_spec(args.config, args.preset, overrides)
    grouped = run_trials(spec, args.threads)
    rows = aggregate(spec, grouped)
    path = os.path.join(spec.out, f"{spec.experiment}.csv")
    write_csv(rows, path)
    clamps = clamp_counts(grouped)
    print(f"wrote {path} ({len(rows)} rows)")
    if any(clamps.values()):
        print("EP clamp events: " + json.dumps(clamps, sort_keys=True))
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        for path in emit_plots(args.csv, args.out, args.style):
            print(path)
        return 0
    except (BiUtampError, OSError) as err:
        print(f"biutamp: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
