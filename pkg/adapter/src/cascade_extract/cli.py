"""Command-line entry point: run an extraction job."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import run_job
from .job import JobError, load_job


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cascade-extract",
        description="Dump LLM features into the cascadekit record format.",
    )
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    p = sub.add_parser("run", help="run an extraction job")
    p.add_argument("job", help="job spec JSON file")
    p.add_argument("--limit", type=int, help="extract at most this many items")
    args = parser.parse_args(argv)
    if args.command != "run":
        parser.print_help()
        return 1
    try:
        summary = run_job(load_job(args.job), limit=args.limit)
    except JobError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
