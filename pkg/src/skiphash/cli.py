"""Command line front end: workload benchmarks and history re-checking.

Every bench flag can also come from the environment with a ``SKIPHASH_``
prefix (flags beat environment, environment beats defaults), e.g.::

    SKIPHASH_THREADS=8 skiphash bench --duration-s 3 --csv out.csv
    skiphash verify --histories runs/
"""
from __future__ import annotations

import argparse
import os
import sys

from . import bench
from .map import RANGE_MODES, TWO_PATH
from .skiplist import DEFAULT_MAX_LEVEL
from .verify.history import read_history
from .verify.linearize import BudgetExceeded, check_linearizable

ENV_PREFIX = "SKIPHASH_"


def _env(name, cast, fallback):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return fallback
    if cast is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _parse_mix(text):
    parts = text.split(":")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("mix must be l:i:r:q percentages")
    try:
        mix = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("mix parts must be integers")
    return mix


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skiphash",
        description="Concurrent ordered map benchmark and verification harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a workload and report throughput")
    b.add_argument("--threads", type=int, default=_env("threads", int, 4))
    b.add_argument("--duration-s", type=float,
                   default=_env("duration-s", float, bench.DEFAULT_DURATION))
    b.add_argument("--ops", type=int, default=_env("ops", int, None),
                   help="fixed operation count instead of timed run")
    b.add_argument("--universe", type=int,
                   default=_env("universe", int, bench.DEFAULT_UNIVERSE))
    b.add_argument("--prefill", type=int,
                   default=_env("prefill", int, bench.DEFAULT_PREFILL))
    b.add_argument("--mix", type=_parse_mix,
                   default=_env("mix", _parse_mix, (80, 5, 5, 10)),
                   help="lookup:insert:remove:range percentages, sum 100")
    b.add_argument("--range-len", type=int, default=_env("range-len", int, 100))
    b.add_argument("--mode", choices=RANGE_MODES,
                   default=_env("mode", str, TWO_PATH))
    b.add_argument("--fast-path-tries", type=int,
                   default=_env("fast-path-tries", int, 3))
    b.add_argument("--seed", type=int, default=_env("seed", int, 1))
    b.add_argument("--buckets", type=int, default=_env("buckets", int, 0),
                   help="hash buckets; 0 sizes to prefill at 70%% utilization")
    b.add_argument("--max-level", type=int,
                   default=_env("max-level", int, DEFAULT_MAX_LEVEL))
    b.add_argument("--trials", type=int,
                   default=_env("trials", int, bench.DEFAULT_TRIALS))
    b.add_argument("--csv", default=_env("csv", str, None),
                   help="write one CSV row per trial to this path")
    b.add_argument("--pin", action="store_true", default=_env("pin", bool, False),
                   help="pin worker threads to cores where the platform allows")

    v = sub.add_parser("verify", help="re-check recorded histories")
    v.add_argument("--histories", required=True,
                   help="directory of history files (one event per line)")
    v.add_argument("--budget", type=int, default=500_000,
                   help="search node budget per history")
    return parser


def _cmd_bench(args):
    config = bench.WorkloadConfig(
        threads=args.threads, duration_s=args.duration_s, ops=args.ops,
        key_universe=args.universe, prefill=args.prefill, mix=args.mix,
        range_len=args.range_len, mode=args.mode,
        fast_path_tries=args.fast_path_tries, seed=args.seed,
        bucket_count=args.buckets, max_level=args.max_level, pin=args.pin)
    config.validate()
    reports = bench.run_trials(config, args.trials)
    for i, r in enumerate(reports):
        print("trial %d: %d ops in %.3fs (%.0f ops/s), %d aborts, "
              "%d range entries (%d slow-path)"
              % (i, r.ops_total, r.wall_time, r.ops_per_s, r.aborts,
                 r.range_entries, r.slow_path_entries))
    if args.csv:
        bench.emit_csv(reports, args.csv)
        print("wrote %s" % args.csv)
    return 0


def _cmd_verify(args):
    directory = args.histories
    names = sorted(os.listdir(directory))
    if not names:
        print("no history files in %s" % directory)
        return 1
    bad = 0
    for name in names:
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            continue
        events = read_history(path)
        try:
            verdict = check_linearizable(events, node_budget=args.budget)
        except BudgetExceeded:
            print("%s: search budget exceeded (%d events)" % (name, len(events)))
            bad += 1
            continue
        if verdict:
            print("%s: linearizable (%d events)" % (name, len(events)))
        else:
            bad += 1
            print("%s: NOT linearizable; stuck after %d events, window:"
                  % (name, verdict.linearized_prefix))
            for event in verdict.window:
                print("    thread %d %s%r -> %r"
                      % (event.thread, event.op, event.args, event.result))
    return 1 if bad else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        return _cmd_bench(args)
    return _cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
