"""Workload microbenchmark: mixed-operation throughput on one shared map.

Worker threads draw operation types from a percentage mix and keys uniformly
from the universe; range queries draw the low key and add a fixed length.  The
map is pre-filled with a uniform sample of distinct keys before timing starts,
and update mixes split evenly between insertions and removals so the
population stays put.  Counters are exact (every worker counts every
operation), and a fixed seed with one thread in operation-count mode makes a
run fully reproducible.
"""
from __future__ import annotations

import math
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace

from .hashmap import mix64
from .map import FAST_ONLY, RANGE_MODES, TWO_PATH, SkipHash
from .skiplist import DEFAULT_MAX_LEVEL
from .stm import AbortedOnce

OPS = ("lookup", "insert", "remove", "range")

# Desk-scale defaults; headline-scale values (1e6 universe, 5e5 prefill, 3 s,
# 714341 buckets) are all reachable through flags.
DEFAULT_UNIVERSE = 1 << 16
DEFAULT_PREFILL = 1 << 15
DEFAULT_DURATION = 1.0
DEFAULT_TRIALS = 3


def _is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    if n % 3 == 0:
        return n == 3
    i = 5
    while i * i <= n:
        if n % i == 0 or n % (i + 2) == 0:
            return False
        i += 6
    return True


def pick_bucket_count(expected_population):
    """Smallest prime keeping expected utilization at or below 70%."""
    n = max(11, math.ceil(expected_population / 0.7))
    while not _is_prime(n):
        n += 1
    return n


@dataclass
class WorkloadConfig:
    threads: int = 1
    duration_s: float = DEFAULT_DURATION
    ops: int | None = None  # operation-count mode when set; overrides duration
    key_universe: int = DEFAULT_UNIVERSE
    prefill: int = DEFAULT_PREFILL
    mix: tuple = (100, 0, 0, 0)  # lookup, insert, remove, range percentages
    range_len: int = 100
    mode: str = TWO_PATH
    fast_path_tries: int = 3
    seed: int = 1
    bucket_count: int = 0  # 0 = size to prefill by the 70%-utilization rule
    max_level: int = DEFAULT_MAX_LEVEL
    pin: bool = False

    @classmethod
    def from_update_split(cls, lookup_pct, update_pct, range_pct, **kw):
        """Shorthand: updates split evenly between insertions and removals."""
        if update_pct % 2:
            raise ValueError("mix: update%% must be even to split into "
                             "insert/remove halves")
        half = update_pct // 2
        return cls(mix=(lookup_pct, half, half, range_pct), **kw)

    def validate(self):
        problems = []
        if self.threads < 1:
            problems.append("threads: must be >= 1")
        if self.ops is None and self.duration_s < 0:
            problems.append("duration_s: must be >= 0")
        if self.ops is not None and self.ops < 0:
            problems.append("ops: must be >= 0")
        if self.key_universe < 1:
            problems.append("key_universe: must be >= 1")
        if not 0 <= self.prefill <= self.key_universe:
            problems.append("prefill: must be in [0, key_universe]")
        if len(self.mix) != 4 or any(p < 0 for p in self.mix):
            problems.append("mix: needs four nonnegative percentages")
        elif sum(self.mix) != 100:
            problems.append("mix: percentages must sum to 100")
        if self.range_len < 0:
            problems.append("range_len: must be >= 0")
        if self.mode not in RANGE_MODES:
            problems.append("mode: must be one of %s" % (RANGE_MODES,))
        if self.fast_path_tries < 1:
            problems.append("fast_path_tries: must be >= 1")
        if self.bucket_count < 0:
            problems.append("bucket_count: must be >= 0 (0 = auto)")
        if self.max_level < 1:
            problems.append("max_level: must be >= 1")
        if problems:
            raise ValueError("invalid workload config: " + "; ".join(problems))

    def mix_text(self):
        return ":".join(str(p) for p in self.mix)


@dataclass
class RunReport:
    config: WorkloadConfig
    wall_time: float
    ops_total: int
    ops_per_s: float
    per_op: dict
    aborts: int
    range_entries: int
    range_entries_per_s: float
    slow_path_entries: int
    fast_path_successes: int
    population: int
    counters: dict = field(repr=False, default_factory=dict)

    def deterministic_fields(self):
        """Everything reproducible across identical runs (timings excluded)."""
        return {
            "ops_total": self.ops_total,
            "per_op": self.per_op,
            "aborts": self.aborts,
            "range_entries": self.range_entries,
            "slow_path_entries": self.slow_path_entries,
            "fast_path_successes": self.fast_path_successes,
            "population": self.population,
        }


def build_map(config, hooks=None):
    buckets = config.bucket_count or pick_bucket_count(max(config.prefill, 1))
    return SkipHash(bucket_count=buckets, max_level=config.max_level,
                    fast_path_tries=config.fast_path_tries, mode=config.mode,
                    seed=config.seed, hooks=hooks)


def prefill_map(map_, config):
    rng = random.Random(mix64(config.seed))
    for key in rng.sample(range(config.key_universe), config.prefill):
        map_.insert(key, key)
    map_.quiesce()


def _worker(map_, config, tid, budget, deadline, barrier):
    sess = map_.session()
    rng = random.Random(mix64(config.seed ^ ((tid + 1) * 0xA24BAED4963EE407)))
    weights = config.mix
    t_lookup = weights[0]
    t_insert = t_lookup + weights[1]
    t_remove = t_insert + weights[2]
    universe = config.key_universe
    range_len = config.range_len
    fast_only = config.mode == FAST_ONLY
    if config.pin and hasattr(os, "sched_setaffinity"):
        cores = sorted(os.sched_setaffinity(0))
        os.sched_setaffinity(0, {cores[tid % len(cores)]})
    barrier.wait()
    done = 0
    while True:
        if budget is not None:
            if done >= budget:
                break
        elif time.monotonic() >= deadline:
            break
        draw = rng.randrange(100)
        key = rng.randrange(universe)
        if draw < t_lookup:
            map_.lookup(key)
        elif draw < t_insert:
            map_.insert(key, key)
        elif draw < t_remove:
            map_.remove(key)
        else:
            if fast_only:
                # The fast-only diagnostic mode retries forever; keep the
                # worker responsive to the deadline between attempts.
                while True:
                    try:
                        result = map_.range_fast(key, key + range_len)
                    except AbortedOnce:
                        sess.counters["range.starved_attempts"] += 1
                        if deadline is not None and time.monotonic() >= deadline:
                            result = None
                            break
                        continue
                    sess.counters["fast_path_successes"] += 1
                    break
                if result is not None:
                    sess.counters["range.completed"] += 1
                    sess.counters["range_entries"] += len(result)
            else:
                map_.range(key, key + range_len)
        done += 1
    sess.close()


def run(config, map_=None):
    """Execute one trial and return its exact counters."""
    config.validate()
    if map_ is None:
        map_ = build_map(config)
        prefill_map(map_, config)
    baseline = map_.stats()

    if config.ops is not None:
        share, extra = divmod(config.ops, config.threads)
        budgets = [share + (1 if t < extra else 0) for t in range(config.threads)]
        deadline = None
    else:
        budgets = [None] * config.threads
        deadline = time.monotonic() + config.duration_s

    barrier = threading.Barrier(config.threads + 1)
    workers = [
        threading.Thread(target=_worker, name="bench-%d" % t,
                         args=(map_, config, t, budgets[t], deadline, barrier))
        for t in range(config.threads)
    ]
    for w in workers:
        w.start()
    barrier.wait()
    t0 = time.monotonic()
    for w in workers:
        w.join()
    wall = time.monotonic() - t0
    map_.quiesce()

    totals = map_.stats()
    delta = {k: totals.get(k, 0) - baseline.get(k, 0)
             for k in set(totals) | set(baseline)}
    per_op = {}
    ops_total = 0
    aborts = 0
    for op in OPS:
        completed = delta.get(op + ".completed", 0)
        per_op[op] = {
            "completed": completed,
            "failed": delta.get(op + ".failed", 0),
            "aborts": delta.get(op + ".aborts", 0),
        }
        ops_total += completed
    aborts = delta.get("aborts", 0)
    range_entries = delta.get("range_entries", 0)
    return RunReport(
        config=config,
        wall_time=wall,
        ops_total=ops_total,
        ops_per_s=ops_total / wall if wall > 0 else 0.0,
        per_op=per_op,
        aborts=aborts,
        range_entries=range_entries,
        range_entries_per_s=range_entries / wall if wall > 0 else 0.0,
        slow_path_entries=delta.get("slow_path_entries", 0),
        fast_path_successes=delta.get("fast_path_successes", 0),
        population=map_.population_unlocked(),
        counters=delta,
    )


def run_trials(config, trials):
    """Independent trials; each gets a fresh map and a derived seed."""
    reports = []
    for trial in range(trials):
        cfg = replace(config, seed=config.seed + trial)
        reports.append(run(cfg))
    return reports


CSV_FIELDS = ("threads", "duration_s", "mix", "range_len", "mode", "ops_total",
              "ops_per_s", "range_entries_per_s", "aborts",
              "slow_path_entries", "seed")


def emit_csv(reports, destination):
    """One header row plus one data row per report.  Plain decimal rendering,
    no locale separators."""
    if isinstance(reports, RunReport):
        reports = [reports]
    rows = [",".join(CSV_FIELDS)]
    for r in reports:
        cfg = r.config
        rows.append(",".join((
            str(cfg.threads),
            "%.6f" % (cfg.duration_s if cfg.ops is None else r.wall_time),
            cfg.mix_text(),
            str(cfg.range_len),
            cfg.mode,
            str(r.ops_total),
            "%.3f" % r.ops_per_s,
            "%.3f" % r.range_entries_per_s,
            str(r.aborts),
            str(r.slow_path_entries),
            str(cfg.seed),
        )))
    text = "\n".join(rows) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)
    return text
