"""Concurrent history recording and a line-delimited interchange format.

Each worker thread appends to its own log (no cross-thread contention); logs
merge after the run.  Invocation and response times come from the process
monotonic clock.  Range results are normalized to sorted (key, value) tuples
so equality against oracle replays is exact.

File format, one event per line:

    thread,op,arg1;arg2,t_invoke,t_response,result

with results encoded as ``T``/``F`` for booleans, ``-`` for absent, a plain
integer for values/keys, and ``k=v;k=v`` (possibly empty) for ranges.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass


@dataclass
class Event:
    thread: int
    op: str
    args: tuple
    t_invoke: int
    t_response: int
    result: object


OPS = ("lookup", "insert", "remove", "ceil", "floor", "succ", "pred", "range")
_RANGE_OPS = frozenset(["range"])
_BOOL_OPS = frozenset(["insert", "remove"])


class HistoryRecorder:
    """Wraps a map with the same public API, logging every call as an Event."""

    def __init__(self, target):
        self._target = target
        self._tls = threading.local()
        self._logs = []
        self._lock = threading.Lock()

    def _log(self):
        log = getattr(self._tls, "log", None)
        if log is None:
            with self._lock:
                log = []
                self._tls.thread_id = len(self._logs)
                self._logs.append(log)
            self._tls.log = log
        return log, self._tls.thread_id

    def _record(self, op, args):
        log, tid = self._log()
        fn = getattr(self._target, op)
        t0 = time.monotonic_ns()
        result = fn(*args)
        t1 = time.monotonic_ns()
        recorded = tuple(sorted(result.items())) if op in _RANGE_OPS else result
        log.append(Event(tid, op, args, t0, t1, recorded))
        return result

    def lookup(self, key):
        return self._record("lookup", (key,))

    def insert(self, key, value):
        return self._record("insert", (key, value))

    def remove(self, key):
        return self._record("remove", (key,))

    def ceil(self, key):
        return self._record("ceil", (key,))

    def floor(self, key):
        return self._record("floor", (key,))

    def succ(self, key):
        return self._record("succ", (key,))

    def pred(self, key):
        return self._record("pred", (key,))

    def range(self, low, high):
        return self._record("range", (low, high))

    def events(self):
        """Merged history, ordered by invocation time."""
        merged = []
        with self._lock:
            for log in self._logs:
                merged.extend(log)
        merged.sort(key=lambda e: e.t_invoke)
        return merged


# ---- serialization -----------------------------------------------------------


def _encode_result(op, result):
    if result is None:
        return "-"
    if op in _BOOL_OPS:
        return "T" if result else "F"
    if op in _RANGE_OPS:
        return ";".join("%d=%d" % (k, v) for k, v in result)
    return str(result)


def _decode_result(op, text):
    if text == "-":
        return None
    if op in _BOOL_OPS:
        return text == "T"
    if op in _RANGE_OPS:
        if not text:
            return ()
        pairs = []
        for item in text.split(";"):
            k, v = item.split("=")
            pairs.append((int(k), int(v)))
        return tuple(pairs)
    return int(text)


def format_event(event):
    args = ";".join(str(a) for a in event.args)
    return "%d,%s,%s,%d,%d,%s" % (
        event.thread, event.op, args, event.t_invoke, event.t_response,
        _encode_result(event.op, event.result),
    )


def parse_event(line):
    thread, op, args, t0, t1, result = line.rstrip("\n").split(",", 5)
    parsed_args = tuple(int(a) for a in args.split(";")) if args else ()
    return Event(int(thread), op, parsed_args, int(t0), int(t1),
                 _decode_result(op, result))


def write_history(events, path):
    with open(path, "w") as fh:
        for event in events:
            fh.write(format_event(event) + "\n")


def read_history(path):
    with open(path) as fh:
        return [parse_event(line) for line in fh if line.strip()]
