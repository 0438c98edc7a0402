"""Deterministic pause points for orchestrating cross-thread interleavings.

A map built with ``hooks=None`` (the default) pays a single attribute check
per potential pause point.  Tests install a Hooks object and bind callables —
usually Gates — to named points, then drive threads into known alignments.
"""
from __future__ import annotations

import threading


class Hooks:
    def __init__(self):
        self._points = {}

    def set(self, point, fn):
        self._points[point] = fn
        return fn

    def clear(self, point):
        self._points.pop(point, None)

    def reach(self, point, **info):
        fn = self._points.get(point)
        if fn is not None:
            fn(point, info)


class Gate:
    """Blocks the reaching thread until released.

    Fires at most ``times`` times (None = every reach); later reaches pass
    straight through.  The controlling test waits for arrival, interleaves
    whatever it needs, then releases.
    """

    def __init__(self, times=1, timeout=30.0):
        self._times = times
        self._timeout = timeout
        self._hits = 0
        self._lock = threading.Lock()
        self.arrived = threading.Event()
        self._go = threading.Event()
        self.seen = []

    def __call__(self, point, info):
        with self._lock:
            if self._times is not None and self._hits >= self._times:
                return
            self._hits += 1
        self.seen.append((point, dict(info)))
        self.arrived.set()
        if not self._go.wait(self._timeout):
            raise RuntimeError("gate at %r was never released" % point)

    def wait_arrived(self, timeout=10.0):
        if not self.arrived.wait(timeout):
            raise AssertionError("gate was never reached")

    def release(self):
        self._go.set()


class Tripwire:
    """Runs a callback the first time a point is reached (in the reaching
    thread), then becomes inert; handy for injecting one conflicting commit
    mid-transaction."""

    def __init__(self, fn, times=1):
        self._fn = fn
        self._times = times
        self._hits = 0
        self._lock = threading.Lock()

    def __call__(self, point, info):
        with self._lock:
            if self._hits >= self._times:
                return
            self._hits += 1
        self._fn(point, info)
