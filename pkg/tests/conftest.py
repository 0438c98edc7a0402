import sys
import threading

import pytest

from skiphash import STM, Orec, SkipHash


class Box:
    """Minimal transactional object: one orec over a list of slots."""

    def __init__(self, *values, kind=None):
        self.orec = Orec(kind)
        self.cells = list(values) if values else [0]


class WorkerThread(threading.Thread):
    """Thread that stores its result or re-raises its exception on join."""

    def __init__(self, fn, *args, **kwargs):
        super().__init__(daemon=True)
        self._fn = fn
        self._args = args
        self._kwargs = kwargs
        self.result = None
        self.error = None

    def run(self):
        try:
            self.result = self._fn(*self._args, **self._kwargs)
        except BaseException as exc:  # surfaced on join()
            self.error = exc

    def finish(self, timeout=30.0):
        self.join(timeout)
        if self.is_alive():
            raise AssertionError("worker thread did not finish")
        if self.error is not None:
            raise self.error
        return self.result


def in_new_thread(fn, *args, **kwargs):
    """Run fn to completion in a fresh thread (own STM session) and return
    its result."""
    t = WorkerThread(fn, *args, **kwargs)
    t.start()
    return t.finish()


@pytest.fixture
def fast_switching():
    """Aggressive interpreter preemption so threads really interleave."""
    old = sys.getswitchinterval()
    sys.setswitchinterval(5e-5)
    yield
    sys.setswitchinterval(old)


@pytest.fixture
def make_map():
    def _make(**kw):
        kw.setdefault("bucket_count", 101)
        kw.setdefault("max_level", 8)
        kw.setdefault("seed", 42)
        return SkipHash(**kw)

    return _make


@pytest.fixture
def stm():
    return STM()
