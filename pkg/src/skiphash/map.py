"""The composed concurrent ordered map.

A hash index routes keys straight to skip list nodes, so elemental operations
and point queries on present keys are O(1); the doubly linked skip list keeps
the ordered sequence for misses and range scans.  Both structures change
together inside one transaction per public operation, which keeps their key
sets identical in every committed snapshot.

Range queries run on two paths.  The fast path executes the whole scan as a
single non-retrying read-only transaction.  After a few conflicts the slow
path takes over: one transaction registers the query with the coordinator and
finds its starting node, then the scan proceeds in a mode whose accumulated
result and cursor survive aborts, stopping only on nodes the coordinator
guarantees will stay stitched.  The query's result is exactly the logically
present contents of [low, high] at the moment its registration committed.
"""
from __future__ import annotations

import random
import threading

from .coordinator import RangeCoordinator
from .hashmap import DEFAULT_BUCKET_COUNT, HashIndex, mix64
from .skiplist import DEFAULT_MAX_LEVEL, REM, SkipList, random_height
from .stm import (AbortedOnce, NO_LOCAL_UNDO, READ_ONLY, READ_WRITE, STM,
                  TRY_ONCE)

FAST_ONLY = "fast_only"
SLOW_ONLY = "slow_only"
TWO_PATH = "two_path"
RANGE_MODES = (FAST_ONLY, SLOW_ONLY, TWO_PATH)

DEFAULT_FAST_PATH_TRIES = 3

# Pause-point names understood by the hooks object, all inside range():
#   range_fast_step    each node visited by a fast-path scan (inside the txn)
#   range_setup_done   slow path registered; info: ver, start key
#   range_slow_attempt each entry into the slow scan body; info: ver, attempt
#   range_finish_start about to retire the query's registration; info: ver
FAST_STEP = "range_fast_step"
SETUP_DONE = "range_setup_done"
SLOW_ATTEMPT = "range_slow_attempt"
FINISH_START = "range_finish_start"


class Session:
    """Per-thread handle: RNG for tower heights plus the removal buffer.

    Obtained from SkipHash.session(); strictly thread-confined.  close()
    flushes the removal buffer and must run before the thread retires.
    """

    __slots__ = ("map", "stm_session", "rng", "buffer", "closed")

    def __init__(self, owner, stm_session, rng):
        self.map = owner
        self.stm_session = stm_session
        self.rng = rng
        self.buffer = []
        self.closed = False

    @property
    def counters(self):
        return self.stm_session.counters

    def close(self):
        if not self.closed:
            self.map.rqc.flush_buffer(self.buffer)
            self.closed = True


class SkipHash:
    """Concurrent ordered map with linearizable elemental, point, and range
    operations.  All public methods may be called from any thread."""

    def __init__(self, *, bucket_count=DEFAULT_BUCKET_COUNT,
                 max_level=DEFAULT_MAX_LEVEL, fast_path_tries=DEFAULT_FAST_PATH_TRIES,
                 mode=TWO_PATH, seed=None, hash_fn=None, stm=None, hooks=None):
        if mode not in RANGE_MODES:
            raise ValueError("mode must be one of %s" % (RANGE_MODES,))
        if fast_path_tries < 1:
            raise ValueError("fast_path_tries must be >= 1")
        self.stm = stm if stm is not None else STM()
        self.index = HashIndex(bucket_count, hash_fn)
        self.list = SkipList(max_level)
        self.rqc = RangeCoordinator(self.stm, self.list)
        self.mode = mode
        self.fast_path_tries = fast_path_tries
        self.hooks = hooks
        self._seed = seed if seed is not None else random.randrange(1 << 63)
        self._tls = threading.local()
        self._sessions = []
        self._session_lock = threading.Lock()

    # ---- sessions ---------------------------------------------------------

    def session(self):
        sess = getattr(self._tls, "session", None)
        if sess is None or sess.closed:
            stm_session = self.stm.session()
            rng = random.Random(mix64(self._seed + 0x9E3779B97F4A7C15 * (stm_session.serial + 1)))
            sess = Session(self, stm_session, rng)
            with self._session_lock:
                self._sessions.append(sess)
            self._tls.session = sess
        return sess

    def quiesce(self):
        """Flush every thread's removal buffer and drain deferred reclamation.

        Callable only while no operations are in flight (end of a run, or
        between test phases); buffers are thread-confined otherwise.
        """
        if self.stm.live_transactions():
            raise RuntimeError("quiesce() with transactions in flight")
        with self._session_lock:
            sessions = list(self._sessions)
        for sess in sessions:
            self.rqc.flush_buffer(sess.buffer)
        self.stm.reclaimer.collect()

    def stats(self):
        out = self.stm.aggregate_counters()
        reclaimer = self.stm.reclaimer
        out["reclaimer.retired"] = reclaimer.retired
        out["reclaimer.reclaimed"] = reclaimer.reclaimed
        out["reclaimer.discarded_allocs"] = reclaimer.discarded_allocs
        out["clock"] = self.stm.clock.read()
        return out

    # ---- elemental operations ----------------------------------------------

    def lookup(self, key):
        """Value bound to key, or None.  One read-only transaction, O(1)."""

        def body(ctx):
            node = self.index.get(ctx, key)
            value = None if node is None else node.val
            ctx.session.counters["lookup.reads"] += ctx.n_reads
            return value

        value = self.stm.execute(body, READ_ONLY, label="lookup")
        counters = self.session().counters
        counters["lookup.completed"] += 1
        if value is None:
            counters["lookup.failed"] += 1
        return value

    def insert(self, key, value):
        """Bind key -> value; False if the key is already present.

        A logically deleted node with the same key may still be stitched; the
        fresh node goes after it, so the bottom level stays sorted.
        """
        if value is None:
            raise ValueError("None is not a storable value (it means absent)")
        sess = self.session()
        height = random_height(sess.rng, self.list.max_level)

        def body(ctx):
            if self.index.get(ctx, key) is not None:
                return False
            version = self.rqc.on_update(ctx)
            node = self.list.insert_after_deleted(ctx, key, value, height, version)
            self.index.insert(ctx, key, node)
            return True

        ok = self.stm.execute(body, READ_WRITE, label="insert")
        counters = sess.counters
        counters["insert.completed"] += 1
        if not ok:
            counters["insert.failed"] += 1
        return ok

    def remove(self, key):
        """Unbind key; False if absent.

        The node is logically deleted and unbound from the index in one
        transaction; physical unstitching is handed to the coordinator
        afterwards, since an in-flight range query may still need the node.
        """
        sess = self.session()

        def body(ctx):
            node = self.index.get(ctx, key)
            if node is None:
                return None
            self.index.remove(ctx, key)
            version = self.rqc.on_update(ctx)
            if ctx.read(node.orec, node.cells, REM) is not None:
                sess.counters["rem_overwrite"] += 1
                raise AssertionError("present node already carries a removal version")
            ctx.write(node.orec, node.cells, REM, version)
            return node

        node = self.stm.execute(body, READ_WRITE, label="remove")
        counters = sess.counters
        counters["remove.completed"] += 1
        if node is None:
            counters["remove.failed"] += 1
            return False
        self.rqc.after_remove(sess.buffer, node)
        return True

    # ---- point queries -------------------------------------------------------

    def ceil(self, key):
        """Smallest present key >= key, or None."""

        def body(ctx):
            if self.index.get(ctx, key) is not None:
                return key
            node = self.list.ceil_node(ctx, key)
            return None if node is self.list.tail else node.key

        return self._point(body, "ceil")

    def succ(self, key):
        """Smallest present key > key, or None."""

        def body(ctx):
            node = self.index.get(ctx, key)
            if node is not None:
                after = self.list.next_present(ctx, node)
            else:
                after = self.list.ceil_node(ctx, key)
            return None if after is self.list.tail else after.key

        return self._point(body, "succ")

    def floor(self, key):
        """Largest present key <= key, or None."""

        def body(ctx):
            if self.index.get(ctx, key) is not None:
                return key
            node = self.list.pred_node(ctx, key)
            return None if node is self.list.head else node.key

        return self._point(body, "floor")

    def pred(self, key):
        """Largest present key < key, or None."""

        def body(ctx):
            node = self.index.get(ctx, key)
            if node is not None:
                before = self.list.prev_present(ctx, node)
            else:
                before = self.list.pred_node(ctx, key)
            return None if before is self.list.head else before.key

        return self._point(body, "pred")

    def _point(self, body, label):
        result = self.stm.execute(body, READ_ONLY, label=label)
        counters = self.session().counters
        counters[label + ".completed"] += 1
        if result is None:
            counters[label + ".failed"] += 1
        return result

    # ---- range queries ---------------------------------------------------------

    def range(self, low, high):
        """All present (key, value) pairs with low <= key <= high, as a dict;
        one atomic observation of the map.  Empty when low > high."""
        counters = self.session().counters
        tries = 0
        if self.mode != SLOW_ONLY:
            while self.mode == FAST_ONLY or tries < self.fast_path_tries:
                try:
                    result = self.range_fast(low, high)
                except AbortedOnce:
                    tries += 1
                    continue
                counters["fast_path_successes"] += 1
                counters["range.completed"] += 1
                counters["range_entries"] += len(result)
                return result
        result = self._range_slow_path(low, high)
        counters["range.completed"] += 1
        counters["range_entries"] += len(result)
        return result

    def range_fast(self, low, high):
        """One non-retrying read-only transaction over [low, high].

        Raises AbortedOnce on the first conflict, leaving no trace.
        """
        hooks = self.hooks

        def body(ctx):
            found = {}
            node = self.list.first_at_or_after(ctx, low)
            while node.key <= high:
                if hooks is not None:
                    hooks.reach(FAST_STEP, key=node.key)
                if ctx.read(node.orec, node.cells, REM) is None:
                    found[node.key] = node.val
                node = ctx.read(node.orec, node.cells, 2)
            return found

        return self.stm.execute(body, TRY_ONCE, label="range")

    def _range_slow_path(self, low, high):
        hooks = self.hooks

        def setup(ctx):
            start = self.list.ceil_node(ctx, low)
            ver, op = self.rqc.register_range(ctx)
            return start, ver, op

        # One transaction for both: the start node is logically present at the
        # registration commit, hence guaranteed to stay stitched for us.
        start, ver, op = self.stm.execute(setup, READ_WRITE, label="range")
        self.session().counters["rqc.on_range_calls"] += 1
        if hooks is not None:
            hooks.reach(SETUP_DONE, ver=ver, start_key=start.key)
        result = self.range_slow(start, high, ver)
        if hooks is not None:
            hooks.reach(FINISH_START, ver=ver)
        self.rqc.after_range(ver, op)
        counters = self.session().counters
        counters["slow_path_entries"] += len(result)
        return result

    def range_slow(self, start, high, ver):
        """Collect every safe node in [start, high] for query version ``ver``.

        The cursor and result live outside the transaction and survive aborts,
        so each retry resumes from the last safe node instead of starting
        over; an abort behaves like an early commit.  At most one pair can be
        re-added per abort, which the dict result absorbs.
        """
        hooks = self.hooks
        found = {}
        cursor = [start]
        attempts = [0]

        def body(ctx):
            if hooks is not None:
                hooks.reach(SLOW_ATTEMPT, ver=ver, attempt=attempts[0])
            attempts[0] += 1
            node = cursor[0]
            while node.key <= high:
                nxt = self.next_safe(ctx, node, ver)
                found[node.key] = node.val
                cursor[0] = nxt
                node = nxt
            return found

        return self.stm.execute(body, NO_LOCAL_UNDO, label="range")

    def is_safe(self, ctx, node, ver):
        """True when ``node`` cannot be unstitched while the range query with
        version ``ver`` is in flight: it is a sentinel, or it was inserted
        before the query registered and not removed before that point."""
        if node is self.list.head or node is self.list.tail:
            return True
        if node.insert_version >= ver:
            return False
        removed = ctx.read(node.orec, node.cells, REM)
        return removed is None or removed >= ver

    def next_safe(self, ctx, node, ver):
        """First safe node strictly after ``node`` in bottom-level order.

        Always exists because the tail sentinel is safe.  ``node`` must not be
        the tail.
        """
        node = ctx.read(node.orec, node.cells, 2)
        while not self.is_safe(ctx, node, ver):
            node = ctx.read(node.orec, node.cells, 2)
        return node

    # ---- quiescent views ----------------------------------------------------

    def items_unlocked(self):
        """Sorted present pairs, read without transactions; quiescence only."""
        return list(self.list.items_unlocked())

    def population_unlocked(self):
        return sum(1 for _ in self.list.items_unlocked())
