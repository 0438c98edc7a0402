"""Word-granularity software transactional memory over per-object ownership records.

The engine provides atomic multi-location read/write blocks for a closed world
of transactional objects.  Every protected object carries an ownership record
(orec) whose single state word is either

* unlocked -- ``(version << 33) | (incarnation << 1)``, where ``version`` is
  the commit stamp of the last transaction that changed data under this orec, or
* locked   -- ``(owner_serial << 1) | 1``.

Writers acquire an orec on the first write under it (compare-and-swap), log the
prior value of each written slot to an undo list, and mutate in place.  Readers
validate the orec word before and after each value read against a start stamp
taken from the global commit clock; a version newer than the start stamp aborts
the attempt outright (no timestamp extension).  At commit a writer revalidates
its read set, advances the clock with a fetch-and-add to obtain its commit
stamp, and releases its orecs at that stamp.  On abort it restores values from
the undo log and releases each orec at its prior version with the incarnation
field bumped, so a reader that raced the undo can never match its pre-read word
against the restored one.

Read-only transactions log nothing and never touch shared metadata: each read
is individually proven current as of the start stamp, which makes the whole
footprint one consistent snapshot with no commit-time work.

Freed objects pass through a grace-period reclaimer: an object freed by a
commit at stamp ``c`` is reclaimed only once every transaction whose start
stamp is below ``c`` has finished.  CPython keeps the storage itself
type-stable for stragglers (references pin the object), so reclamation here is
bookkeeping -- counters and an optional hook -- never memory reuse.
"""
from __future__ import annotations

import heapq
import random
import threading
import time
from collections import defaultdict

# Transaction modes.
#
# READ_WRITE     full instrumentation: read set, undo log, eager orec acquire.
# READ_ONLY      validating reads only; writes and allocation are forbidden.
# TRY_ONCE       READ_ONLY that surfaces its first conflict as AbortedOnce
#                instead of retrying.
# NO_LOCAL_UNDO  READ_ONLY that retries internally like READ_WRITE; progress
#                kept in ordinary Python state captured by the body survives
#                aborts because the engine never logs or restores it.  Only
#                thread-confined accumulators may rely on this.
READ_WRITE = "read_write"
READ_ONLY = "read_only"
TRY_ONCE = "try_once"
NO_LOCAL_UNDO = "no_local_undo"

_VER_SHIFT = 33
_INC_STEP = 2  # +1 to the incarnation field of an unlocked word

# CAS on an orec word is emulated with a short critical section; the stripes
# only make the word update indivisible, conflict granularity stays per-orec.
_CAS_STRIPES = 256
_cas_locks = tuple(threading.Lock() for _ in range(_CAS_STRIPES))


def _cas(orec, expected, new):
    with _cas_locks[(id(orec) >> 4) & (_CAS_STRIPES - 1)]:
        if orec.state == expected:
            orec.state = new
            return True
        return False


class _Abort(Exception):
    """Internal conflict signal; never escapes execute()."""


class AbortedOnce(Exception):
    """A TRY_ONCE transaction hit a conflict and did not retry."""


class Orec:
    """Ownership record co-located with one protected object.

    ``kind`` is an optional label; commits count their acquired labelled orecs
    into the session counters (``commit_writes.<kind>``), which is how tests
    audit writes to specific hot words.
    """

    __slots__ = ("state", "kind")

    def __init__(self, kind=None):
        self.state = 0
        self.kind = kind

    def is_locked(self):
        return bool(self.state & 1)

    def version(self):
        return self.state >> _VER_SHIFT


class GlobalClock:
    """Monotonic commit clock, advanced only by committing writers."""

    __slots__ = ("_value", "_lock")

    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def read(self):
        return self._value

    def read_and_pin(self, session):
        # The session's start slot must become visible to the reclaimer
        # atomically with the clock read, else a racing free could compute a
        # grace floor that misses this transaction.
        with self._lock:
            value = self._value
            session.active_start = value
        return value

    def tick(self):
        with self._lock:
            self._value += 1
            return self._value


class Reclaimer:
    """Grace-period deferral for transactionally freed objects."""

    def __init__(self, stm):
        self._stm = stm
        self._lock = threading.Lock()
        self._limbo = []  # heap of (commit stamp, seq, [objects])
        self._seq = 0
        self.retired = 0
        self.reclaimed = 0
        self.discarded_allocs = 0
        self.hook = None  # test hook, called with each object as it reclaims

    def retire(self, stamp, objs):
        with self._lock:
            self._seq += 1
            heapq.heappush(self._limbo, (stamp, self._seq, list(objs)))
            self.retired += len(objs)

    def on_alloc_discarded(self, objs):
        with self._lock:
            self.discarded_allocs += len(objs)

    def pending(self):
        with self._lock:
            return sum(len(e[2]) for e in self._limbo)

    def collect(self):
        """Reclaim every retired object whose grace period has elapsed."""
        floor = self._stm._min_active_start()
        if floor is None:
            floor = self._stm.clock.read()
        ready = []
        with self._lock:
            limbo = self._limbo
            while limbo and limbo[0][0] <= floor:
                ready.extend(heapq.heappop(limbo)[2])
            self.reclaimed += len(ready)
        hook = self.hook
        if hook is not None:
            for obj in ready:
                hook(obj)
        return len(ready)


class StmSession:
    """Per-thread engine state; strictly thread-confined."""

    __slots__ = ("serial", "rng", "ctx", "active_start", "counters")

    def __init__(self, serial):
        self.serial = serial
        self.rng = random.Random(0x5DEECE66D ^ (serial * 0x9E3779B97F4A7C15))
        self.ctx = None
        self.active_start = None
        self.counters = defaultdict(int)


class TxnContext:
    """One transaction attempt.  Created by STM.execute; thread-confined."""

    __slots__ = (
        "engine", "session", "mode", "start", "attempt_count",
        "read_set", "undo", "owned", "alloc_log", "free_log",
        "_fresh", "_lock_word", "_log_reads", "_fault",
        "n_reads", "n_writes",
    )

    def __init__(self, engine, session, mode, attempt):
        self.engine = engine
        self.session = session
        self.mode = mode
        self.attempt_count = attempt
        if mode == READ_WRITE:
            self.read_set = []
            self.undo = []
            self.owned = {}
            self.alloc_log = []
            self.free_log = []
            self._fresh = set()
            self._log_reads = True
        else:
            # Read-only flavours carry no logs at all.
            self.read_set = None
            self.undo = None
            self.owned = None
            self.alloc_log = None
            self.free_log = None
            self._fresh = None
            self._log_reads = False
        self._lock_word = (session.serial << 1) | 1
        self._fault = engine.read_fault
        self.n_reads = 0
        self.n_writes = 0
        self.start = engine.clock.read_and_pin(session)

    # ---- data access ----------------------------------------------------

    def read(self, orec, cells, idx):
        """Snapshot-consistent read of one slot guarded by ``orec``."""
        self.n_reads += 1
        if self._fault is not None and self._fault(self):
            raise _Abort
        word = orec.state
        if word & 1:
            if word == self._lock_word:
                return cells[idx]  # read-own-writes
            raise _Abort
        value = cells[idx]
        # Post-validate: unchanged across the value read, and no newer than
        # our snapshot (no timestamp extension).
        if orec.state != word or (word >> _VER_SHIFT) > self.start:
            raise _Abort
        if self._log_reads:
            self.read_set.append((orec, word))
        return value

    def write(self, orec, cells, idx, value):
        """Eager in-place write; acquires ``orec`` on first touch."""
        fresh = self._fresh
        if fresh is not None and id(cells) in fresh:
            cells[idx] = value
            return
        if orec.state != self._lock_word:
            self.acquire(orec)
        self.undo.append((cells, idx, cells[idx]))
        cells[idx] = value
        self.n_writes += 1

    def acquire(self, orec):
        """Own ``orec`` without writing data under it yet."""
        word = orec.state
        if word == self._lock_word:
            return
        if self.owned is None:
            raise RuntimeError("transactional write in a read-only mode")
        if word & 1 or (word >> _VER_SHIFT) > self.start:
            raise _Abort
        if not _cas(orec, word, self._lock_word):
            raise _Abort
        self.owned[orec] = word

    def owns(self, orec):
        return orec.state == self._lock_word

    def alloc(self, obj):
        """Adopt a freshly constructed object; writes to it skip all logging.

        Discarded (with accounting) if this transaction aborts.
        """
        if self.alloc_log is None:
            raise RuntimeError("transactional allocation in a read-only mode")
        self.alloc_log.append(obj)
        self._fresh.add(id(obj.cells))
        return obj

    def free(self, obj):
        """Hand an object to the reclaimer if this transaction commits."""
        if self.free_log is None:
            raise RuntimeError("transactional free in a read-only mode")
        self.free_log.append(obj)

    # ---- outcome --------------------------------------------------------

    def _commit(self):
        owned = self.owned
        if not owned:
            # Nothing published.  Every read was already proven current at
            # `start`, so the footprint is a consistent snapshot; the clock
            # must not move for transactions that wrote nothing.
            if self.free_log:
                self.engine.reclaimer.retire(self.engine.clock.read(), self.free_log)
            return False
        lock_word = self._lock_word
        for orec, seen in self.read_set:
            current = orec.state
            if current != seen and not (current == lock_word and owned.get(orec) == seen):
                raise _Abort
        stamp = self.engine.clock.tick()
        word = stamp << _VER_SHIFT
        counters = self.session.counters
        for orec in owned:
            orec.state = word
            if orec.kind is not None:
                counters["commit_writes." + orec.kind] += 1
        if self.free_log:
            self.engine.reclaimer.retire(stamp, self.free_log)
        return True

    def _rollback(self):
        undo = self.undo
        if undo:
            for cells, idx, old in reversed(undo):
                cells[idx] = old
        owned = self.owned
        if owned:
            for orec, prior in owned.items():
                # Same version, bumped incarnation: a reader that raced the
                # undo sees a different word and aborts.
                orec.state = prior + _INC_STEP
        if self.alloc_log:
            self.engine.reclaimer.on_alloc_discarded(self.alloc_log)


def _backoff(attempt, rng):
    # Randomized exponential backoff, capped at 2**16 spin units.  Sleeping
    # (even for 0) yields the interpreter so the conflicting writer can finish.
    spins = rng.randrange(1 << min(attempt, 16)) + 1
    if spins > 64:
        time.sleep(min(spins * 2e-8, 1e-3))
    else:
        time.sleep(0)


class STM:
    """The transactional engine: run bodies atomically with internal retry.

    Any thread may run transactions concurrently; per-thread state lives in a
    session created on first use.  Nested execute() calls flatten into the
    enclosing transaction.
    """

    def __init__(self):
        self.clock = GlobalClock()
        self.reclaimer = Reclaimer(self)
        self._sessions = []
        self._lock = threading.Lock()
        self._tls = threading.local()
        self.observer = None  # test hook: observer(ctx, committed)
        self.read_fault = None  # test hook: fault(ctx) -> bool, True aborts

    def session(self):
        session = getattr(self._tls, "session", None)
        if session is None:
            with self._lock:
                session = StmSession(len(self._sessions))
                self._sessions.append(session)
            self._tls.session = session
        return session

    def _min_active_start(self):
        with self._lock:
            sessions = list(self._sessions)
        floor = None
        for s in sessions:
            start = s.active_start
            if start is not None and (floor is None or start < floor):
                floor = start
        return floor

    def live_transactions(self):
        with self._lock:
            return sum(1 for s in self._sessions if s.ctx is not None)

    def aggregate_counters(self):
        with self._lock:
            sessions = list(self._sessions)
        totals = defaultdict(int)
        for s in sessions:
            for key, value in list(s.counters.items()):
                totals[key] += value
        return dict(totals)

    def execute(self, body, mode=READ_WRITE, label=None):
        """Run ``body(ctx)`` atomically and return its result.

        Conflicts retry internally with randomized backoff, except in
        TRY_ONCE mode where the first conflict raises AbortedOnce (with no
        visible effects).  Bodies must route every shared access through the
        ctx and must not perform irrevocable side effects.
        """
        session = self.session()
        if session.ctx is not None:
            return body(session.ctx)  # flat nesting
        counters = session.counters
        attempt = 0
        while True:
            ctx = TxnContext(self, session, mode, attempt)
            session.ctx = ctx
            try:
                result = body(ctx)
                published = ctx._commit()
            except _Abort:
                ctx._rollback()
                session.ctx = None
                session.active_start = None
                counters["aborts"] += 1
                if label is not None:
                    counters[label + ".aborts"] += 1
                observer = self.observer
                if observer is not None:
                    observer(ctx, False)
                if mode == TRY_ONCE:
                    raise AbortedOnce from None
                attempt += 1
                _backoff(attempt, session.rng)
                continue
            except BaseException:
                ctx._rollback()
                session.ctx = None
                session.active_start = None
                raise
            session.ctx = None
            session.active_start = None
            counters["commits"] += 1
            if published:
                counters["writer_commits"] += 1
            else:
                counters["ro_commits"] += 1
            observer = self.observer
            if observer is not None:
                observer(ctx, True)
            if ctx.free_log:
                self.reclaimer.collect()
            return result
