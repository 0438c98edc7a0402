"""Range query coordinator: version issuance and deferred unstitching.

Slow-path range queries register here and receive strictly increasing version
numbers from a transactional counter.  Insertions and removals read (never
write) the counter, which orders them after the most recent registered query.

Removed nodes cannot be unstitched while a query that still needs them is in
flight, so removal hands each logically deleted node to the coordinator.
Nodes collect in a small thread-confined buffer; a full buffer is either
unstitched outright (no queries in flight) or spliced in O(1) onto the
deferred list of the newest in-flight query.  When a query finishes it takes
its deferred list if it is the oldest, otherwise the whole list is passed
backward to its predecessor, so every deferred node is processed exactly once.
"""
from __future__ import annotations

from .stm import Orec, READ_WRITE

BUFFER_CAPACITY = 32

# RangeOp cells layout.
PREV, NEXT, DHEAD, DTAIL, DCOUNT = 0, 1, 2, 3, 4


class UnknownRangeVersion(Exception):
    """after_range() was handed a version that is not registered."""


class RangeOp:
    """Registry entry for one in-flight slow-path range query."""

    __slots__ = ("ver", "orec", "cells")

    def __init__(self, ver):
        self.ver = ver
        self.orec = Orec()
        self.cells = [None, None, None, None, 0]


class _Cell:
    """Deferred-list link.  cells[0] is the next cell, guarded by the orec of
    whichever RangeOp currently owns the list segment."""

    __slots__ = ("node", "cells")

    def __init__(self, node):
        self.node = node
        self.cells = [None]


class RangeCoordinator:
    __slots__ = ("_stm", "_list", "_counter_orec", "_counter", "_head", "_tail",
                 "capacity")

    def __init__(self, stm, skiplist, capacity=BUFFER_CAPACITY):
        self._stm = stm
        self._list = skiplist
        self._counter_orec = Orec(kind="rqc_counter")
        self._counter = [0]
        self._head = RangeOp(None)
        self._tail = RangeOp(None)
        self._head.cells[NEXT] = self._tail
        self._tail.cells[PREV] = self._head
        self.capacity = capacity

    # ---- versions ---------------------------------------------------------

    def on_update(self, ctx):
        """Current version number; a transactional read, so the caller orders
        itself after the newest registered range query."""
        return ctx.read(self._counter_orec, self._counter, 0)

    def on_range(self, ctx):
        """Register a new slow-path range query; returns its version."""
        return self.register_range(ctx)[0]

    def register_range(self, ctx):
        """As on_range, but also hands back the registry entry so the caller
        can finish in O(1) instead of re-finding it by version."""
        ver = ctx.read(self._counter_orec, self._counter, 0) + 1
        ctx.write(self._counter_orec, self._counter, 0, ver)
        op = ctx.alloc(RangeOp(ver))
        tail = self._tail
        last = ctx.read(tail.orec, tail.cells, PREV)
        op.cells[PREV] = last
        op.cells[NEXT] = tail
        ctx.write(last.orec, last.cells, NEXT, op)
        ctx.write(tail.orec, tail.cells, PREV, op)
        return ver, op

    # ---- removal hand-off ---------------------------------------------------

    def after_remove(self, buffer, node):
        """Queue a logically deleted, index-unbound node for unstitching.

        Must be called outside the removing transaction.  ``buffer`` is the
        calling thread's removal buffer.
        """
        buffer.append(node)
        if len(buffer) >= self.capacity:
            self.flush_buffer(buffer)

    def flush_buffer(self, buffer):
        """Drain a removal buffer: unstitch everything now if no slow-path
        query is in flight, else splice the whole batch onto the newest
        query's deferred list in O(1)."""
        if not buffer:
            return
        nodes = list(buffer)
        del buffer[:]

        def body(ctx):
            newest = ctx.read(self._tail.orec, self._tail.cells, PREV)
            if newest is self._head:
                return False
            chain = [_Cell(n) for n in nodes]
            for cell, nxt in zip(chain, chain[1:]):
                cell.cells[0] = nxt
            self._append_segment(ctx, newest, chain[0], chain[-1], len(chain))
            return True

        deferred = self._stm.execute(body, READ_WRITE, label="rqc_flush")
        counters = self._stm.session().counters
        if deferred:
            counters["rqc.deferred_appends"] += len(nodes)
        else:
            counters["rqc.immediate_unstitches"] += len(nodes)
            self._unstitch_each(nodes)

    def _append_segment(self, ctx, op, first, last, count):
        # All writes run under op's orec, including the old tail cell's link.
        head = ctx.read(op.orec, op.cells, DHEAD)
        if head is None:
            ctx.write(op.orec, op.cells, DHEAD, first)
        else:
            tail_cell = ctx.read(op.orec, op.cells, DTAIL)
            ctx.write(op.orec, tail_cell.cells, 0, first)
        ctx.write(op.orec, op.cells, DTAIL, last)
        ctx.write(op.orec, op.cells, DCOUNT,
                  ctx.read(op.orec, op.cells, DCOUNT) + count)

    # ---- completion -----------------------------------------------------------

    def after_range(self, ver, op=None):
        """Retire a finished slow-path range query.

        If it was the oldest in flight, its deferred nodes are unstitched and
        reclaimed now (one short transaction each); otherwise they are handed
        backward to the predecessor in O(1).  Raises UnknownRangeVersion for a
        version that was never registered or already finished.
        """

        def body(ctx):
            target = op if op is not None else self._find(ctx, ver)
            prev = ctx.read(target.orec, target.cells, PREV)
            nxt = ctx.read(target.orec, target.cells, NEXT)
            head = ctx.read(target.orec, target.cells, DHEAD)
            count = ctx.read(target.orec, target.cells, DCOUNT)
            ctx.write(prev.orec, prev.cells, NEXT, nxt)
            ctx.write(nxt.orec, nxt.cells, PREV, prev)
            ctx.free(target)
            if head is None:
                return None, 0
            if prev is self._head:
                return head, 0  # oldest query: the chain is ours now
            tail_cell = ctx.read(target.orec, target.cells, DTAIL)
            self._append_segment(ctx, prev, head, tail_cell, count)
            return None, count

        chain, handed_back = self._stm.execute(body, READ_WRITE, label="rqc_finish")
        counters = self._stm.session().counters
        if handed_back:
            counters["rqc.handoffs_backward"] += handed_back
        if chain is not None:
            nodes = []
            cell = chain
            while cell is not None:  # private after the unlink committed
                nodes.append(cell.node)
                cell = cell.cells[0]
            counters["rqc.retired_after_range"] += len(nodes)
            self._unstitch_each(nodes)

    def _find(self, ctx, ver):
        node = ctx.read(self._head.orec, self._head.cells, NEXT)
        while node is not self._tail:
            if node.ver == ver:
                return node
            node = ctx.read(node.orec, node.cells, NEXT)
        raise UnknownRangeVersion(ver)

    def _unstitch_each(self, nodes):
        # One short transaction per node keeps conflict windows small.
        skiplist = self._list
        for node in nodes:
            self._stm.execute(
                lambda ctx, n=node: skiplist.unstitch(ctx, n),
                READ_WRITE, label="rqc_unstitch",
            )

    # ---- quiescent helpers ------------------------------------------------

    def live_versions_unlocked(self):
        out = []
        node = self._head.cells[NEXT]
        while node is not self._tail:
            out.append(node.ver)
            node = node.cells[NEXT]
        return out

    def counter_unlocked(self):
        return self._counter[0]
