"""Transactional doubly linked skip list.

Node towers are arrays of (pred, succ) link pairs; level 0 is the full ordered
sequence and level L skips every node whose height is <= L.  Tower heights are
geometric with p = 1/2, so the expected height is 2 and stitching or
unstitching a node costs O(1) writes on average.

Logical deletion: a node's removal version (REM slot) is None while the node
is present.  Deleted nodes may stay stitched for a while so that in-flight
range queries can still traverse them; everyone else treats them as absent.

All link and removal-version access goes through a transaction context.  A
node's key, value, height and insertion version are immutable once the
inserting transaction commits, so they are read without instrumentation.
"""
from __future__ import annotations

from .stm import Orec

# cells layout: [REM, pred0, succ0, pred1, succ1, ...]
# pred slot of level L = 1 + 2L, succ slot = 2 + 2L.
REM = 0

DEFAULT_MAX_LEVEL = 20


class _Extreme:
    """Sentinel key ordered below (or above) every user key."""

    __slots__ = ("_name", "_high")

    def __init__(self, name, high):
        self._name = name
        self._high = high

    def __repr__(self):
        return self._name

    def __lt__(self, other):
        return other is not self and not self._high

    def __le__(self, other):
        return other is self or not self._high

    def __gt__(self, other):
        return other is not self and self._high

    def __ge__(self, other):
        return other is self or self._high


LOWEST = _Extreme("LOWEST", False)
HIGHEST = _Extreme("HIGHEST", True)


def random_height(rng, max_level=DEFAULT_MAX_LEVEL):
    """Geometric height in [1, max_level]: P(h=k) = 2**-k, remainder at max.

    Uses one bit of the draw per level, like flipping a fair coin until the
    first tail.
    """
    bits = rng.getrandbits(max_level - 1) if max_level > 1 else 0
    height = 1
    while bits & 1:
        height += 1
        bits >>= 1
    return height


class Node:
    __slots__ = ("key", "val", "height", "insert_version", "orec", "cells")

    def __init__(self, key, val, height, insert_version):
        self.key = key
        self.val = val
        self.height = height
        self.insert_version = insert_version
        self.orec = Orec()
        self.cells = [None] * (1 + 2 * height)

    def __repr__(self):
        state = "live" if self.cells[REM] is None else "dead@%s" % self.cells[REM]
        return "Node(%r, h=%d, %s)" % (self.key, self.height, state)


class SkipList:
    __slots__ = ("max_level", "head", "tail")

    def __init__(self, max_level=DEFAULT_MAX_LEVEL):
        if max_level < 1:
            raise ValueError("max_level must be >= 1")
        self.max_level = max_level
        self.head = Node(LOWEST, None, max_level, 0)
        self.tail = Node(HIGHEST, None, max_level, 0)
        for level in range(max_level):
            self.head.cells[2 + 2 * level] = self.tail
            self.tail.cells[1 + 2 * level] = self.head

    # ---- search ----------------------------------------------------------

    def _descend(self, ctx, key, strict):
        """Tower descent.  preds[L] is the rightmost node at level L whose key
        is < key (strict) or <= key (not strict); deleted nodes count."""
        preds = [None] * self.max_level
        node = self.head
        for level in range(self.max_level - 1, -1, -1):
            slot = 2 + 2 * level
            nxt = ctx.read(node.orec, node.cells, slot)
            if strict:
                while nxt.key < key:
                    node = nxt
                    nxt = ctx.read(node.orec, node.cells, slot)
            else:
                while nxt.key <= key:
                    node = nxt
                    nxt = ctx.read(node.orec, node.cells, slot)
            preds[level] = node
        return preds

    def first_at_or_after(self, ctx, key):
        """First stitched node with key >= key, deleted or not; may be tail."""
        pred = self._descend(ctx, key, True)[0]
        return ctx.read(pred.orec, pred.cells, 2)

    def ceil_node(self, ctx, key):
        """First logically present node with key >= key, else the tail."""
        node = self.first_at_or_after(ctx, key)
        while ctx.read(node.orec, node.cells, REM) is not None:
            node = ctx.read(node.orec, node.cells, 2)
        return node

    def pred_node(self, ctx, key):
        """Last logically present node with key < key, else the head."""
        node = self._descend(ctx, key, True)[0]
        while ctx.read(node.orec, node.cells, REM) is not None:
            node = ctx.read(node.orec, node.cells, 1)
        return node

    def next_present(self, ctx, node):
        """First logically present node after ``node``, else the tail."""
        node = ctx.read(node.orec, node.cells, 2)
        while ctx.read(node.orec, node.cells, REM) is not None:
            node = ctx.read(node.orec, node.cells, 2)
        return node

    def prev_present(self, ctx, node):
        """Last logically present node before ``node``, else the head."""
        node = ctx.read(node.orec, node.cells, 1)
        while ctx.read(node.orec, node.cells, REM) is not None:
            node = ctx.read(node.orec, node.cells, 1)
        return node

    # ---- mutation ---------------------------------------------------------

    def insert_optimized(self, ctx, key, val, height, insert_version=0):
        """Stitch a fresh node after the last node with a smaller key.

        Callers guarantee the key is absent, which lets this skip the
        equal-key probing a general insert would need.
        """
        preds = self._descend(ctx, key, True)
        return self._stitch(ctx, preds, key, val, height, insert_version)

    def insert_after_deleted(self, ctx, key, val, height, insert_version=0):
        """Stitch a fresh node after every stitched node with an equal key.

        Equal-key nodes, if any, must all be logically deleted (the caller
        establishes that by checking logical presence first).
        """
        preds = self._descend(ctx, key, False)
        return self._stitch(ctx, preds, key, val, height, insert_version)

    def _stitch(self, ctx, preds, key, val, height, insert_version):
        node = ctx.alloc(Node(key, val, height, insert_version))
        cells = node.cells
        for level in range(height):
            slot = 2 + 2 * level
            pred = preds[level]
            succ = ctx.read(pred.orec, pred.cells, slot)
            cells[slot - 1] = pred  # fresh node: plain writes
            cells[slot] = succ
            ctx.write(pred.orec, pred.cells, slot, node)
            ctx.write(succ.orec, succ.cells, slot - 1, node)
        return node

    def unstitch(self, ctx, node):
        """Splice a node out of every level of its tower and free it.

        Double links make this O(height) reads and writes with no traversal.
        The node's own orec is acquired as well, so the transaction writes
        every node it reads.
        """
        if node is self.head or node is self.tail:
            raise ValueError("sentinel nodes are never unstitched")
        ctx.acquire(node.orec)
        cells = node.cells
        for level in range(node.height):
            slot = 2 + 2 * level
            pred = cells[slot - 1]  # owned orec: in-place reads are ours
            succ = cells[slot]
            ctx.write(pred.orec, pred.cells, slot, succ)
            ctx.write(succ.orec, succ.cells, slot - 1, pred)
        ctx.free(node)

    # ---- quiescent helpers (no transaction; scanner/test use only) --------

    def iter_level_unlocked(self, level):
        node = self.head.cells[2 + 2 * level]
        while node is not self.tail:
            yield node
            node = node.cells[2 + 2 * level]

    def items_unlocked(self):
        for node in self.iter_level_unlocked(0):
            if node.cells[REM] is None:
                yield node.key, node.val
