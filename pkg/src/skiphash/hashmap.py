"""Transactional closed-addressing hash table mapping keys to skip list nodes.

Every operation must run inside a caller-supplied transaction.  Conflict
granularity is one orec per bucket, so transactions touching different chains
never conflict here.  The table never resizes; capacity is fixed at
construction.
"""
from __future__ import annotations

from .stm import Orec

_MASK64 = (1 << 64) - 1

# Smallest prime that keeps a table holding ~5 * 10**5 entries at or below 70%
# utilization; the conventional default for this map's headline configuration.
DEFAULT_BUCKET_COUNT = 714_341


def mix64(x):
    """Finalizer-style 64-bit mixer; well distributed for sequential keys."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def default_hash(key):
    return mix64(hash(key))


class Bucket:
    __slots__ = ("orec", "cells")  # cells[0]: first Entry or None

    def __init__(self):
        self.orec = Orec()
        self.cells = [None]


class Entry:
    """One chain link.  key and node are immutable; cells[0] is the next
    entry and is guarded by the owning bucket's orec."""

    __slots__ = ("key", "node", "cells")

    def __init__(self, key, node, nxt):
        self.key = key
        self.node = node
        self.cells = [nxt]


class HashIndex:
    __slots__ = ("buckets", "_hash")

    def __init__(self, bucket_count=DEFAULT_BUCKET_COUNT, hash_fn=None):
        if bucket_count < 1:
            raise ValueError("bucket_count must be positive")
        self.buckets = [Bucket() for _ in range(bucket_count)]
        self._hash = hash_fn if hash_fn is not None else default_hash

    @property
    def bucket_count(self):
        return len(self.buckets)

    def bucket_for(self, key):
        return self.buckets[self._hash(key) % len(self.buckets)]

    def get(self, ctx, key):
        """Node bound to key, or None.  O(1) expected reads."""
        bucket = self.bucket_for(key)
        entry = ctx.read(bucket.orec, bucket.cells, 0)
        while entry is not None:
            if entry.key == key:
                return entry.node
            entry = ctx.read(bucket.orec, entry.cells, 0)
        return None

    def insert(self, ctx, key, node):
        """Bind key -> node unless the key is already bound.

        Returns True on insertion, False when the key was present.  New
        entries prepend to the chain.
        """
        bucket = self.bucket_for(key)
        head = ctx.read(bucket.orec, bucket.cells, 0)
        entry = head
        while entry is not None:
            if entry.key == key:
                return False
            entry = ctx.read(bucket.orec, entry.cells, 0)
        fresh = ctx.alloc(Entry(key, node, head))
        ctx.write(bucket.orec, bucket.cells, 0, fresh)
        return True

    def remove(self, ctx, key):
        """Unbind key; the entry's storage goes to the reclaimer.

        Returns True when the key was bound, False otherwise.
        """
        bucket = self.bucket_for(key)
        orec = bucket.orec
        prev_cells = bucket.cells
        entry = ctx.read(orec, prev_cells, 0)
        while entry is not None:
            if entry.key == key:
                nxt = ctx.read(orec, entry.cells, 0)
                ctx.write(orec, prev_cells, 0, nxt)
                ctx.free(entry)
                return True
            prev_cells = entry.cells
            entry = ctx.read(orec, entry.cells, 0)
        return False

    # Non-transactional iteration for the quiescent structure scanner.
    def items_unlocked(self):
        for bucket in self.buckets:
            entry = bucket.cells[0]
            while entry is not None:
                yield entry.key, entry.node
                entry = entry.cells[0]

    def chain_lengths_unlocked(self):
        for bucket in self.buckets:
            n = 0
            entry = bucket.cells[0]
            while entry is not None:
                n += 1
                entry = entry.cells[0]
            yield n
