"""Single-threaded reference map with the exact public semantics.

Sequential ground truth for randomized equivalence tests and for the
linearizability checker's state replay.  Sorted key list plus a dict; every
operation is the obvious textbook definition.
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right, insort


class OracleMap:
    __slots__ = ("_keys", "_vals")

    def __init__(self, items=()):
        self._vals = dict(items)
        self._keys = sorted(self._vals)

    def __len__(self):
        return len(self._keys)

    def copy(self):
        clone = OracleMap.__new__(OracleMap)
        clone._vals = dict(self._vals)
        clone._keys = list(self._keys)
        return clone

    def snapshot_key(self):
        """Hashable identity of the current contents."""
        return frozenset(self._vals.items())

    def items(self):
        return [(k, self._vals[k]) for k in self._keys]

    # ---- map API -----------------------------------------------------------

    def lookup(self, key):
        return self._vals.get(key)

    def insert(self, key, value):
        if key in self._vals:
            return False
        self._vals[key] = value
        insort(self._keys, key)
        return True

    def remove(self, key):
        if key not in self._vals:
            return False
        del self._vals[key]
        del self._keys[bisect_left(self._keys, key)]
        return True

    def ceil(self, key):
        i = bisect_left(self._keys, key)
        return self._keys[i] if i < len(self._keys) else None

    def succ(self, key):
        i = bisect_right(self._keys, key)
        return self._keys[i] if i < len(self._keys) else None

    def floor(self, key):
        i = bisect_right(self._keys, key)
        return self._keys[i - 1] if i > 0 else None

    def pred(self, key):
        i = bisect_left(self._keys, key)
        return self._keys[i - 1] if i > 0 else None

    def range(self, low, high):
        lo = bisect_left(self._keys, low)
        hi = bisect_right(self._keys, high)
        return {k: self._vals[k] for k in self._keys[lo:hi]}

    # ---- dispatch ------------------------------------------------------------

    def apply(self, op, args):
        """Run one named operation; range results normalize to sorted tuples
        so they compare stably against recorded history events."""
        result = getattr(self, op)(*args)
        if op == "range":
            return tuple(sorted(result.items()))
        return result


def oracle_apply(ops):
    """Sequential results of an operation sequence on a fresh map."""
    oracle = OracleMap()
    return [oracle.apply(op, args) for op, args in ops]
