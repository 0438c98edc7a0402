"""Small-history linearizability checking against the sequential oracle.

The checker searches for a total order of the recorded operations that (a)
respects real time -- an operation that responded before another was invoked
must come first -- and (b) replays correctly on OracleMap.  Range results count
as atomic observations of the whole key set.

Any permutation ordered by invocation time respects real time, so a straight
replay in invocation order is tried first; concurrent histories from CPython
are close to sequential and almost always pass there.  Otherwise a depth-first
search over the real-time partial order runs, memoizing (linearized set,
oracle state) pairs.  Worst case is exponential; a node budget bounds it.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import List

from .oracle import OracleMap


@dataclass
class Linearized:
    order: List[int]  # event indices in linearization order

    def __bool__(self):
        return True


@dataclass
class CounterexampleWindow:
    """Deepest failure frontier: after ``linearized_prefix`` events were
    ordered, none of ``window`` (the minimal candidate set there) can go
    next."""

    linearized_prefix: int
    window: list = field(default_factory=list)

    def __bool__(self):
        return False


class BudgetExceeded(Exception):
    """The search passed its node limit before reaching a verdict."""


def check_linearizable(events, node_budget=500_000):
    n = len(events)
    if n == 0:
        return Linearized([])

    by_invocation = sorted(range(n), key=lambda i: events[i].t_invoke)

    oracle = OracleMap()
    greedy_ok = True
    for i in by_invocation:
        event = events[i]
        if oracle.apply(event.op, event.args) != event.result:
            greedy_ok = False
            break
    if greedy_ok:
        return Linearized(by_invocation)

    return _search(events, by_invocation, node_budget)


def _search(events, by_invocation, node_budget):
    n = len(events)
    memo = set()
    nodes = 0
    best_depth = -1
    best_window = []

    sys.setrecursionlimit(max(sys.getrecursionlimit(), 2 * n + 200))

    def candidates(remaining):
        # An op may linearize next iff no other remaining op responded before
        # it was invoked; with rmin the earliest remaining response, that is
        # exactly the remaining ops invoked at or before rmin.
        rmin = min(events[i].t_response for i in remaining)
        return [i for i in remaining if events[i].t_invoke <= rmin]

    def dfs(remaining, oracle, mask, depth):
        nonlocal nodes, best_depth, best_window
        if not remaining:
            return []
        cands = candidates(remaining)
        if depth > best_depth:
            best_depth = depth
            best_window = [events[i] for i in cands]
        for i in cands:
            nodes += 1
            if nodes > node_budget:
                raise BudgetExceeded(nodes)
            event = events[i]
            clone = oracle.copy()
            if clone.apply(event.op, event.args) != event.result:
                continue
            new_mask = mask | (1 << i)
            key = (new_mask, clone.snapshot_key())
            if key in memo:
                continue
            memo.add(key)
            tail = dfs([j for j in remaining if j != i], clone, new_mask, depth + 1)
            if tail is not None:
                tail.append(i)
                return tail
        return None

    order = dfs(by_invocation, OracleMap(), 0, 0)
    if order is None:
        return CounterexampleWindow(best_depth, best_window)
    order.reverse()
    return Linearized(order)
