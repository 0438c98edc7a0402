"""Full-structure invariant scan over a quiescent map.

Non-transactional walk asserting everything the composed structure promises:
index and ordered-sequence key sets identical, bidirectional link consistency
at every level, contiguous towers, sorted bottom level with deleted-only
duplicate runs, one-shot removal versions, and no logically deleted nodes left
stitched once everything has flushed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..skiplist import REM

_WALK_LIMIT = 10_000_000  # cycle guard for corrupted structures


@dataclass
class StructuralReport:
    population: int = 0
    leak_count: int = 0
    live_range_ops: int = 0
    chain_mean: float = 0.0
    chain_max: int = 0
    composition_equality: bool = True
    bidir_links: bool = True
    tower_contiguity: bool = True
    sortedness: bool = True
    rtime_write_once: bool = True
    no_live_range_ops: bool = True
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures


def scan_structure(map_):
    """Walk everything and report; requires no in-flight transactions."""
    if map_.stm.live_transactions():
        raise RuntimeError("structure scan requires quiescence")
    report = StructuralReport()
    fail = report.failures.append
    sl = map_.list

    # Per-level forward walks with backward-link verification.
    levels = []
    for level in range(sl.max_level):
        slot = 2 + 2 * level
        seen = []
        node = sl.head
        steps = 0
        ok = True
        while node is not sl.tail:
            nxt = node.cells[slot]
            if nxt is None or nxt.cells[slot - 1] is not node:
                ok = False
                break
            if nxt is not sl.tail:
                seen.append(nxt)
            node = nxt
            steps += 1
            if steps > _WALK_LIMIT:
                ok = False
                break
        if not ok:
            report.bidir_links = False
            fail("bidir_links: level %d broken near key %r" % (level, node.key))
            break
        levels.append(seen)

    if report.bidir_links:
        bottom = levels[0]
        report.population = sum(1 for n in bottom if n.cells[REM] is None)
        report.leak_count = len(bottom) - report.population

        # Tower contiguity: level L holds exactly the bottom nodes taller
        # than L, i.e. a node is stitched at all levels below its height.
        for level in range(1, sl.max_level):
            expect = {id(n) for n in bottom if n.height > level}
            actual = {id(n) for n in levels[level]}
            if expect != actual:
                report.tower_contiguity = False
                fail("tower_contiguity: level %d membership mismatch" % level)
                break

        # Sorted bottom level; equal keys only as deleted-then-last runs.
        for a, b in zip(bottom, bottom[1:]):
            if b.key < a.key:
                report.sortedness = False
                fail("sortedness: %r after %r" % (b.key, a.key))
                break
            if a.key == b.key and a.cells[REM] is None:
                report.sortedness = False
                fail("sortedness: live duplicate of %r not last" % a.key)
                break

        # Index and ordered sequence agree key-for-key, node-for-node.
        present = {}
        for n in bottom:
            if n.cells[REM] is None:
                present[n.key] = n
        indexed = {}
        duplicate_bucket_keys = False
        for bucket in map_.index.buckets:
            keys_here = set()
            entry = bucket.cells[0]
            while entry is not None:
                if entry.key in keys_here:
                    duplicate_bucket_keys = True
                keys_here.add(entry.key)
                indexed[entry.key] = entry.node
                entry = entry.cells[0]
        if duplicate_bucket_keys:
            report.composition_equality = False
            fail("composition: duplicate keys within a bucket chain")
        if indexed.keys() != present.keys():
            report.composition_equality = False
            extra = sorted(set(indexed) - set(present))[:5]
            missing = sorted(set(present) - set(indexed))[:5]
            fail("composition: key sets differ (index-only %r, list-only %r)"
                 % (extra, missing))
        else:
            for key, node in present.items():
                if indexed[key] is not node:
                    report.composition_equality = False
                    fail("composition: index binds %r to a different node" % key)
                    break

    chain_lengths = list(map_.index.chain_lengths_unlocked())
    if chain_lengths:
        report.chain_mean = sum(chain_lengths) / len(chain_lengths)
        report.chain_max = max(chain_lengths)

    report.rtime_write_once = map_.stats().get("rem_overwrite", 0) == 0
    if not report.rtime_write_once:
        fail("rtime_write_once: a removal version was written twice")

    report.live_range_ops = len(map_.rqc.live_versions_unlocked())
    report.no_live_range_ops = report.live_range_ops == 0
    if not report.no_live_range_ops:
        fail("range ops still registered at quiescence")

    if report.leak_count:
        fail("leak_count: %d deleted nodes still stitched" % report.leak_count)

    return report
