import random

import pytest

from skiphash import STM
from skiphash.skiplist import (HIGHEST, LOWEST, REM, Node, SkipList,
                               random_height)


def _keys_at_level(sl, level):
    return [n.key for n in sl.iter_level_unlocked(level)]


def _mark_deleted(stm, node, version=1):
    stm.execute(lambda ctx: ctx.write(node.orec, node.cells, REM, version))


def _insert(stm, sl, key, height=1, val=None, after_deleted=False):
    val = key if val is None else val

    def body(ctx):
        if after_deleted:
            return sl.insert_after_deleted(ctx, key, val, height)
        return sl.insert_optimized(ctx, key, val, height)

    return stm.execute(body)


class TestSentinelOrdering:
    def test_extremes_against_arbitrary_keys(self):
        assert LOWEST < -2**63 and LOWEST <= 0 and not LOWEST > 5
        assert HIGHEST > 2**63 and HIGHEST >= 0 and not HIGHEST < 5
        assert 5 < HIGHEST and 5 > LOWEST and LOWEST < HIGHEST
        assert not HIGHEST < LOWEST
        assert HIGHEST >= HIGHEST and LOWEST <= LOWEST
        assert "zzz" < HIGHEST and "" > LOWEST  # any ordered key domain


class TestRandomHeight:
    def test_distribution_shape(self):
        rng = random.Random(1234)
        draws = [random_height(rng, 20) for _ in range(100_000)]
        assert min(draws) == 1
        assert max(draws) <= 20
        p1 = draws.count(1) / len(draws)
        assert 0.48 <= p1 <= 0.52
        mean = sum(draws) / len(draws)
        assert 1.93 <= mean <= 2.07

    def test_height_one_when_single_level(self):
        rng = random.Random(0)
        assert all(random_height(rng, 1) == 1 for _ in range(100))

    def test_mass_collects_at_max_level(self):
        rng = random.Random(5)
        draws = [random_height(rng, 3) for _ in range(50_000)]
        p3 = draws.count(3) / len(draws)
        assert 0.23 <= p3 <= 0.27  # 2**-(m-1) = 1/4 at m=3


class TestSearch:
    def test_ceil_on_empty_list_is_tail(self, stm):
        sl = SkipList(max_level=4)
        assert stm.execute(lambda ctx: sl.ceil_node(ctx, 7)) is sl.tail

    def test_ceil_lands_on_next_key(self, stm):
        sl = SkipList(max_level=4)
        _insert(stm, sl, 3)
        n9 = _insert(stm, sl, 9)
        assert stm.execute(lambda ctx: sl.ceil_node(ctx, 4)) is n9
        assert stm.execute(lambda ctx: sl.ceil_node(ctx, 9)) is n9
        assert stm.execute(lambda ctx: sl.ceil_node(ctx, 10)) is sl.tail

    def test_ceil_skips_logically_deleted(self, stm):
        sl = SkipList(max_level=4)
        n5 = _insert(stm, sl, 5)
        n8 = _insert(stm, sl, 8)
        _mark_deleted(stm, n5)
        assert stm.execute(lambda ctx: sl.ceil_node(ctx, 5)) is n8

    def test_pred_node_and_present_walks(self, stm):
        sl = SkipList(max_level=4)
        n3 = _insert(stm, sl, 3)
        n5 = _insert(stm, sl, 5)
        n9 = _insert(stm, sl, 9)
        assert stm.execute(lambda ctx: sl.pred_node(ctx, 9)) is n5
        assert stm.execute(lambda ctx: sl.pred_node(ctx, 3)) is sl.head
        _mark_deleted(stm, n5)
        assert stm.execute(lambda ctx: sl.pred_node(ctx, 9)) is n3
        assert stm.execute(lambda ctx: sl.next_present(ctx, n3)) is n9
        assert stm.execute(lambda ctx: sl.prev_present(ctx, n9)) is n3


class TestInsert:
    def test_insert_into_empty_links_all_levels(self, stm):
        sl = SkipList(max_level=5)
        node = _insert(stm, sl, 5, height=3)
        for level in range(3):
            slot = 2 + 2 * level
            assert sl.head.cells[slot] is node
            assert node.cells[slot] is sl.tail
            assert node.cells[slot - 1] is sl.head
            assert sl.tail.cells[slot - 1] is node
        for level in range(3, 5):
            assert sl.head.cells[2 + 2 * level] is sl.tail

    def test_insert_between_untouched_upper_levels(self, stm):
        sl = SkipList(max_level=5)
        n3 = _insert(stm, sl, 3, height=3)
        n9 = _insert(stm, sl, 9, height=3)
        n5 = _insert(stm, sl, 5, height=1)
        assert _keys_at_level(sl, 0) == [3, 5, 9]
        assert _keys_at_level(sl, 1) == [3, 9]
        assert n3.cells[2] is n5 and n5.cells[2] is n9
        assert n9.cells[1] is n5 and n5.cells[1] is n3
        assert n3.cells[4] is n9  # level 1 bypasses the short node

    def test_thousand_random_inserts_sorted(self, stm):
        sl = SkipList(max_level=12)
        rng = random.Random(99)
        keys = rng.sample(range(100_000), 1000)
        for k in keys:
            _insert(stm, sl, k, height=random_height(rng, 12))
        assert _keys_at_level(sl, 0) == sorted(keys)

    def test_insert_after_single_deleted_duplicate(self, stm):
        sl = SkipList(max_level=4)
        dead = _insert(stm, sl, 5, val="old")
        _mark_deleted(stm, dead)
        fresh = _insert(stm, sl, 5, val="new", after_deleted=True)
        bottom = list(sl.iter_level_unlocked(0))
        assert bottom == [dead, fresh]

    def test_insert_after_two_deleted_duplicates(self, stm):
        sl = SkipList(max_level=4)
        first = _insert(stm, sl, 5, val="a")
        _mark_deleted(stm, first)
        second = _insert(stm, sl, 5, val="b", after_deleted=True)
        _mark_deleted(stm, second, version=2)
        third = _insert(stm, sl, 5, val="c", after_deleted=True)
        assert list(sl.iter_level_unlocked(0)) == [first, second, third]

    def test_insert_after_deleted_degenerates_to_optimized(self, stm):
        a = SkipList(max_level=6)
        b = SkipList(max_level=6)
        rng_a, rng_b = random.Random(5), random.Random(5)
        for k in (10, 4, 7, 1):
            _insert(stm, a, k, height=random_height(rng_a, 6))
        for k in (10, 4, 7, 1):
            _insert(stm, b, k, height=random_height(rng_b, 6),
                    after_deleted=True)
        for level in range(6):
            assert _keys_at_level(a, level) == _keys_at_level(b, level)


class TestUnstitch:
    def test_unstitch_sole_node_restores_sentinels(self, stm):
        sl = SkipList(max_level=4)
        node = _insert(stm, sl, 5, height=4)
        stm.execute(lambda ctx: sl.unstitch(ctx, node))
        for level in range(4):
            slot = 2 + 2 * level
            assert sl.head.cells[slot] is sl.tail
            assert sl.tail.cells[slot - 1] is sl.head

    def test_unstitch_middle_relinks_neighbors(self, stm):
        sl = SkipList(max_level=4)
        n3 = _insert(stm, sl, 3)
        n5 = _insert(stm, sl, 5)
        n9 = _insert(stm, sl, 9)
        stm.execute(lambda ctx: sl.unstitch(ctx, n5))
        assert n3.cells[2] is n9 and n9.cells[1] is n3
        assert _keys_at_level(sl, 0) == [3, 9]

    def test_unstitch_tall_node_relinks_every_level(self, stm):
        sl = SkipList(max_level=20)
        around = [_insert(stm, sl, k, height=random_height(random.Random(k), 20))
                  for k in (1, 3, 7, 9)]
        tall = _insert(stm, sl, 5, height=20)
        stm.execute(lambda ctx: sl.unstitch(ctx, tall))
        for level in range(20):
            walked = list(sl.iter_level_unlocked(level))
            assert tall not in walked
            node = sl.head
            while node is not sl.tail:
                nxt = node.cells[2 + 2 * level]
                assert nxt.cells[1 + 2 * level] is node
                node = nxt
        assert _keys_at_level(sl, 0) == [1, 3, 7, 9]
        assert around[0].key == 1

    def test_unstitch_rejects_sentinels(self, stm):
        sl = SkipList(max_level=2)
        with pytest.raises(ValueError):
            stm.execute(lambda ctx: sl.unstitch(ctx, sl.head))

    def test_mean_unstitch_writes_tracks_expected_height(self, stm):
        # Two link writes per level and E[height] = 2 make the average
        # physical removal cost about four writes, independent of size.
        sl = SkipList(max_level=16)
        rng = random.Random(77)
        nodes = []
        for k in rng.sample(range(50_000), 2000):
            nodes.append(_insert(stm, sl, k, height=random_height(rng, 16)))

        def unstitch_counting(node):
            def body(ctx):
                sl.unstitch(ctx, node)
                return ctx.n_writes

            return stm.execute(body)

        writes = [unstitch_counting(n) for n in nodes]
        mean = sum(writes) / len(writes)
        assert 3.7 <= mean <= 4.3


class TestTxnVisibility:
    def test_insert_rolled_back_on_conflict_leaves_no_trace(self, stm, fast_switching):
        from conftest import Box, in_new_thread

        sl = SkipList(max_level=4)
        other = Box(0)
        first = []

        def body(ctx):
            sl.insert_optimized(ctx, 42, "v", 2)
            if not first:
                first.append(1)
                in_new_thread(lambda: stm.execute(
                    lambda c: c.write(other.orec, other.cells, 0, 1)))
                ctx.read(other.orec, other.cells, 0)  # forces abort + retry
            return True

        assert stm.execute(body)
        assert _keys_at_level(sl, 0) == [42]  # exactly one stitched copy
        assert stm.reclaimer.discarded_allocs == 1
