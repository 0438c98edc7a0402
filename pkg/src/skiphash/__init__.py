"""skiphash: a concurrent ordered map composing a transactional hash index
with a doubly linked skip list over a purpose-built STM, with two-path
linearizable range queries."""

from .coordinator import BUFFER_CAPACITY, RangeCoordinator, UnknownRangeVersion
from .hashmap import DEFAULT_BUCKET_COUNT, HashIndex, mix64
from .map import (DEFAULT_FAST_PATH_TRIES, FAST_ONLY, RANGE_MODES, SLOW_ONLY,
                  TWO_PATH, Session, SkipHash)
from .skiplist import (DEFAULT_MAX_LEVEL, HIGHEST, LOWEST, SkipList,
                       random_height)
from .stm import (NO_LOCAL_UNDO, READ_ONLY, READ_WRITE, STM, TRY_ONCE,
                  AbortedOnce, GlobalClock, Orec, TxnContext)

__version__ = "0.1.0"

__all__ = [
    "AbortedOnce", "BUFFER_CAPACITY", "DEFAULT_BUCKET_COUNT",
    "DEFAULT_FAST_PATH_TRIES", "DEFAULT_MAX_LEVEL", "FAST_ONLY", "GlobalClock",
    "HIGHEST", "HashIndex", "LOWEST", "NO_LOCAL_UNDO", "Orec", "RANGE_MODES",
    "READ_ONLY", "READ_WRITE", "RangeCoordinator", "STM", "SLOW_ONLY",
    "Session", "SkipHash", "SkipList", "TRY_ONCE", "TWO_PATH", "TxnContext",
    "UnknownRangeVersion", "mix64", "random_height",
]
