"""Correctness harness: oracle, history recording, linearizability checking,
structural invariant scanning, and scheduling hooks."""

from .history import Event, HistoryRecorder, read_history, write_history
from .hooks import Gate, Hooks, Tripwire
from .linearize import (BudgetExceeded, CounterexampleWindow, Linearized,
                        check_linearizable)
from .oracle import OracleMap, oracle_apply
from .structure import StructuralReport, scan_structure

__all__ = [
    "BudgetExceeded", "CounterexampleWindow", "Event", "Gate",
    "HistoryRecorder", "Hooks", "Linearized", "OracleMap", "StructuralReport",
    "Tripwire", "check_linearizable", "oracle_apply", "read_history",
    "scan_structure", "write_history",
]
