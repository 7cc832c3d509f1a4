"""Synapse block: fixed-priority arbiter, single-port weight SRAM, spike generator.

A Req from any neuron of the core starts the block's local clock. Each
service takes ``n_cyc`` arbiter cycles: Select (lowest pending index wins),
ReadRow (one wordline), EmitSpikes (one spike per column, all at the same
tick) and AckNeuron. The clock stops as soon as no Req is pending.

With fewer than four cycles per service the stages share cycles; with more,
the extra cycles are spent in ReadRow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._events import ARB, SPIKE, ST_DUPLICATE_REQ, ST_TRACE_LEN, ST_TRACE_OVERFLOW, heap_push, make_key
from ._jit import njit

IDLE = 0
SELECT = 1
READ_ROW = 2
EMIT_SPIKES = 3
ACK_NEURON = 4
ARBITER_FSM_NAMES = ("Idle", "Select", "ReadRow", "EmitSpikes", "AckNeuron")

ARBITER_DTYPE = np.dtype(
    [
        ("running", np.uint8),
        ("anchor", np.int64),
        ("fsm", np.int8),
        ("cycle", np.int32),
        ("serving", np.int32),
        ("pcount", np.int32),
        ("rows", np.int32),
        ("cols", np.int32),
        ("cycles", np.int64),
        ("reads", np.int64),
        ("sops", np.int64),
        ("acks", np.int64),
        ("starts", np.int64),
    ]
)


def new_arbiters(sizes):
    """One arbiter per synapse block (every layer but the last)."""
    nblocks = max(len(sizes) - 1, 0)
    arb = np.zeros(max(nblocks, 1), dtype=ARBITER_DTYPE)
    arb["serving"] = -1
    for b in range(nblocks):
        arb[b]["rows"] = sizes[b]
        arb[b]["cols"] = sizes[b + 1]
    pending = np.zeros((max(nblocks, 1), 256), dtype=np.uint8)
    return arb, pending


def pack_weight_table(signs_list, nblocks):
    """Dense int8 table [block, row, col] of +/-1 weights used by the emitter."""
    table = np.zeros((max(nblocks, 1), 256, 256), dtype=np.int8)
    for b, signs in enumerate(signs_list):
        table[b, : signs.shape[0], : signs.shape[1]] = signs
    return table


@njit
def stage_cycles(n_cyc):
    read = 2 if n_cyc >= 2 else 1
    emit = n_cyc - 1 if n_cyc - 1 > read else read
    return read, emit


@njit
def raise_request(arb, pending, heap, hstate, stats, block, neuron, now, period):
    """Set Req_neuron; start the local clock if the arbiter is idle.

    Returns False (and counts a DUPLICATE_REQ) when the line was already high.
    """
    if pending[block, neuron] != 0:
        stats[ST_DUPLICATE_REQ] += 1
        return False
    pending[block, neuron] = 1
    a = arb[block]
    a["pcount"] += 1
    if a["running"] == 0:
        a["running"] = 1
        a["anchor"] = now
        a["fsm"] = IDLE
        a["cycle"] = 0
        a["starts"] += 1
        first = now + period - period // 2
        heap_push(heap, hstate, make_key(first, ARB, block, 0, 0))
    return True


@njit
def arbiter_tick(arb, pending, weights, heap, hstate, stats, trace, block, now, period, n_cyc):
    """Advance the arbiter FSM by one clock cycle.

    Emitted spikes are queued as events at ``now`` for core ``block + 1``.
    Returns the index of the neuron acknowledged in this cycle, or -1.
    """
    a = arb[block]
    a["cycles"] += 1
    if a["cycle"] == 0:
        a["cycle"] = 1
        a["fsm"] = SELECT
        sel = -1
        for i in range(a["rows"]):
            if pending[block, i] != 0:
                sel = i
                break
        a["serving"] = sel
    else:
        a["cycle"] += 1
    c = a["cycle"]
    read, emit = stage_cycles(n_cyc)
    row = a["serving"]
    if c == read:
        a["fsm"] = READ_ROW
        a["reads"] += 1
    if c == emit:
        a["fsm"] = EMIT_SPIKES
        cols = a["cols"]
        for j in range(cols):
            polbit = 0 if weights[block, row, j] > 0 else 1
            heap_push(heap, hstate, make_key(now, SPIKE, block + 1, j, polbit))
        a["sops"] += cols
    acked = -1
    if c == n_cyc:
        a["fsm"] = ACK_NEURON
        pending[block, row] = 0
        a["pcount"] -= 1
        a["acks"] += 1
        a["cycle"] = 0
        a["serving"] = -1
        acked = row
        k = stats[ST_TRACE_LEN]
        if k < trace.shape[0]:
            trace[k, 0] = now
            trace[k, 1] = block
            trace[k, 2] = row
            stats[ST_TRACE_LEN] = k + 1
        else:
            stats[ST_TRACE_OVERFLOW] += 1
        if a["pcount"] == 0:
            a["running"] = 0
            a["fsm"] = IDLE
            return acked
    heap_push(heap, hstate, make_key(now + period, ARB, block, 0, 0))
    return acked


@dataclass(frozen=True)
class ArbiterState:
    fsm: str
    pending_reqs: tuple[int, ...]
    serving: int | None
    clock_running: bool
    cycles_in_service: int

    @classmethod
    def from_record(cls, rec, pending_row) -> "ArbiterState":
        rows = int(rec["rows"])
        serving = int(rec["serving"])
        return cls(
            fsm=ARBITER_FSM_NAMES[int(rec["fsm"])],
            pending_reqs=tuple(int(i) for i in np.flatnonzero(pending_row[:rows])),
            serving=serving if serving >= 0 else None,
            clock_running=bool(rec["running"]),
            cycles_in_service=int(rec["cycle"]),
        )


def service_order_trace(trace: np.ndarray, length: int, block: int | None = None) -> list[tuple[int, int]]:
    """(time, served neuron) per Ack, in time order; optionally for one block."""
    rows = trace[:length]
    if block is not None:
        rows = rows[rows[:, 1] == block]
    return [(int(t), int(i)) for t, _, i in rows]
