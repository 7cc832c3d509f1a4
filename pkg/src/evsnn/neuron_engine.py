"""Integrate-and-fire neuron block with spike-driven clock and power gating.

Each neuron has asynchronous wake-up flops (one per spike polarity, plus the
clock-enable and clock-ungate flops) in front of a three-state synchronous FSM.
All neurons of a cluster share one clock generator that runs only while at
least one member is awake.

State lives in numpy record arrays so the same functions run under numba and
under the interpreter. The dataclasses at the bottom are read-only snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._events import (
    FALL,
    RISE,
    ST_ILLEGAL,
    ST_MAX_WAKE_LATENCY,
    ST_SAME_TICK_PAIRS,
    heap_push,
    make_key,
    next_fall,
    next_rise,
)
from ._jit import njit

START_STANDBY = 0
POTENTIAL_UPDATE = 1
POTENTIAL_UPDATE2 = 2
FSM_NAMES = ("StartStandby", "PotentialUpdate", "PotentialUpdate2")

NEURON_DTYPE = np.dtype(
    [
        ("layer", np.int32),
        ("local", np.int32),
        ("cluster", np.int32),
        ("th", np.int64),
        ("pot", np.int64),
        ("fsm", np.int8),
        ("ff_p1", np.uint8),
        ("ff_m1", np.uint8),
        ("clk_en", np.uint8),
        ("clk_ug", np.uint8),
        ("pg", np.uint8),
        ("req", np.uint8),
        ("ack", np.uint8),
        ("rise_pending", np.uint8),
        ("fall_pending", np.uint8),
        ("first_rise", np.int64),
        ("wake_time", np.int64),
        ("last_in_time", np.int64),
        ("last_syn_time", np.int64),
        ("req_time", np.int64),
        ("demand_since", np.int64),
        ("max_demand", np.int64),
        ("max_latency", np.int64),
        ("ungated_cycles", np.int64),
        ("wakeups", np.int64),
        ("delivered", np.int64),
        ("lost", np.int64),
        ("integrated", np.int64),
        ("fires", np.int64),
        ("acks", np.int64),
    ]
)

CLUSTER_DTYPE = np.dtype(
    [
        ("layer", np.int32),
        ("running", np.uint8),
        ("anchor", np.int64),
        ("active", np.int64),
        ("starts", np.int64),
    ]
)


def new_neurons(sizes, thresholds, cluster_size=0):
    """Allocate neuron and cluster records for a network, all idle and power-gated."""
    total = int(sum(sizes))
    nrn = np.zeros(total, dtype=NEURON_DTYPE)
    clusters = []
    g = 0
    for layer, (n, th) in enumerate(zip(sizes, thresholds)):
        per = n if cluster_size <= 0 else min(cluster_size, n)
        first_cluster = len(clusters)
        clusters.extend([layer] * (-(-n // per)))
        for i in range(n):
            rec = nrn[g]
            rec["layer"] = layer
            rec["local"] = i
            rec["cluster"] = first_cluster + i // per
            rec["th"] = th
            g += 1
    nrn["pg"] = 1
    for name in ("first_rise", "wake_time", "last_in_time", "last_syn_time", "req_time", "demand_since"):
        nrn[name] = -1
    clu = np.zeros(len(clusters), dtype=CLUSTER_DTYPE)
    clu["layer"] = clusters
    return nrn, clu


@njit
def schedule_rise(nrn, clu, heap, hstate, g, now, strict, period):
    """Queue this neuron's FSM step at the next rising edge of its cluster clock."""
    n = nrn[g]
    if n["rise_pending"] != 0:
        return
    r = next_rise(clu[n["cluster"]]["anchor"], period, now, strict)
    heap_push(heap, hstate, make_key(r, RISE, n["layer"], n["local"], 0))
    n["rise_pending"] = 1


@njit
def on_spike_edge(nrn, clu, heap, hstate, stats, g, polarity, now, period):
    """Latch an incoming spike edge; wake the neuron and its cluster clock if idle.

    Returns False when the edge was lost because the matching flop still held
    an unconsumed spike.
    """
    n = nrn[g]
    n["delivered"] += 1
    if polarity > 0:
        if n["ff_p1"] != 0:
            n["lost"] += 1
            return False
        n["ff_p1"] = 1
        if n["ff_m1"] != 0 and n["last_in_time"] == now:
            stats[ST_SAME_TICK_PAIRS] += 1
    else:
        if n["ff_m1"] != 0:
            n["lost"] += 1
            return False
        n["ff_m1"] = 1
        if n["ff_p1"] != 0 and n["last_in_time"] == now:
            stats[ST_SAME_TICK_PAIRS] += 1
    n["last_in_time"] = now
    if n["clk_en"] == 0:
        n["clk_en"] = 1
        n["wakeups"] += 1
        n["wake_time"] = now
        c = clu[n["cluster"]]
        c["active"] += 1
        if c["running"] == 0:
            # fresh start: the generator begins with a full low phase at `now`
            c["running"] = 1
            c["anchor"] = now
            c["starts"] += 1
        f = next_fall(c["anchor"], period, now)
        heap_push(heap, hstate, make_key(f, FALL, n["layer"], n["local"], 0))
        n["fall_pending"] = 1
    elif n["clk_ug"] != 0:
        # awake and clocked: the FSM sees the flop on its next rising edge
        schedule_rise(nrn, clu, heap, hstate, g, now, False, period)
    return True


@njit
def clock_ungate_on_falling_edge(nrn, clu, heap, hstate, g, now, period):
    """First falling edge after wake-up: un-gate the FSM clock and its power switch."""
    n = nrn[g]
    n["fall_pending"] = 0
    if n["clk_en"] == 0 or n["clk_ug"] != 0:
        return
    n["clk_ug"] = 1
    n["pg"] = 0
    n["first_rise"] = next_rise(clu[n["cluster"]]["anchor"], period, now, True)
    schedule_rise(nrn, clu, heap, hstate, g, now, True, period)


@njit
def _consume_one(n):
    # +1 flop wins when both are pending; the -1 waits for the next pass
    if n["ff_p1"] != 0:
        n["pot"] += 1
        n["ff_p1"] = 0
        n["integrated"] += 1
    elif n["ff_m1"] != 0:
        n["pot"] -= 1
        n["ff_m1"] = 0
        n["integrated"] += 1


@njit
def _track_demand(n, now):
    demanding = n["req"] != 0 or n["pot"] >= n["th"]
    if demanding:
        if n["demand_since"] < 0:
            n["demand_since"] = now
    elif n["demand_since"] >= 0:
        span = now - n["demand_since"]
        if span > n["max_demand"]:
            n["max_demand"] = span
        n["demand_since"] = -1


@njit
def _regate(nrn, clu, g, now, period):
    n = nrn[g]
    n["clk_en"] = 0
    n["clk_ug"] = 0
    n["pg"] = 1
    n["ungated_cycles"] += (now - n["first_rise"]) // period + 1
    n["first_rise"] = -1
    c = clu[n["cluster"]]
    c["active"] -= 1
    if c["active"] == 0:
        c["running"] = 0


@njit
def fsm_step(nrn, clu, heap, hstate, stats, g, now, period):
    """One rising clock edge of a neuron FSM.

    Returns 1 when the step fired (Req asserted), else 0.
    """
    n = nrn[g]
    n["rise_pending"] = 0
    if n["pg"] != 0 or n["clk_ug"] == 0:
        stats[ST_ILLEGAL] += 1
        return 0
    if n["wake_time"] >= 0:
        latency = now - n["wake_time"]
        if latency > stats[ST_MAX_WAKE_LATENCY]:
            stats[ST_MAX_WAKE_LATENCY] = latency
        n["wake_time"] = -1
    fired = 0
    state = n["fsm"]
    if state == START_STANDBY:
        if n["ff_p1"] != 0 or n["ff_m1"] != 0 or n["pot"] >= n["th"]:
            n["fsm"] = POTENTIAL_UPDATE
            schedule_rise(nrn, clu, heap, hstate, g, now, True, period)
        else:
            _regate(nrn, clu, g, now, period)
    elif state == POTENTIAL_UPDATE:
        _consume_one(n)
        if n["pot"] < n["th"]:
            n["fsm"] = START_STANDBY
            schedule_rise(nrn, clu, heap, hstate, g, now, True, period)
        else:
            # equals a reset to zero whenever the potential sits exactly at threshold
            n["pot"] -= n["th"]
            n["req"] = 1
            n["req_time"] = now
            n["fires"] += 1
            n["fsm"] = POTENTIAL_UPDATE2
            fired = 1
            if n["ff_p1"] != 0 or n["ff_m1"] != 0:
                schedule_rise(nrn, clu, heap, hstate, g, now, True, period)
    else:
        _consume_one(n)
        if n["ack"] != 0:
            n["ack"] = 0
            n["req"] = 0
            n["fsm"] = START_STANDBY
            schedule_rise(nrn, clu, heap, hstate, g, now, True, period)
        elif n["ff_p1"] != 0 or n["ff_m1"] != 0:
            schedule_rise(nrn, clu, heap, hstate, g, now, True, period)
    _track_demand(n, now)
    return fired


@njit
def deliver_ack(nrn, clu, heap, hstate, g, now, period):
    """Ack_i from the arbiter (or the output counter); seen on the next rising edge."""
    n = nrn[g]
    n["ack"] = 1
    n["acks"] += 1
    latency = now - n["req_time"]
    if latency > n["max_latency"]:
        n["max_latency"] = latency
    schedule_rise(nrn, clu, heap, hstate, g, now, True, period)


# ---------------------------------------------------------------------------
# snapshots and reports


@dataclass(frozen=True)
class WakeupFlops:
    ff_p1: bool
    ff_m1: bool
    ff_clk_en: bool
    ff_clk_ug: bool


@dataclass(frozen=True)
class NeuronState:
    potential: int
    threshold: int
    fsm: str
    power_gated: bool
    req_asserted: bool
    wake: WakeupFlops

    @classmethod
    def from_record(cls, rec) -> "NeuronState":
        return cls(
            potential=int(rec["pot"]),
            threshold=int(rec["th"]),
            fsm=FSM_NAMES[int(rec["fsm"])],
            power_gated=bool(rec["pg"]),
            req_asserted=bool(rec["req"]),
            wake=WakeupFlops(bool(rec["ff_p1"]), bool(rec["ff_m1"]), bool(rec["clk_en"]), bool(rec["clk_ug"])),
        )


@dataclass(frozen=True)
class ClusterClock:
    running: bool
    period_ticks: int
    next_falling_edge: int | None
    member_active_count: int

    @classmethod
    def from_record(cls, rec, period: int, now: int) -> "ClusterClock":
        running = bool(rec["running"])
        nxt = int(next_fall(int(rec["anchor"]), period, now)) if running else None
        return cls(running, period, nxt, int(rec["active"]))


def ungated_cycles_at(nrn, t_end: int, period: int) -> np.ndarray:
    """Per-neuron un-gated FSM cycles in [0, t_end), counting neurons still awake."""
    cycles = nrn["ungated_cycles"].copy()
    open_ = (nrn["clk_ug"] != 0) & (nrn["first_rise"] >= 0) & (nrn["first_rise"] < t_end)
    cycles[open_] += (t_end - 1 - nrn["first_rise"][open_]) // period + 1
    return cycles


@dataclass(frozen=True)
class ClusterPowerRow:
    layer: int
    cluster: int
    neurons: int
    ungated_cycles: int
    gated_cycles: int
    power_gated_cycles: int


def cluster_power_report(nrn, clu, t_end: int, period: int) -> list[ClusterPowerRow]:
    """Per-cluster split of neuron-cycles into un-gated, gated and power-gated.

    A wake-up costs one clock-gated but powered cycle (the single-cycle power
    switch turn-on); every other cycle of a neuron is either clocked or fully
    power-gated. Each neuron contributes ceil(t_end / period) cycles in total.
    """
    total = -(-t_end // period)
    ungated = ungated_cycles_at(nrn, t_end, period)
    rows = []
    for c in range(len(clu)):
        members = nrn["cluster"] == c
        count = int(members.sum())
        ug = int(ungated[members].sum())
        gated = int(nrn["wakeups"][members].sum())
        rows.append(
            ClusterPowerRow(
                layer=int(clu[c]["layer"]),
                cluster=c,
                neurons=count,
                ungated_cycles=ug,
                gated_cycles=gated,
                power_gated_cycles=total * count - ug - gated,
            )
        )
    return rows
