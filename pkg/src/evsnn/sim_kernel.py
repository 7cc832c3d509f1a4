"""Deterministic discrete-event kernel for the five-core SNN.

Events are int64 keys (see ``_events``) held in a binary heap; the input trace
is merged in from a pre-sorted key array. At equal timestamps the order is:
spike edges, falling clock edges, rising clock edges (neuron FSM steps),
arbiter clock edges; within a kind by core, neuron, then +1 before -1.

Clocks are not simulated edge by edge. A neuron gets a step event only when
its FSM has something to do; un-gated cycles in between are counted from the
cluster clock phase. Idle hardware therefore generates no events at all.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._events import (
    FALL,
    N_STATS,
    RISE,
    SPIKE,
    ST_COLLISIONS,
    ST_DUPLICATE_REQ,
    ST_EVENTS,
    ST_ILLEGAL,
    ST_MAX_WAKE_LATENCY,
    ST_OUTPUT_SPIKES,
    ST_SAME_TICK_PAIRS,
    ST_TRACE_LEN,
    heap_pop,
    spike_keys,
    split_key,
)
from ._jit import njit
from .core_model import Model, SpikeEvent
from .neuron_engine import (
    POTENTIAL_UPDATE2,
    ClusterClock,
    NeuronState,
    clock_ungate_on_falling_edge,
    cluster_power_report,
    deliver_ack,
    fsm_step,
    new_neurons,
    on_spike_edge,
    ungated_cycles_at,
)
from .synapse_engine import (
    ArbiterState,
    arbiter_tick,
    new_arbiters,
    pack_weight_table,
    raise_request,
    service_order_trace,
)

# params vector slots
P_NEURON = 0
P_ARBITER = 1
P_NCYC = 2
P_FRAME = 3
P_NFRAMES = 4
P_LAST = 5

OK = 0
HEAP_OVERFLOW = 1


class TraceError(ValueError):
    """Input trace rejected; ``code`` is UNSORTED_TRACE or TARGET_OUT_OF_RANGE."""

    def __init__(self, code: str, message: str, index: int | None = None):
        self.code = code
        self.index = index
        super().__init__(f"{code}: {message}")


@njit
def advance(nrn, clu, arb, pending, weights, offsets, params, in_keys, cursor, heap, hstate, fires_frame, trace, stats, t_end):
    """Process every event with timestamp < t_end. Returns a status code."""
    n_period = params[P_NEURON]
    a_period = params[P_ARBITER]
    n_cyc = params[P_NCYC]
    frame = params[P_FRAME]
    n_frames = params[P_NFRAMES]
    last = params[P_LAST]
    n_in = in_keys.shape[0]
    while True:
        has_heap = hstate[0] > 0
        has_in = cursor[0] < n_in
        if not has_heap and not has_in:
            return OK
        if has_heap and (not has_in or heap[0] <= in_keys[cursor[0]]):
            key = heap[0]
            from_heap = True
        else:
            key = in_keys[cursor[0]]
            from_heap = False
        t, kind, core, idx, polbit = split_key(key)
        if t >= t_end:
            return OK
        if from_heap:
            heap_pop(heap, hstate)
        else:
            cursor[0] += 1
        stats[ST_EVENTS] += 1
        g = offsets[core] + idx
        if kind == SPIKE:
            if core > 0:
                if nrn[g]["last_syn_time"] == t:
                    stats[ST_COLLISIONS] += 1
                nrn[g]["last_syn_time"] = t
            on_spike_edge(nrn, clu, heap, hstate, stats, g, 1 if polbit == 0 else -1, t, n_period)
        elif kind == FALL:
            clock_ungate_on_falling_edge(nrn, clu, heap, hstate, g, t, n_period)
        elif kind == RISE:
            if fsm_step(nrn, clu, heap, hstate, stats, g, t, n_period) == 1:
                f = t // frame
                if f >= n_frames:
                    f = n_frames - 1
                fires_frame[f, g] += 1
                if core == last:
                    stats[ST_OUTPUT_SPIKES] += 1
                    deliver_ack(nrn, clu, heap, hstate, g, t, n_period)
                else:
                    raise_request(arb, pending, heap, hstate, stats, core, idx, t, a_period)
        else:
            acked = arbiter_tick(arb, pending, weights, heap, hstate, stats, trace, core, t, a_period, n_cyc)
            if acked >= 0:
                deliver_ack(nrn, clu, heap, hstate, offsets[core] + acked, t, n_period)
        if hstate[1] != 0:
            return HEAP_OVERFLOW


# ---------------------------------------------------------------------------
# input traces


@dataclass(frozen=True)
class SpikeTrace:
    """Input spikes for layer 0 as parallel arrays (times in ticks)."""

    times: np.ndarray
    neurons: np.ndarray
    polarities: np.ndarray

    def __post_init__(self):
        for name in ("times", "neurons", "polarities"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))
        if not (self.times.shape == self.neurons.shape == self.polarities.shape):
            raise ValueError("trace arrays must have equal length")

    @classmethod
    def empty(cls) -> "SpikeTrace":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z)

    @classmethod
    def from_events(cls, events: Iterable[SpikeEvent]) -> "SpikeTrace":
        events = list(events)
        for ev in events:
            if ev.target_core != 0:
                raise TraceError("TARGET_OUT_OF_RANGE", f"input spikes must target core 0, got core {ev.target_core}")
        return cls(
            np.array([e.time for e in events], dtype=np.int64),
            np.array([e.target_neuron for e in events], dtype=np.int64),
            np.array([e.polarity for e in events], dtype=np.int64),
        )

    @classmethod
    def concat(cls, traces: Sequence["SpikeTrace"]) -> "SpikeTrace":
        if not traces:
            return cls.empty()
        return cls(
            np.concatenate([t.times for t in traces]),
            np.concatenate([t.neurons for t in traces]),
            np.concatenate([t.polarities for t in traces]),
        )

    def __len__(self):
        return int(self.times.shape[0])

    def sorted(self) -> "SpikeTrace":
        order = np.argsort(spike_keys(self.times, 0, self.neurons, self.polarities), kind="stable")
        return SpikeTrace(self.times[order], self.neurons[order], self.polarities[order])

    def events(self) -> list[SpikeEvent]:
        return [SpikeEvent(int(t), 0, int(n), int(p)) for t, n, p in zip(self.times, self.neurons, self.polarities)]


def tie_order(events: Iterable[SpikeEvent]) -> list[SpikeEvent]:
    """Deterministic processing order: time, core, neuron, then +1 before -1."""
    return sorted(events)


def _as_trace(trace) -> SpikeTrace:
    if trace is None:
        return SpikeTrace.empty()
    if isinstance(trace, SpikeTrace):
        return trace
    return SpikeTrace.from_events(trace)


def check_trace(trace: SpikeTrace, n_inputs: int) -> None:
    if len(trace) == 0:
        return
    if np.any(trace.times < 0):
        raise TraceError("UNSORTED_TRACE", "negative spike time", int(np.argmax(trace.times < 0)))
    back = np.flatnonzero(np.diff(trace.times) < 0)
    if back.size:
        i = int(back[0]) + 1
        raise TraceError("UNSORTED_TRACE", f"entry {i} at t={int(trace.times[i])} precedes its predecessor", i)
    bad = np.flatnonzero((trace.neurons < 0) | (trace.neurons >= n_inputs))
    if bad.size:
        i = int(bad[0])
        raise TraceError(
            "TARGET_OUT_OF_RANGE", f"entry {i}: channel {int(trace.neurons[i])} outside [0, {n_inputs})", i
        )
    badp = np.flatnonzero((trace.polarities != 1) & (trace.polarities != -1))
    if badp.size:
        i = int(badp[0])
        raise TraceError("TARGET_OUT_OF_RANGE", f"entry {i}: polarity must be +1 or -1", i)


# ---------------------------------------------------------------------------
# results


LEDGER_FIELDS = (
    "spikes_delivered",
    "sops",
    "neuron_cycles_ungated",
    "arbiter_cycles_running",
    "sram_reads",
    "wakeups",
    "lost_spikes",
    "requests_raised",
    "acks_issued",
)


@dataclass(frozen=True)
class ActivityLedger:
    """Run totals; ``per_layer[name]`` holds the same counter split by layer.

    Synapse-block counters (sops, sram_reads, arbiter cycles) are attributed
    to the layer that owns the block.
    """

    spikes_delivered: int = 0
    sops: int = 0
    neuron_cycles_ungated: int = 0
    arbiter_cycles_running: int = 0
    sram_reads: int = 0
    wakeups: int = 0
    lost_spikes: int = 0
    requests_raised: int = 0
    acks_issued: int = 0
    per_layer: dict = field(default_factory=dict, compare=False)

    def counters(self) -> dict:
        return {name: getattr(self, name) for name in LEDGER_FIELDS}

    def activity_total(self) -> int:
        return sum(self.counters().values())

    def to_dict(self) -> dict:
        out = self.counters()
        out["per_layer"] = {k: list(v) for k, v in self.per_layer.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityLedger":
        per_layer = {k: tuple(int(x) for x in v) for k, v in data.get("per_layer", {}).items()}
        return cls(**{k: int(data[k]) for k in LEDGER_FIELDS}, per_layer=per_layer)

    def __add__(self, other: "ActivityLedger") -> "ActivityLedger":
        per_layer = {}
        for k in set(self.per_layer) | set(other.per_layer):
            a, b = self.per_layer.get(k, ()), other.per_layer.get(k, ())
            n = max(len(a), len(b))
            per_layer[k] = tuple((a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n))
        return ActivityLedger(
            **{k: getattr(self, k) + getattr(other, k) for k in LEDGER_FIELDS}, per_layer=per_layer
        )


@dataclass(frozen=True)
class SimResult:
    ledger: ActivityLedger
    output_spike_counts: np.ndarray  # [frame, output neuron]
    layer_spike_counts: tuple  # per layer: [frame, neuron] fire counts
    duration: int
    frame_ticks: int
    conforming: bool
    starved: tuple  # per layer: indices whose outstanding request outlived a frame
    max_outstanding: tuple  # per layer: longest outstanding-request period per neuron
    max_req_to_ack: tuple  # per layer: longest Req-to-Ack latency per neuron (open ones run to the end)
    service_trace: np.ndarray  # rows of (time, block, neuron)
    collisions: int
    illegal_steps: int
    duplicate_reqs: int
    same_tick_pairs: int
    max_wake_latency: int
    events: int
    neuron_period: int
    arbiter_period: int
    cluster_rows: tuple = ()

    @property
    def n_frames(self) -> int:
        return int(self.output_spike_counts.shape[0])

    def services(self, block: int | None = None) -> list[tuple[int, int]]:
        return service_order_trace(self.service_trace, len(self.service_trace), block)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(sorted(self.ledger.to_dict().items())).encode())
        for arr in (self.output_spike_counts, self.service_trace, *self.layer_spike_counts, *self.max_outstanding):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.duration, self.conforming, self.collisions, self.illegal_steps, self.events)).encode())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# stepping simulator


class Simulator:
    """Owns the kernel state for one run; ``run_until`` may be called repeatedly."""

    def __init__(self, model: Model, duration: int, trace=None):
        cfg = model.config
        self.model = model
        self.duration = int(duration)
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        sizes = list(cfg.sizes)
        self.sizes = sizes
        self.offsets = np.zeros(8, dtype=np.int64)
        self.offsets[: len(sizes)] = np.cumsum([0] + sizes[:-1])
        self.nrn, self.clu = new_neurons(sizes, cfg.thresholds, cfg.cluster_size)
        self.arb, self.pending = new_arbiters(sizes)
        nblocks = len(sizes) - 1
        self.weights = pack_weight_table(model.signs(), nblocks)
        self.neuron_period = cfg.neuron_period
        self.arbiter_period = cfg.arbiter_period
        self.n_frames = max(1, -(-self.duration // cfg.frame_ticks))
        self.params = np.array(
            [self.neuron_period, self.arbiter_period, cfg.arbiter_cycles_per_request, cfg.frame_ticks, self.n_frames, len(sizes) - 1],
            dtype=np.int64,
        )
        total = int(sum(sizes))
        self.heap = np.zeros(2 * total + 2 * 256 * max(nblocks, 1) + 64, dtype=np.int64)
        self.hstate = np.zeros(2, dtype=np.int64)
        self.fires_frame = np.zeros((self.n_frames, total), dtype=np.int64)
        per_block = self.duration // (cfg.arbiter_cycles_per_request * self.arbiter_period) + 2
        self.trace = np.zeros((max(nblocks, 1) * per_block, 3), dtype=np.int64)
        self.stats = np.zeros(N_STATS, dtype=np.int64)
        self.cursor = np.zeros(1, dtype=np.int64)
        self.now = 0
        self.in_keys = np.zeros(0, dtype=np.int64)
        self.add_input(_as_trace(trace))

    def add_input(self, trace: SpikeTrace) -> None:
        """Queue more layer-0 input; spikes earlier than the current time are rejected."""
        check_trace(trace.sorted(), self.sizes[0])
        if len(trace) and int(trace.times.min()) < self.now:
            raise TraceError("UNSORTED_TRACE", "cannot inject spikes into the simulated past")
        keys = spike_keys(trace.times, 0, trace.neurons, trace.polarities)
        rest = self.in_keys[self.cursor[0]:]
        self.in_keys = np.sort(np.concatenate([rest, keys]), kind="stable")
        self.cursor[0] = 0

    def inject(self, time: int, neuron: int, polarity: int = 1) -> None:
        self.add_input(SpikeTrace(np.array([time]), np.array([neuron]), np.array([polarity])))

    def run_until(self, t_end: int) -> None:
        """Process all events strictly before ``t_end`` (capped at the run duration)."""
        t_end = min(int(t_end), self.duration)
        status = advance(
            self.nrn, self.clu, self.arb, self.pending, self.weights, self.offsets, self.params,
            self.in_keys, self.cursor, self.heap, self.hstate, self.fires_frame, self.trace, self.stats, t_end,
        )
        if status != OK:
            raise RuntimeError(f"kernel stopped with status {status} (event heap overflow)")
        self.now = max(self.now, t_end)

    def run(self) -> "SimResult":
        self.run_until(self.duration)
        return self.result()

    # -- inspection -----------------------------------------------------------

    def index(self, core: int, neuron: int) -> int:
        if not 0 <= neuron < self.sizes[core]:
            raise IndexError(f"neuron {neuron} outside core {core}")
        return int(self.offsets[core]) + neuron

    def neuron(self, core: int, neuron: int) -> NeuronState:
        return NeuronState.from_record(self.nrn[self.index(core, neuron)])

    def cluster(self, core: int, which: int = 0) -> ClusterClock:
        ids = np.flatnonzero(self.clu["layer"] == core)
        return ClusterClock.from_record(self.clu[ids[which]], self.neuron_period, self.now)

    def arbiter(self, block: int) -> ArbiterState:
        return ArbiterState.from_record(self.arb[block], self.pending[block])

    def layer_slice(self, layer: int) -> slice:
        start = int(self.offsets[layer])
        return slice(start, start + self.sizes[layer])

    # -- results --------------------------------------------------------------

    def ledger(self, t_end: int | None = None) -> ActivityLedger:
        t_end = self.now if t_end is None else t_end
        nrn = self.nrn
        nl = len(self.sizes)
        ungated = ungated_cycles_at(nrn, t_end, self.neuron_period)
        per = {name: [0] * nl for name in LEDGER_FIELDS}
        for layer in range(nl):
            s = self.layer_slice(layer)
            per["spikes_delivered"][layer] = int(nrn["delivered"][s].sum())
            per["neuron_cycles_ungated"][layer] = int(ungated[s].sum())
            per["wakeups"][layer] = int(nrn["wakeups"][s].sum())
            per["lost_spikes"][layer] = int(nrn["lost"][s].sum())
            per["requests_raised"][layer] = int(nrn["fires"][s].sum())
            per["acks_issued"][layer] = int(nrn["acks"][s].sum())
            if layer < nl - 1:
                per["sops"][layer] = int(self.arb[layer]["sops"])
                per["sram_reads"][layer] = int(self.arb[layer]["reads"])
                per["arbiter_cycles_running"][layer] = int(self.arb[layer]["cycles"])
        return ActivityLedger(
            **{name: int(sum(vals)) for name, vals in per.items()},
            per_layer={name: tuple(vals) for name, vals in per.items()},
        )

    def result(self) -> SimResult:
        t_end = self.now
        cfg = self.model.config
        nrn = self.nrn
        outstanding = nrn["max_demand"].copy()
        open_ = nrn["demand_since"] >= 0
        outstanding[open_] = np.maximum(outstanding[open_], t_end - nrn["demand_since"][open_])
        latency = nrn["max_latency"].copy()
        waiting = (nrn["req"] != 0) & (nrn["ack"] == 0)
        latency[waiting] = np.maximum(latency[waiting], t_end - nrn["req_time"][waiting])
        layers = range(len(self.sizes))
        starved = tuple(
            tuple(int(i) for i in np.flatnonzero(outstanding[self.layer_slice(l)] > cfg.frame_ticks))
            for l in layers
        )
        trace_len = int(self.stats[ST_TRACE_LEN])
        ledger = self.ledger(t_end)
        counts = tuple(self.fires_frame[:, self.layer_slice(l)].copy() for l in layers)
        no_starvation = not any(starved[: len(self.sizes) - 1])
        return SimResult(
            ledger=ledger,
            output_spike_counts=counts[-1],
            layer_spike_counts=counts,
            duration=self.duration,
            frame_ticks=cfg.frame_ticks,
            conforming=ledger.lost_spikes == 0 and no_starvation,
            starved=starved,
            max_outstanding=tuple(outstanding[self.layer_slice(l)].copy() for l in layers),
            max_req_to_ack=tuple(latency[self.layer_slice(l)].copy() for l in layers),
            service_trace=self.trace[:trace_len].copy(),
            collisions=int(self.stats[ST_COLLISIONS]),
            illegal_steps=int(self.stats[ST_ILLEGAL]),
            duplicate_reqs=int(self.stats[ST_DUPLICATE_REQ]),
            same_tick_pairs=int(self.stats[ST_SAME_TICK_PAIRS]),
            max_wake_latency=int(self.stats[ST_MAX_WAKE_LATENCY]),
            events=int(self.stats[ST_EVENTS]),
            neuron_period=self.neuron_period,
            arbiter_period=self.arbiter_period,
            cluster_rows=tuple(cluster_power_report(nrn, self.clu, t_end, self.neuron_period)),
        )

    def waiting_in_pu2(self) -> int:
        """Neurons in PotentialUpdate2 whose Ack has not yet arrived."""
        return int(np.count_nonzero((self.nrn["fsm"] == POTENTIAL_UPDATE2) & (self.nrn["ack"] == 0)))


_AUDIT: list[int] = []


def collision_audit() -> list[int]:
    """Collision counts of every run in this process (checked by the test suite)."""
    return _AUDIT


def run(model: Model, input_trace=None, duration: int = 0) -> SimResult:
    """Simulate ``input_trace`` (layer-0 spikes) for ``duration`` ticks."""
    trace = _as_trace(input_trace)
    check_trace(trace, model.config.sizes[0])
    sim = Simulator(model, duration, trace)
    result = sim.run()
    _AUDIT.append(result.collisions)
    return result
