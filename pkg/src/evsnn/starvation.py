"""Arbiter starvation analysis.

Each synapse block can serve ``f_clk_a * t_frame / n_cyc_a`` requests per
frame, and layer ``i`` raises about ``n_spk * n_nrn / TH`` of them. When the
demand exceeds the service rate, the fixed-priority arbiter keeps serving low
indices and the highest-index neuron waits forever. This module sweeps
thresholds and arbiter clocks over that inequality and checks the prediction
against the event simulator.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core_model import Model, NetworkConfig, WeightMatrix, period_ticks, validate_config
from .sim_kernel import SimResult, SpikeTrace, run

BOUNDARY_BAND = 0.05


@dataclass(frozen=True)
class LayerLoad:
    n_spk: float  # incoming spikes per frame per neuron
    n_nrn: int
    threshold: int

    def __post_init__(self):
        if self.n_spk < 0 or self.n_nrn < 0:
            raise ValueError("n_spk and n_nrn must be >= 0")
        if self.threshold < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")

    def with_threshold(self, threshold: int) -> "LayerLoad":
        return LayerLoad(self.n_spk, self.n_nrn, int(threshold))


def n_req(load: LayerLoad) -> float:
    """Requests per frame raised by one layer."""
    return load.n_spk * load.n_nrn / load.threshold


def n_serve(f_clk_a: float, t_frame_s: float, n_cyc_a: int) -> float:
    """Requests per frame one arbiter can acknowledge."""
    if n_cyc_a < 1:
        raise ValueError("n_cyc_a must be >= 1")
    return f_clk_a * t_frame_s / n_cyc_a


@dataclass(frozen=True)
class SweepPoint:
    thresholds: tuple[int, ...]
    f_clk_a: float
    n_cyc_a: int
    feasible: bool
    margin: float
    n_req_max: float = 0.0
    n_serve: float = 0.0

    @property
    def relative_margin(self) -> float:
        """Margin as a fraction of the service rate."""
        return self.margin / self.n_serve if self.n_serve > 0 else float("-inf")

    def in_boundary_band(self, band: float = BOUNDARY_BAND) -> bool:
        return abs(self.relative_margin) <= band


def evaluate(loads: Sequence[LayerLoad], f_clk_a: float, n_cyc_a: int, t_frame_s: float) -> SweepPoint:
    """Classify one operating point; ``loads`` covers the layers that own a synapse block."""
    reqs = [n_req(l) for l in loads]
    worst = max(reqs, default=0.0)
    serve = n_serve(f_clk_a, t_frame_s, n_cyc_a)
    margin = serve - worst
    return SweepPoint(tuple(l.threshold for l in loads), float(f_clk_a), int(n_cyc_a), margin >= 0, margin, worst, serve)


@dataclass(frozen=True)
class SweepResult:
    points: list[SweepPoint]
    recommended: list[SweepPoint] = field(default_factory=list)

    def to_csv(self) -> str:
        return sweep_csv(self.points)


def _recommend(points: list[SweepPoint]) -> list[SweepPoint]:
    feasible = [p for p in points if p.feasible]
    if not feasible:
        return []
    f_min = min(p.f_clk_a for p in feasible)
    at_f = [p for p in feasible if p.f_clk_a == f_min]
    th_min = min(max(p.thresholds) for p in at_f)
    return [p for p in at_f if max(p.thresholds) == th_min]


def sweep(
    loads: Sequence[LayerLoad],
    th_ranges: Sequence[Iterable[int]],
    f_ranges: Iterable[float],
    n_cyc_a: int = 4,
    t_frame_s: float = 0.08,
    coupled: bool = False,
) -> SweepResult:
    """Classify every (threshold vector, arbiter clock) combination.

    ``th_ranges`` holds one range per load. With ``coupled`` the first range
    is applied to every layer at once. Points come back in grid order:
    thresholds vary slowest, the clock fastest.
    """
    th_ranges = [list(r) for r in th_ranges]
    f_values = list(f_ranges)
    if not loads or not f_values or any(len(r) == 0 for r in th_ranges):
        raise ValueError("sweep ranges must be nonempty")
    if coupled:
        grid = [(th,) * len(loads) for th in th_ranges[0]]
    else:
        if len(th_ranges) != len(loads):
            raise ValueError(f"need {len(loads)} threshold ranges, got {len(th_ranges)}")
        grid = itertools.product(*th_ranges)
    points = []
    for ths in grid:
        layer_loads = [l.with_threshold(th) for l, th in zip(loads, ths)]
        for f in f_values:
            points.append(evaluate(layer_loads, f, n_cyc_a, t_frame_s))
    return SweepResult(points, _recommend(points))


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    n_layers = max((len(p.thresholds) for p in points), default=0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"th_{i}" for i in range(n_layers)] + ["f_clk_a_hz", "n_cyc_a", "n_req_max", "n_serve", "margin", "feasible"])
    for p in points:
        writer.writerow(
            [*p.thresholds, f"{p.f_clk_a:g}", p.n_cyc_a, f"{p.n_req_max:.6g}", f"{p.n_serve:.6g}", f"{p.margin:.6g}", int(p.feasible)]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# loads for deeper layers


def loads_from_ledger(config: NetworkConfig, result: SimResult) -> list[LayerLoad]:
    """Measured loads: spikes that actually reached each neuron, per frame."""
    delivered = result.ledger.per_layer["spikes_delivered"]
    frames = result.duration / config.frame_ticks
    return [
        LayerLoad(delivered[i] / frames / n if frames and n else 0.0, n, th)
        for i, (n, th) in enumerate(zip(config.sizes[:-1], config.thresholds[:-1]))
    ]


def loads_from_oracle(config: NetworkConfig, activations: Sequence[np.ndarray]) -> list[LayerLoad]:
    """Estimated loads from capped BNN activations.

    ``activations[i]`` are the spike counts per frame of layer ``i`` (inputs
    for ``i = 0``), one row per window. Choosing ``n_spk = TH * mean(a)``
    makes the request count equal the activation total of the layer.
    """
    loads = []
    for i, (n, th) in enumerate(zip(config.sizes[:-1], config.thresholds[:-1])):
        mean = float(np.mean(activations[i])) if np.size(activations[i]) else 0.0
        loads.append(LayerLoad(th * mean, n, th))
    return loads


def propagate_loads(config: NetworkConfig, bnn_out, mode: str = "estimate", result: SimResult | None = None) -> list[LayerLoad]:
    """Loads for every layer that owns a synapse block.

    ``mode`` is ``"estimate"`` (from ``bnn_out``, a BnnOutput) or ``"ledger"``
    (from a previous simulation ``result``).
    """
    if mode == "ledger":
        if result is None:
            raise ValueError("ledger mode needs a simulation result")
        return loads_from_ledger(config, result)
    if mode == "estimate":
        return loads_from_oracle(config, bnn_out.activations)
    raise ValueError(f"unknown load mode {mode!r}")


# ---------------------------------------------------------------------------
# simulation cross-check


@dataclass(frozen=True)
class Verification:
    point: SweepPoint
    predicted_starved: bool
    simulated_starved: bool
    in_band: bool
    evidence: dict

    @property
    def agrees(self) -> bool:
        return self.predicted_starved == self.simulated_starved


def lowest_priority_latency(result: SimResult, layer: int) -> tuple[int, int]:
    """(neuron, longest Req-to-Ack latency) of the highest-index neuron that requested."""
    fired = result.layer_spike_counts[layer].sum(axis=0)
    latency = result.max_req_to_ack[layer]
    requested = np.flatnonzero((fired > 0) | (latency > 0))
    if requested.size == 0:
        return -1, 0
    idx = int(requested[-1])
    return idx, int(latency[idx])


def simulated_starvation(result: SimResult, layers: Sequence[int] | None = None) -> tuple[bool, dict]:
    """Starved if the lowest-priority requester in any block waited over a frame."""
    layers = range(len(result.layer_spike_counts) - 1) if layers is None else layers
    evidence = {}
    starved = False
    for layer in layers:
        idx, lat = lowest_priority_latency(result, layer)
        evidence[f"layer_{layer}"] = {"neuron": idx, "max_req_to_ack": lat}
        starved |= lat > result.frame_ticks
    return starved, evidence


def verify_against_sim(point: SweepPoint, model: Model, trace: SpikeTrace, duration: int, band: float = BOUNDARY_BAND) -> Verification:
    """Run ``trace`` on ``model`` and compare observed starvation with the prediction."""
    result = run(model, trace, duration)
    starved, evidence = simulated_starvation(result)
    evidence["services"] = len(result.service_trace)
    evidence["lost_spikes"] = result.ledger.lost_spikes
    return Verification(point, not point.feasible, starved, point.in_boundary_band(band), evidence)


def single_block_case(load: LayerLoad, f_clk_a: float, n_cyc_a: int = 4, frame_ticks: int = 80_000, n_frames: int = 3, n_out: int = 2):
    """A model and steady trace that realize ``load`` on one synapse block.

    Layer 0 gets ``n_spk`` evenly spaced spikes per frame on every neuron and
    feeds a small all-(+1) output layer whose Reqs are acknowledged at once.
    Returns (model, trace, duration, point).
    """
    from .rate_coding import steady_trace

    config = NetworkConfig.from_sizes(
        [load.n_nrn, n_out],
        [load.threshold, 1],
        arbiter_clock_hz=f_clk_a,
        arbiter_cycles_per_request=n_cyc_a,
        frame_ticks=frame_ticks,
    )
    weights = [WeightMatrix.from_signs(np.ones((load.n_nrn, n_out), dtype=np.int8))]
    model = validate_config(config, weights)
    trace = steady_trace(np.full(load.n_nrn, int(round(load.n_spk))), frame_ticks, n_frames)
    # The simulator ticks at the rounded clock, so predict with the same clock.
    f_eff = 1e6 / period_ticks(f_clk_a)
    point = evaluate([load], f_eff, n_cyc_a, frame_ticks / 1e6)
    return model, trace, frame_ticks * n_frames, point
