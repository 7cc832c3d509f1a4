"""Rate coding between k-bit BNN activations and per-frame spike counts.

Features arrive as 16 channels per frame. The classifier input is a window of
the current frame plus the previous 15, flattened age-major
(``index = age * 16 + channel``, age 0 = current frame). An activation value
``v`` becomes ``v`` evenly spaced +1 spikes inside one frame.

The BNN reference divides each pre-activation by the receiving layer's
threshold (floor) and clamps hidden activations to ``[0, 2^k - 1]``. This is
the integer behaviour of an IF neuron at steady state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._jit import NUMBA_ENABLED, njit
from .core_model import ConfigError, Model
from .sim_kernel import SimResult, SpikeTrace

N_CHANNELS = 16
HISTORY = 15
WINDOW = N_CHANNELS * (HISTORY + 1)
DEFAULT_BURST_GAP = 50


@dataclass(frozen=True)
class FeatureFrame:
    values: np.ndarray

    def __init__(self, values, activation_bits: int = 6):
        arr = np.asarray(values, dtype=np.int64)
        cap = (1 << activation_bits) - 1
        if arr.shape != (N_CHANNELS,):
            raise ValueError(f"a feature frame has {N_CHANNELS} channels, got shape {arr.shape}")
        if arr.min(initial=0) < 0 or arr.max(initial=0) > cap:
            raise ValueError(f"feature values must lie in [0, {cap}]")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class InputWindow:
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("input window must be 1-D")
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return int(self.values.shape[0])

    @classmethod
    def from_frames(cls, frames: Sequence[FeatureFrame], index: int) -> "InputWindow":
        """Window ending at ``frames[index]``; frames before the stream start are zero."""
        out = np.zeros(WINDOW, dtype=np.int64)
        for age in range(HISTORY + 1):
            j = index - age
            if j >= 0:
                out[age * N_CHANNELS:(age + 1) * N_CHANNELS] = frames[j].values
        return cls(out)


def sliding_windows(frames: Sequence[FeatureFrame]) -> list[InputWindow]:
    """One window per frame; consecutive windows differ by a one-frame shift."""
    return [InputWindow.from_frames(frames, i) for i in range(len(frames))]


# ---------------------------------------------------------------------------
# encoding


@njit
def _encode_loop(values, frame_ticks, frame_index, burst_gap):
    n = 0
    for v in values:
        if v > 0:
            n += v
    times = np.empty(n, dtype=np.int64)
    neurons = np.empty(n, dtype=np.int64)
    base = frame_index * frame_ticks
    k = 0
    for j in range(values.shape[0]):
        v = values[j]
        for s in range(1, v + 1):
            if burst_gap > 0:
                times[k] = base + (s - 1) * burst_gap
            else:
                times[k] = base + (s * frame_ticks) // (v + 1)
            neurons[k] = j
            k += 1
    return times, neurons


def _encode_numpy(values, frame_ticks, frame_index, burst_gap):
    values = np.clip(values, 0, None)
    neurons = np.repeat(np.arange(values.shape[0], dtype=np.int64), values)
    # s runs 1..v within each neuron's block
    starts = np.repeat(np.cumsum(values) - values, values)
    s = np.arange(neurons.shape[0], dtype=np.int64) - starts + 1
    base = frame_index * frame_ticks
    if burst_gap > 0:
        times = base + (s - 1) * burst_gap
    else:
        times = base + (s * frame_ticks) // (values[neurons] + 1)
    return times.astype(np.int64), neurons


def encode_values(values, frame_ticks: int, frame_index: int = 0, burst: bool = False, burst_gap: int = DEFAULT_BURST_GAP) -> SpikeTrace:
    """Spike trace for one frame: input j gets ``values[j]`` +1 spikes.

    Uniform mode spaces them ``frame_ticks / (v + 1)`` apart starting one
    spacing into the frame. Burst mode packs them at the frame start,
    ``burst_gap`` ticks apart.
    """
    values = np.ascontiguousarray(values, dtype=np.int64)
    if values.min(initial=0) < 0:
        raise ValueError("activation values must be non-negative")
    gap = burst_gap if burst else 0
    if NUMBA_ENABLED:
        times, neurons = _encode_loop(values, frame_ticks, frame_index, gap)
    else:
        times, neurons = _encode_numpy(values, frame_ticks, frame_index, gap)
    return SpikeTrace(times, neurons, np.ones_like(times)).sorted()


def encode(window: InputWindow, frame_ticks: int, frame_index: int = 0, burst: bool = False) -> SpikeTrace:
    return encode_values(window.values, frame_ticks, frame_index, burst)


def encode_stream(windows: Sequence[InputWindow], frame_ticks: int, burst: bool = False) -> SpikeTrace:
    """Concatenate per-frame encodings, window i occupying frame i."""
    parts = [encode(w, frame_ticks, i, burst) for i, w in enumerate(windows)]
    return SpikeTrace.concat(parts).sorted()


def steady_trace(values, frame_ticks: int, n_frames: int, burst: bool = False) -> SpikeTrace:
    """The same input vector repeated for ``n_frames`` frames."""
    parts = [encode_values(values, frame_ticks, f, burst) for f in range(n_frames)]
    return SpikeTrace.concat(parts).sorted()


# ---------------------------------------------------------------------------
# BNN reference


@dataclass(frozen=True)
class BnnModel:
    weights: tuple  # +/-1 int8 matrices, one per synapse block
    thresholds: tuple
    activation_bits: int = 6

    @classmethod
    def from_model(cls, model: Model) -> "BnnModel":
        cfg = model.config
        return cls(tuple(model.signs()), cfg.thresholds, cfg.activation_bits)

    @property
    def cap(self) -> int:
        return (1 << self.activation_bits) - 1

    @property
    def sizes(self) -> tuple:
        if not self.weights:
            return (None,)
        return tuple(w.shape[0] for w in self.weights) + (self.weights[-1].shape[1],)


@dataclass(frozen=True)
class BnnOutput:
    activations: tuple  # per layer spike-count equivalents; output layer unclamped
    scores: np.ndarray  # raw output-layer pre-activation (input counts for a 1-layer net)
    predicted: int


@njit
def _forward_loop(x, table, sizes, ths, cap, out):
    """Batch forward pass; ``out[b, layer, i]`` gets activations, row L holds scores."""
    nl = sizes.shape[0]
    B = x.shape[0]
    for b in range(B):
        for i in range(sizes[0]):
            v = x[b, i]
            a = v // ths[0] if v > 0 else 0
            if nl > 1 and a > cap:
                a = cap
            out[b, 0, i] = a
        for layer in range(1, nl):
            for j in range(sizes[layer]):
                pre = 0
                for i in range(sizes[layer - 1]):
                    pre += table[layer - 1, i, j] * out[b, layer - 1, i]
                out[b, nl, j] = pre
                a = pre // ths[layer] if pre > 0 else 0
                if layer < nl - 1 and a > cap:
                    a = cap
                out[b, layer, j] = a
    return out


def _forward_numpy(x, weights, ths, cap):
    nl = len(ths)
    x = np.asarray(x, dtype=np.int64)
    a = np.maximum(x, 0) // ths[0]
    if nl > 1:
        a = np.minimum(a, cap)
    acts = [a]
    scores = x
    for layer in range(1, nl):
        pre = acts[-1] @ weights[layer - 1].astype(np.int64)
        scores = pre
        a = np.maximum(pre, 0) // ths[layer]
        if layer < nl - 1:
            a = np.minimum(a, cap)
        acts.append(a)
    return acts, scores


def bnn_forward_batch(bnn: BnnModel, inputs) -> tuple[list[np.ndarray], np.ndarray]:
    """Forward many input vectors at once; returns per-layer [B, n] arrays and scores."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.int64))
    ths = np.asarray(bnn.thresholds, dtype=np.int64)
    nl = len(ths)
    if bnn.weights and x.shape[1] != bnn.weights[0].shape[0]:
        raise ConfigError(f"input length {x.shape[1]} does not match {bnn.weights[0].shape[0]} inputs")
    for i in range(1, len(bnn.weights)):
        if bnn.weights[i].shape[0] != bnn.weights[i - 1].shape[1]:
            raise ConfigError(f"layer {i}: weight shapes do not chain")
    if len(bnn.weights) != nl - 1:
        raise ConfigError(f"{nl} thresholds need {nl - 1} weight matrices")
    if not NUMBA_ENABLED:
        return _forward_numpy(x, bnn.weights, ths, bnn.cap)
    sizes = np.array([x.shape[1]] + [w.shape[1] for w in bnn.weights], dtype=np.int64)
    width = int(sizes.max())
    table = np.zeros((max(nl - 1, 1), width, width), dtype=np.int64)
    for i, w in enumerate(bnn.weights):
        table[i, : w.shape[0], : w.shape[1]] = w
    out = np.zeros((x.shape[0], nl + 1, width), dtype=np.int64)
    _forward_loop(x, table, sizes, ths, bnn.cap, out)
    acts = [out[:, l, : sizes[l]].copy() for l in range(nl)]
    scores = out[:, nl, : sizes[-1]].copy() if nl > 1 else x.copy()
    return acts, scores


def bnn_forward(bnn: BnnModel, window) -> BnnOutput:
    values = window.values if isinstance(window, InputWindow) else np.asarray(window)
    acts, scores = bnn_forward_batch(bnn, values[None, :])
    s = scores[0]
    return BnnOutput(tuple(a[0] for a in acts), s, int(np.argmax(s)))


def map_thresholds(weights: Sequence[np.ndarray], calibration_inputs, activation_bits: int = 6, first: int = 1) -> tuple:
    """Per-layer thresholds keeping every neuron at or below 2^k - 1 spikes/frame.

    Layer by layer, the threshold is the smallest integer for which the largest
    calibration pre-activation, divided by it and rounded up, stays within the
    cap. Rounding up covers the IF neuron's steady-state count, which is the
    floor or the ceiling of that ratio.
    """
    cap = (1 << activation_bits) - 1
    x = np.atleast_2d(np.asarray(calibration_inputs, dtype=np.int64))
    a = np.minimum(np.maximum(x, 0) // first, cap)
    ths = [first]
    for w in weights:
        pre = a @ np.asarray(w, dtype=np.int64)
        peak = int(pre.max(initial=0))
        th = max(1, -(-peak // cap))
        ths.append(th)
        a = np.minimum(np.maximum(pre, 0) // th, cap)
    return tuple(ths)


# ---------------------------------------------------------------------------
# SNN vs BNN


def depth_tolerance(layer: int) -> int:
    """Allowed |SNN - BNN| at a layer: residues accumulate one count per layer."""
    return layer


@dataclass(frozen=True)
class NeuronComparison:
    layer: int
    neuron: int
    snn: int
    bnn: int
    tolerance: int

    @property
    def deviation(self) -> int:
        return abs(self.snn - self.bnn)

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    cap: int
    frame: int

    @property
    def total(self) -> int:
        return len(self.rows)

    @property
    def passed(self) -> int:
        return sum(r.passed for r in self.rows)

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.total if self.rows else 1.0

    @property
    def ok(self) -> bool:
        return self.passed == self.total and not self.cap_violations

    @property
    def cap_violations(self) -> list:
        # the output layer is a plain counter, so the cap binds hidden layers only
        last = max((r.layer for r in self.rows), default=0)
        return [r for r in self.rows if r.layer < last and r.snn > self.cap]

    def max_deviation(self, layer: int) -> int:
        return max((r.deviation for r in self.rows if r.layer == layer), default=0)

    def explain(self) -> list[str]:
        notes = []
        if self.cap_violations:
            worst = max(self.cap_violations, key=lambda r: r.snn)
            notes.append(
                f"{len(self.cap_violations)} hidden neurons exceed the {self.cap} spikes/frame cap "
                f"(worst: layer {worst.layer} neuron {worst.neuron} with {worst.snn}); thresholds are too low "
                "for this input, so clamped BNN activations cannot match"
            )
        failed = [r for r in self.rows if not r.passed]
        if failed:
            notes.append(f"{len(failed)} of {self.total} neurons outside tolerance")
        return notes


def compare_snn_to_oracle(
    result: SimResult,
    bnn_out: BnnOutput,
    frame: int | None = None,
    tolerance: int | Callable[[int], int] = depth_tolerance,
    activation_bits: int = 6,
) -> ComparisonReport:
    """Per-neuron comparison of one frame's SNN fire counts with BNN activations."""
    frame = result.n_frames - 1 if frame is None else frame
    tol = tolerance if callable(tolerance) else (lambda _layer, t=int(tolerance): t)
    rows = []
    for layer, counts in enumerate(result.layer_spike_counts):
        ref = bnn_out.activations[layer]
        for i in range(counts.shape[1]):
            rows.append(NeuronComparison(layer, i, int(counts[frame, i]), int(ref[i]), int(tol(layer))))
    return ComparisonReport(tuple(rows), (1 << activation_bits) - 1, frame)


@dataclass(frozen=True)
class Decision:
    label: int
    totals: np.ndarray
    no_spike: bool


def decode(output_counts) -> Decision:
    """Argmax of output spikes summed over the frames given; ties go to the lowest class."""
    counts = np.atleast_2d(np.asarray(output_counts, dtype=np.int64))
    if counts.size == 0:
        raise ValueError("decode needs at least one frame of output counts")
    totals = counts.sum(axis=0)
    return Decision(int(np.argmax(totals)), totals, bool(totals.max() == 0))
