"""Readers and writers for configs, weights, traces, features and BNN models.

Network configs are JSON. Weight files hold one or more matrices, each a
16-byte little-endian header (magic ``EVSW``, format version, rows, cols)
followed by the rows packed MSB-first, 16 bytes per 128 columns. Traces and
feature files are plain CSV-like text with a version line.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_model import Model, NetworkConfig, WeightMatrix, validate_config
from .rate_coding import N_CHANNELS, BnnModel, FeatureFrame
from .sim_kernel import SpikeTrace, TraceError

CONFIG_VERSION = 1
WEIGHT_MAGIC = b"EVSW"
WEIGHT_VERSION = 1
BNN_MAGIC = b"EVSB"
BNN_VERSION = 1
TRACE_HEADER = "# evsnn-trace v1"
FEATURE_HEADER = "# evsnn-features v1"

_WEIGHT_HEADER = struct.Struct("<4sHHII")  # magic, version, reserved, rows, cols
_BNN_HEADER = struct.Struct("<4sHHH6x")  # magic, version, activation_bits, n_thresholds, padding


class FormatError(ValueError):
    """A file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, path, message: str, line: int | None = None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# network config


_CONFIG_SCALARS = (
    "neuron_clock_hz",
    "arbiter_clock_hz",
    "arbiter_cycles_per_request",
    "frame_ticks",
    "activation_bits",
    "cluster_size",
    "allow_extended_layers",
)


def config_to_dict(config: NetworkConfig) -> dict:
    data = {"format_version": CONFIG_VERSION, "layers": list(config.sizes), "thresholds": list(config.thresholds)}
    for name in _CONFIG_SCALARS:
        data[name] = getattr(config, name)
    if config.power:
        data["power"] = dict(config.power)
    return data


def config_from_dict(data: dict, path="<config>") -> NetworkConfig:
    if not isinstance(data, dict):
        raise FormatError(path, "config must be a JSON object")
    version = data.get("format_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise FormatError(path, f"unsupported config format_version {version}")
    unknown = set(data) - {"format_version", "layers", "thresholds", "power", *_CONFIG_SCALARS}
    if unknown:
        raise FormatError(path, f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("layers", "thresholds"):
        if key not in data:
            raise FormatError(path, f"missing required key {key!r}")
    sizes, ths = data["layers"], data["thresholds"]
    if not all(isinstance(v, int) for v in list(sizes) + list(ths)):
        raise FormatError(path, "layers and thresholds must be lists of integers")
    kwargs = {k: data[k] for k in _CONFIG_SCALARS if k in data}
    kwargs["power"] = dict(data.get("power", {}))
    return NetworkConfig.from_sizes(sizes, ths, **kwargs)


def save_config(config: NetworkConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


def load_config(path) -> NetworkConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.msg, exc.lineno) from None
    return config_from_dict(data, path)


# ---------------------------------------------------------------------------
# weights


def weights_to_bytes(weights: Sequence[WeightMatrix]) -> bytes:
    out = bytearray()
    for w in weights:
        out += _WEIGHT_HEADER.pack(WEIGHT_MAGIC, WEIGHT_VERSION, 0, w.rows, w.cols)
        out += w.bits.tobytes()
    return bytes(out)


def weights_from_bytes(data: bytes, path="<weights>") -> list[WeightMatrix]:
    mats = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < _WEIGHT_HEADER.size:
            raise FormatError(path, f"truncated header at byte {pos}")
        magic, version, _, rows, cols = _WEIGHT_HEADER.unpack_from(data, pos)
        if magic != WEIGHT_MAGIC:
            raise FormatError(path, f"bad magic {magic!r} at byte {pos}")
        if version != WEIGHT_VERSION:
            raise FormatError(path, f"unsupported weight format version {version}")
        pos += _WEIGHT_HEADER.size
        stride = WeightMatrix.row_stride(cols)
        size = rows * stride
        if len(data) - pos < size:
            raise FormatError(path, f"matrix {len(mats)} ({rows}x{cols}) truncated")
        bits = np.frombuffer(data, dtype=np.uint8, count=size, offset=pos).reshape(rows, stride)
        mats.append(WeightMatrix(rows, cols, bits.copy()))
        pos += size
    return mats


def save_weights(weights: Sequence[WeightMatrix], path) -> None:
    Path(path).write_bytes(weights_to_bytes(weights))


def load_weights(path) -> list[WeightMatrix]:
    return weights_from_bytes(Path(path).read_bytes(), path)


def load_model(config_path, weights_path=None) -> Model:
    config = load_config(config_path)
    weights = load_weights(weights_path) if weights_path else []
    return validate_config(config, weights)


# ---------------------------------------------------------------------------
# BNN model file


def save_bnn(bnn: BnnModel, path) -> None:
    head = _BNN_HEADER.pack(BNN_MAGIC, BNN_VERSION, bnn.activation_bits, len(bnn.thresholds))
    ths = struct.pack(f"<{len(bnn.thresholds)}I", *bnn.thresholds)
    body = weights_to_bytes([WeightMatrix.from_signs(w) for w in bnn.weights])
    Path(path).write_bytes(head + ths + body)


def load_bnn(path) -> BnnModel:
    data = Path(path).read_bytes()
    if len(data) < _BNN_HEADER.size:
        raise FormatError(path, "truncated BNN header")
    magic, version, bits, n = _BNN_HEADER.unpack_from(data, 0)
    if magic != BNN_MAGIC:
        raise FormatError(path, f"bad magic {magic!r}")
    if version != BNN_VERSION:
        raise FormatError(path, f"unsupported BNN format version {version}")
    pos = _BNN_HEADER.size
    if len(data) < pos + 4 * n:
        raise FormatError(path, "truncated threshold list")
    ths = struct.unpack_from(f"<{n}I", data, pos)
    mats = weights_from_bytes(data[pos + 4 * n :], path)
    if len(mats) != max(n - 1, 0):
        raise FormatError(path, f"{n} thresholds need {n - 1} weight matrices, found {len(mats)}")
    return BnnModel(tuple(m.to_signs() for m in mats), tuple(int(t) for t in ths), int(bits))


# ---------------------------------------------------------------------------
# text formats


def _data_lines(text: str, path, header: str, column_line: str):
    """Yield (line number, stripped line) for data lines after the version header.

    A completely empty file has no data lines.
    """
    lines = text.splitlines()
    if not text.strip():
        return
    if lines[0].strip() != header:
        found = lines[0].strip() if lines else "empty file"
        raise FormatError(path, f"expected version header {header!r}, found {found!r}", 1)
    for no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#") or line == column_line:
            continue
        yield no, line


def trace_to_text(trace: SpikeTrace) -> str:
    rows = [TRACE_HEADER, "time_us,channel,polarity"]
    rows += [f"{t},{n},{'+' if p > 0 else '-'}" for t, n, p in zip(trace.times, trace.neurons, trace.polarities)]
    return "\n".join(rows) + "\n"


def trace_from_text(text: str, path="<trace>", n_inputs: int | None = None) -> SpikeTrace:
    """Parse a trace; ordering and range problems name the offending line."""
    times, neurons, pols = [], [], []
    for no, line in _data_lines(text, path, TRACE_HEADER, "time_us,channel,polarity"):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise FormatError(path, f"expected 3 fields, got {len(parts)}", no)
        try:
            t, ch = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(path, "time and channel must be integers", no) from None
        if parts[2] not in ("+", "-"):
            raise FormatError(path, f"polarity must be '+' or '-', got {parts[2]!r}", no)
        if t < 0 or ch < 0:
            raise FormatError(path, "time and channel must be non-negative", no)
        if times and t < times[-1]:
            raise TraceError("UNSORTED_TRACE", f"{path}:{no}: time {t} precedes {times[-1]}", len(times))
        if n_inputs is not None and ch >= n_inputs:
            raise TraceError("TARGET_OUT_OF_RANGE", f"{path}:{no}: channel {ch} >= {n_inputs} inputs", len(times))
        times.append(t)
        neurons.append(ch)
        pols.append(1 if parts[2] == "+" else -1)
    return SpikeTrace(np.array(times, dtype=np.int64), np.array(neurons, dtype=np.int64), np.array(pols, dtype=np.int64))


def save_trace(trace: SpikeTrace, path) -> None:
    Path(path).write_text(trace_to_text(trace))


def load_trace(path, n_inputs: int | None = None) -> SpikeTrace:
    return trace_from_text(Path(path).read_text(), path, n_inputs)


_FEATURE_COLUMNS = "frame_index," + ",".join(f"ch{i}" for i in range(N_CHANNELS))


def features_to_text(frames: Sequence[FeatureFrame]) -> str:
    rows = [FEATURE_HEADER, _FEATURE_COLUMNS]
    rows += [",".join([str(i)] + [str(int(v)) for v in f.values]) for i, f in enumerate(frames)]
    return "\n".join(rows) + "\n"


def features_from_text(text: str, path="<features>", activation_bits: int = 6) -> list[FeatureFrame]:
    """Parse feature frames; frame indices must run 0, 1, 2, ... without gaps."""
    frames = []
    for no, line in _data_lines(text, path, FEATURE_HEADER, _FEATURE_COLUMNS):
        parts = line.split(",")
        if len(parts) != N_CHANNELS + 1:
            raise FormatError(path, f"expected {N_CHANNELS + 1} fields, got {len(parts)}", no)
        try:
            nums = [int(p) for p in parts]
        except ValueError:
            raise FormatError(path, "feature fields must be integers", no) from None
        if nums[0] != len(frames):
            raise FormatError(path, f"frame_index {nums[0]} out of sequence (expected {len(frames)})", no)
        try:
            frames.append(FeatureFrame(nums[1:], activation_bits))
        except ValueError as exc:
            raise FormatError(path, str(exc), no) from None
    return frames


def save_features(frames: Sequence[FeatureFrame], path) -> None:
    Path(path).write_text(features_to_text(frames))


def load_features(path, activation_bits: int = 6) -> list[FeatureFrame]:
    return features_from_text(Path(path).read_text(), path, activation_bits)
