"""Domain types shared by the simulator, analyzers and file formats.

Time is an integer count of a 1 us base tick. Clock periods are derived from
nominal frequencies by nearest-tick rounding (ties up) and the rounded value is
what every engine uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TICKS_PER_SECOND = 1_000_000
MAX_CORES = 5
MAX_CORES_EXTENDED = 8
MAX_NEURONS = 256
ROW_BYTES = 16  # one 128-wide weight row

GSCD_LAYERS = (256, 128, 128, 128, 5)
GSCD_THRESHOLDS = (1, 28, 18, 10, 1)
MNIST_LAYERS = (256, 128, 128, 128, 10)
MNIST_THRESHOLDS = (1, 24, 12, 8, 1)


class ConfigError(ValueError):
    """Raised when a configuration or weight set fails validation."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def period_ticks(hz: float) -> int:
    """Clock period in base ticks, nearest tick with ties rounded up."""
    if hz <= 0:
        raise ConfigError(f"clock frequency must be positive, got {hz}")
    return max(1, int(np.floor(TICKS_PER_SECOND / hz + 0.5)))


def seconds_to_ticks(seconds: float) -> int:
    return int(round(seconds * TICKS_PER_SECOND))


@dataclass(frozen=True, order=True)
class SpikeEvent:
    """A timestamped +/-1 spike addressed to one neuron.

    Field order doubles as the deterministic tie order: time, core, neuron,
    then polarity with +1 ahead of -1 (``pol_rank``).
    """

    time: int
    target_core: int
    target_neuron: int
    pol_rank: int = field(repr=False, default=0)

    def __init__(self, time: int, target_core: int, target_neuron: int, polarity: int):
        if polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {polarity}")
        if time < 0 or target_core < 0 or target_neuron < 0:
            raise ValueError("spike time and target indices must be non-negative")
        object.__setattr__(self, "time", int(time))
        object.__setattr__(self, "target_core", int(target_core))
        object.__setattr__(self, "target_neuron", int(target_neuron))
        object.__setattr__(self, "pol_rank", 0 if polarity > 0 else 1)

    @property
    def polarity(self) -> int:
        return 1 if self.pol_rank == 0 else -1


@dataclass(frozen=True)
class LayerConfig:
    neuron_count: int
    threshold: int
    has_synapse_block: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple[LayerConfig, ...]
    neuron_clock_hz: float = 70_000.0
    arbiter_clock_hz: float = 17_000.0
    arbiter_cycles_per_request: int = 4
    frame_ticks: int = 80_000
    activation_bits: int = 6
    cluster_size: int = 0  # 0 = one cluster per core
    allow_extended_layers: bool = False
    power: dict = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], thresholds: Sequence[int], **kwargs) -> "NetworkConfig":
        """Build a config from layer sizes; the last layer never has a synapse block.

        ``thresholds`` may omit the output layer, which then defaults to 1.
        """
        thresholds = list(thresholds)
        if len(thresholds) == len(sizes) - 1:
            thresholds.append(1)
        if len(thresholds) != len(sizes):
            raise ConfigError(
                f"{len(sizes)} layers need {len(sizes)} (or {len(sizes) - 1}) thresholds, got {len(thresholds)}"
            )
        layers = tuple(
            LayerConfig(int(n), int(th), i < len(sizes) - 1)
            for i, (n, th) in enumerate(zip(sizes, thresholds))
        )
        return cls(layers=layers, **kwargs)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(layer.neuron_count for layer in self.layers)

    @property
    def thresholds(self) -> tuple[int, ...]:
        return tuple(layer.threshold for layer in self.layers)

    @property
    def neuron_period(self) -> int:
        return period_ticks(self.neuron_clock_hz)

    @property
    def arbiter_period(self) -> int:
        return period_ticks(self.arbiter_clock_hz)

    @property
    def spike_cap(self) -> int:
        return (1 << self.activation_bits) - 1

    def replace(self, **changes) -> "NetworkConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def with_thresholds(self, thresholds: Sequence[int]) -> "NetworkConfig":
        layers = tuple(
            LayerConfig(layer.neuron_count, int(th), layer.has_synapse_block)
            for layer, th in zip(self.layers, thresholds)
        )
        return self.replace(layers=layers)


class WeightMatrix:
    """Binary weight store: bit 1 means +1, bit 0 means -1.

    Rows are packed MSB-first into 16-byte chunks per 128 columns, matching the
    on-disk layout.
    """

    __slots__ = ("rows", "cols", "bits")

    def __init__(self, rows: int, cols: int, bits: np.ndarray):
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        stride = self.row_stride(cols)
        if bits.shape != (rows, stride):
            raise ConfigError(f"packed weights must have shape ({rows}, {stride}), got {bits.shape}")
        self.rows = int(rows)
        self.cols = int(cols)
        self.bits = bits

    @staticmethod
    def row_stride(cols: int) -> int:
        return ROW_BYTES * max(1, -(-cols // 128))

    @classmethod
    def from_signs(cls, signs) -> "WeightMatrix":
        signs = np.asarray(signs)
        if signs.ndim != 2:
            raise ConfigError("weight matrix must be 2-D")
        if not np.all((signs == 1) | (signs == -1)):
            raise ConfigError("binary weights must be +1 or -1")
        rows, cols = signs.shape
        onebits = np.zeros((rows, cls.row_stride(cols) * 8), dtype=np.uint8)
        onebits[:, :cols] = signs > 0
        return cls(rows, cols, np.packbits(onebits, axis=1))

    @classmethod
    def random(cls, rows: int, cols: int, rng: np.random.Generator, p_plus: float = 0.5) -> "WeightMatrix":
        return cls.from_signs(np.where(rng.random((rows, cols)) < p_plus, 1, -1))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_signs(self) -> np.ndarray:
        unpacked = np.unpackbits(self.bits, axis=1)[:, : self.cols]
        return np.where(unpacked == 1, 1, -1).astype(np.int8)

    def __eq__(self, other):
        return (
            isinstance(other, WeightMatrix)
            and self.shape == other.shape
            and np.array_equal(self.bits, other.bits)
        )

    def __repr__(self):
        return f"WeightMatrix({self.rows}x{self.cols})"


@dataclass(frozen=True)
class Model:
    """A validated configuration plus its weight matrices. Treat as immutable."""

    config: NetworkConfig
    weights: tuple[WeightMatrix, ...]
    warnings: tuple[str, ...] = ()

    @property
    def n_layers(self) -> int:
        return len(self.config.layers)

    def signs(self) -> list[np.ndarray]:
        return [w.to_signs() for w in self.weights]


def validate_config(config: NetworkConfig, weights: Sequence[WeightMatrix] = ()) -> Model:
    """Check every structural invariant and return a :class:`Model`.

    All problems are collected and raised together as one :class:`ConfigError`.
    """
    errors = []
    warnings = []
    layers = config.layers
    weights = tuple(weights)
    n = len(layers)
    limit = MAX_CORES_EXTENDED if config.allow_extended_layers else MAX_CORES
    if n == 0:
        errors.append("network needs at least one layer")
    if n > limit:
        errors.append(f"layer count {n} exceeds maximum of {limit}")
    elif n > MAX_CORES:
        warnings.append(f"{n} layers exceeds the 5-core chip; extended configuration")
    for i, layer in enumerate(layers):
        if not 1 <= layer.neuron_count <= MAX_NEURONS:
            errors.append(f"layer {i}: neuron_count {layer.neuron_count} outside [1, {MAX_NEURONS}]")
        if layer.threshold < 1:
            errors.append(f"layer {i}: threshold {layer.threshold} < 1")
        expect_block = i < n - 1
        if layer.has_synapse_block != expect_block:
            errors.append(
                f"layer {i}: has_synapse_block must be {expect_block} "
                "(every layer but the last drives a synapse block)"
            )
    if not 1 <= config.activation_bits <= 8:
        errors.append(f"activation_bits {config.activation_bits} outside [1, 8]")
    if config.arbiter_cycles_per_request < 1:
        errors.append("arbiter_cycles_per_request must be >= 1")
    if config.frame_ticks < 1:
        errors.append("frame_ticks must be >= 1")
    if config.cluster_size < 0:
        errors.append("cluster_size must be >= 0")
    for name in ("neuron_clock_hz", "arbiter_clock_hz"):
        hz = getattr(config, name)
        if not hz > 0:
            errors.append(f"{name} must be positive")
        elif period_ticks(hz) < 2:
            errors.append(f"{name}={hz} is too fast for the 1 us base tick")
    if n > 0 and len(weights) != n - 1:
        errors.append(f"expected {n - 1} weight matrices, got {len(weights)}")
    for i, w in enumerate(weights[: max(n - 1, 0)]):
        expected = (layers[i].neuron_count, layers[i + 1].neuron_count)
        if w.shape != expected:
            errors.append(f"layer {i}: weight matrix {w.rows}x{w.cols} does not match {expected[0]}x{expected[1]}")
    if errors:
        raise ConfigError(errors)
    return Model(config=config, weights=weights, warnings=tuple(warnings))


def random_model(
    sizes: Sequence[int],
    thresholds: Sequence[int],
    seed: int = 0,
    p_plus: float = 0.5,
    **config_kwargs,
) -> Model:
    """Validated model with seeded random binary weights."""
    rng = np.random.default_rng(seed)
    config = NetworkConfig.from_sizes(sizes, thresholds, **config_kwargs)
    weights = [WeightMatrix.random(a, b, rng, p_plus) for a, b in zip(sizes[:-1], sizes[1:])]
    return validate_config(config, weights)
