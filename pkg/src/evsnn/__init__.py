"""Event-driven simulator and analysis tools for a spike-driven SNN classifier."""

from .core_model import (
    ConfigError,
    LayerConfig,
    Model,
    NetworkConfig,
    SpikeEvent,
    WeightMatrix,
    random_model,
    validate_config,
)
from .sim_kernel import ActivityLedger, SimResult, Simulator, SpikeTrace, TraceError, run, tie_order

__version__ = "0.1.0"

__all__ = [
    "ActivityLedger",
    "ConfigError",
    "LayerConfig",
    "Model",
    "NetworkConfig",
    "SimResult",
    "Simulator",
    "SpikeEvent",
    "SpikeTrace",
    "TraceError",
    "WeightMatrix",
    "random_model",
    "run",
    "tie_order",
    "validate_config",
]
