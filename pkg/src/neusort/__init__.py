"""Online spike sorting with a receptive-field encoder and a Hebbian WTA perception layer."""

from .model import (
    PROVISIONAL,
    ConfigError,
    GroundTruthEvent,
    RawTrace,
    SortedSpike,
    SorterConfig,
    SpikeCandidate,
    default_config,
    validate_config,
)
from .pipeline import ChannelSorter, MultiChannelSorter, sort_trace

__all__ = [
    "PROVISIONAL",
    "ChannelSorter",
    "ConfigError",
    "GroundTruthEvent",
    "MultiChannelSorter",
    "RawTrace",
    "SortedSpike",
    "SorterConfig",
    "SpikeCandidate",
    "default_config",
    "sort_trace",
    "validate_config",
]
