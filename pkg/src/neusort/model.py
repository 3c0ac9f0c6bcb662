"""Core value types and sorter configuration."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

#: Unit label for candidates that no perception node claimed.
PROVISIONAL = 0


@dataclass(frozen=True)
class SorterConfig:
    # receptive field
    i_min: float = -200.0
    i_max: float = 200.0
    beta: float = 2.0
    d_r: float = 13.0
    # perception layer
    th_factor: float = 0.4
    tau_plus: float = 0.2
    tau_minus: float = 0.1
    w_min: float = 0.0
    w_max: float = 1.0
    n_nodes: int = 9
    n_samples: int = 64
    # preprocessing
    band_low_hz: float = 300.0
    band_high_hz: float = 3000.0
    detect_k: float = 8.0
    detect_window_s: float = 1.0
    align_index: int = 20
    align_iterations: int = 5
    upsample_factor: int = 4
    # runtime
    seed: int = 0
    deterministic: bool = False
    tolerance_samples: int = 15
    min_fires: int = 10

    @property
    def th_d(self) -> float:
        """Firing threshold of the perception nodes."""
        return self.n_samples * self.th_factor

    @property
    def n_fields(self) -> int:
        """Receptive-field nodes per time point."""
        return math.ceil((self.i_max - self.i_min) / self.d_r)

    def replace(self, **changes) -> "SorterConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SorterConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SorterConfig":
        return cls.from_dict(json.loads(text))


def default_config() -> SorterConfig:
    return SorterConfig()


def validate_config(cfg: SorterConfig) -> list[str]:
    """Return every violated invariant of ``cfg``; an empty list means valid."""
    problems = []
    if not cfg.i_min < cfg.i_max:
        problems.append("empty receptive field interval: i_min must be < i_max")
    if not 1.0 <= cfg.beta <= 2.0:
        problems.append("beta out of [1,2]")
    if not cfg.w_min < cfg.w_max:
        problems.append("empty weight range: w_min must be < w_max")
    if not cfg.tau_plus > 0:
        problems.append("tau_plus must be > 0")
    if not cfg.tau_minus > 0:
        problems.append("tau_minus must be > 0")
    if not cfg.n_samples > 0:
        problems.append("n_samples must be > 0")
    if not cfg.d_r > 0:
        problems.append("d_r must be > 0")
    elif cfg.i_min < cfg.i_max and cfg.n_fields < 3:
        problems.append("receptive field needs at least 3 nodes (reduce d_r)")
    if not cfg.th_factor > 0:
        problems.append("th_factor must be > 0")
    if cfg.n_nodes < 1:
        problems.append("n_nodes must be >= 1")
    if not 0 < cfg.band_low_hz < cfg.band_high_hz:
        problems.append("passband must satisfy 0 < band_low_hz < band_high_hz")
    if not cfg.detect_k > 0:
        problems.append("detect_k must be > 0")
    if not cfg.detect_window_s > 0:
        problems.append("detect_window_s must be > 0")
    if not 0 <= cfg.align_index < cfg.n_samples:
        problems.append("align_index must lie inside the candidate window")
    if cfg.align_iterations < 1:
        problems.append("align_iterations must be >= 1")
    if cfg.upsample_factor < 2:
        problems.append("upsample_factor must be >= 2")
    if cfg.tolerance_samples < 0:
        problems.append("tolerance_samples must be >= 0")
    if cfg.min_fires < 1:
        problems.append("min_fires must be >= 1")
    return problems


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


def check_config(cfg: SorterConfig) -> SorterConfig:
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


@dataclass(frozen=True)
class RawTrace:
    samples: np.ndarray
    sample_rate_hz: float
    channel_id: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.channel_id < 0:
            raise ValueError("channel_id must be non-negative")
        if not np.all(np.isfinite(samples)):
            raise ValueError("trace contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class SpikeCandidate:
    waveform: np.ndarray
    peak_index: int
    timestamp_samples: int
    flagged: bool = False

    def __post_init__(self):
        object.__setattr__(self, "waveform", np.asarray(self.waveform, dtype=np.float64))
        if self.timestamp_samples < 0:
            raise ValueError("timestamp_samples must be non-negative")


@dataclass(frozen=True)
class SortedSpike:
    channel_id: int
    timestamp_samples: int
    unit: int
    potential: float

    @property
    def provisional(self) -> bool:
        return self.unit == PROVISIONAL

    def to_json(self) -> str:
        return json.dumps(
            {
                "channel_id": self.channel_id,
                "timestamp_samples": self.timestamp_samples,
                "unit": self.unit,
                "potential": self.potential,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "SortedSpike":
        d = json.loads(line)
        return cls(
            int(d["channel_id"]), int(d["timestamp_samples"]), int(d["unit"]), float(d["potential"])
        )


@dataclass(frozen=True)
class GroundTruthEvent:
    timestamp_samples: int
    unit: int


@dataclass
class Diagnostics:
    """Per-channel counters exposed to the CLI."""

    samples_seen: int = 0
    candidates: int = 0
    provisional: int = 0
    discarded_partial: int = 0
    flagged_alignment: int = 0
    events_total: int = 0
    firings: int = 0
    unit_counts: dict = field(default_factory=dict)

    @property
    def events_per_input(self) -> float:
        """Mean encoder events plus perception firings per candidate."""
        if not self.candidates:
            return 0.0
        return (self.events_total + self.firings) / self.candidates
