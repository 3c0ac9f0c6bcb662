"""Gaussian receptive-field encoder (the encoding layer)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SorterConfig, SpikeCandidate


@dataclass(frozen=True)
class ReceptiveField:
    centers: np.ndarray
    width: float
    i_min: float
    i_max: float
    beta: float

    @property
    def n_fields(self) -> int:
        return len(self.centers)

    @property
    def spacing(self) -> float:
        return (self.i_max - self.i_min) / (self.n_fields - 2)

    def activation(self, node: int, value):
        """Firing probability of 1-based ``node`` for ``value`` (no clamping)."""
        if not 1 <= node <= self.n_fields:
            raise IndexError(f"node {node} outside 1..{self.n_fields}")
        mu = self.centers[node - 1]
        return np.exp(-((np.asarray(value, dtype=np.float64) - mu) ** 2) / (2 * self.width**2))

    def activations(self, values) -> np.ndarray:
        """M x len(values) matrix of activation probabilities."""
        v = np.asarray(values, dtype=np.float64)
        return np.exp(-((v[None, :] - self.centers[:, None]) ** 2) / (2 * self.width**2))


def build_field(cfg: SorterConfig) -> ReceptiveField:
    m = cfg.n_fields
    span = cfg.i_max - cfg.i_min
    i = np.arange(1, m + 1)
    centers = cfg.i_min + (2 * i - 3) / 2 * span / (m - 2)
    width = span / (m - 2) / cfg.beta
    return ReceptiveField(centers, width, cfg.i_min, cfg.i_max, cfg.beta)


def activation(field: ReceptiveField, node: int, value: float) -> float:
    return float(field.activation(node, value))


def encode(candidate, field: ReceptiveField, rng: np.random.Generator | None = None,
           deterministic: bool = False) -> np.ndarray:
    """Encode one candidate into an M x N boolean event train.

    Stochastic mode draws one Bernoulli event per (node, time point) with the
    Gaussian activation as probability; deterministic mode fires wherever the
    activation is at least 0.5.
    """
    wave = candidate.waveform if isinstance(candidate, SpikeCandidate) else candidate
    wave = np.asarray(wave, dtype=np.float64)
    if not np.all(np.isfinite(wave)):
        raise ValueError("candidate contains non-finite values")
    p = field.activations(wave)
    if deterministic:
        return p >= 0.5
    if rng is None:
        raise ValueError("stochastic encoding needs an rng")
    return rng.random(p.shape) < p
