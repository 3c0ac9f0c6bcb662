"""Perception layer: integrate-and-fire nodes with WTA Hebbian learning."""

from __future__ import annotations

import json

import numpy as np

from .model import PROVISIONAL, SorterConfig, SortedSpike

# a node counts as blank while its strongest synapse is below this fraction of w_max
BLANK_FRACTION = 0.05


class PerceptionLayer:
    """Fixed set of IF output nodes fully connected to the encoding layer.

    Node ids are 1-based; ``weights[k]`` is the M x N map of node ``k + 1``.
    """

    def __init__(self, n_nodes: int, n_fields: int, n_samples: int, threshold: float,
                 tau_plus: float = 0.2, tau_minus: float = 0.1, w_min: float = 0.0,
                 w_max: float = 1.0, rng: np.random.Generator | None = None):
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        self.threshold = threshold
        self.tau_plus = tau_plus
        self.tau_minus = tau_minus
        self.w_min = w_min
        self.w_max = w_max
        self.weights = np.full((n_nodes, n_fields, n_samples), float(w_min))
        self.fire_count = np.zeros(n_nodes, dtype=np.int64)
        self.last_potential = np.zeros(n_nodes)
        self.rng = rng if rng is not None else np.random.default_rng(0)

    @classmethod
    def from_config(cls, cfg: SorterConfig, rng=None) -> "PerceptionLayer":
        return cls(cfg.n_nodes, cfg.n_fields, cfg.n_samples, cfg.th_d, cfg.tau_plus,
                   cfg.tau_minus, cfg.w_min, cfg.w_max, rng)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def potentials(self, train: np.ndarray) -> np.ndarray:
        if train.shape != self.weights.shape[1:]:
            raise ValueError(
                f"event train shape {train.shape} does not match weights {self.weights.shape[1:]}"
            )
        return np.tensordot(self.weights, train.astype(np.float64), axes=([1, 2], [0, 1]))

    def blank_nodes(self) -> np.ndarray:
        peak = self.weights.reshape(self.n_nodes, -1).max(axis=1)
        return np.flatnonzero(peak < BLANK_FRACTION * self.w_max)

    def learn(self, node: int, train: np.ndarray) -> None:
        """Hebbian update of one node (0-based index)."""
        w = self.weights[node]
        np.copyto(w, np.where(train, np.minimum(w + self.tau_plus, self.w_max),
                              np.maximum(w - self.tau_minus, self.w_min)))

    def step(self, train: np.ndarray) -> tuple[int, float]:
        """Classify ``train`` with the current weights, then let the winner learn.

        Returns ``(unit, potential)``; ``unit`` is PROVISIONAL when no node
        reached the threshold and the update went to a randomly chosen node.
        """
        z = self.potentials(train)
        self.last_potential = z
        best = int(np.argmax(z))  # first maximum -> lowest id on ties
        if z[best] >= self.threshold:
            winner, unit = best, best + 1
            self.fire_count[best] += 1
        else:
            pool = self.blank_nodes()
            if pool.size == 0:
                pool = np.arange(self.n_nodes)
            winner, unit = int(self.rng.choice(pool)), PROVISIONAL
        self.learn(winner, train)
        return unit, float(z[best])

    def valid_units(self, min_fires: int = 10) -> list[int]:
        return [int(k) + 1 for k in np.flatnonzero(self.fire_count >= min_fires)]

    def snapshot_weights(self) -> np.ndarray:
        return self.weights.copy()

    def active_nodes(self, level: float = 0.9) -> list[int]:
        """Node ids whose strongest synapse reaches ``level * w_max``."""
        peak = self.weights.reshape(self.n_nodes, -1).max(axis=1)
        return [int(k) + 1 for k in np.flatnonzero(peak >= level * self.w_max)]

    def state_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "tau_plus": self.tau_plus,
            "tau_minus": self.tau_minus,
            "w_min": self.w_min,
            "w_max": self.w_max,
            "weights": self.weights.tolist(),
            "fire_count": self.fire_count.tolist(),
            "rng": self.rng.bit_generator.state,
        }

    @classmethod
    def from_state(cls, state: dict) -> "PerceptionLayer":
        weights = np.asarray(state["weights"], dtype=np.float64)
        if weights.ndim != 3:
            raise ValueError("weights must be a list of M x N matrices")
        layer = cls(weights.shape[0], weights.shape[1], weights.shape[2], state["threshold"],
                    state["tau_plus"], state["tau_minus"], state["w_min"], state["w_max"])
        layer.weights = weights
        layer.fire_count = np.asarray(state["fire_count"], dtype=np.int64)
        if "rng" in state:
            layer.rng.bit_generator.state = state["rng"]
        return layer


def potential(weights: np.ndarray, train: np.ndarray) -> float:
    """Membrane potential of a single node: sum of weights on fired synapses."""
    if weights.shape != train.shape:
        raise ValueError(f"shape mismatch: weights {weights.shape}, train {train.shape}")
    return float(np.sum(weights * train))


def classify_and_learn(layer: PerceptionLayer, train: np.ndarray, candidate,
                       channel_id: int = 0) -> SortedSpike:
    unit, z = layer.step(train)
    return SortedSpike(channel_id, int(candidate.timestamp_samples), unit, z)


def weights_to_json(weights: np.ndarray) -> str:
    return json.dumps(np.asarray(weights).tolist())
