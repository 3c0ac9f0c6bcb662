"""Frozen PCA + k-means sorter used as the non-adaptive comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from .model import SortedSpike

# seeding strategies accepted by ``kmeans`` / ``train``
KMEANS_INITS = ("kmeans++", "farthest")


@dataclass
class PcaKmModel:
    mean: np.ndarray
    basis: np.ndarray  # p x N, rows orthonormal, ordered by explained variance
    explained_variance: np.ndarray
    centroids: np.ndarray  # K x p
    trained: bool = True

    @property
    def k(self) -> int:
        return len(self.centroids)

    def project(self, waves) -> np.ndarray:
        x = np.atleast_2d(np.asarray(waves, dtype=np.float64))
        return (x - self.mean) @ self.basis.T

    def to_json(self) -> str:
        return json.dumps({
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "centroids": self.centroids.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PcaKmModel":
        d = json.loads(text)
        return cls(*(np.asarray(d[k], dtype=np.float64)
                     for k in ("mean", "basis", "explained_variance", "centroids")))


def farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """First centre at random, each next one the point farthest from those chosen."""
    idx = [int(rng.integers(len(x)))]
    d = np.sum((x - x[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        idx.append(int(np.argmax(d)))
        d = np.minimum(d, np.sum((x - x[idx[-1]]) ** 2, axis=1))
    return x[idx].copy()


def nearest(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    return np.argmin(d, axis=1)  # first minimum -> lowest id on ties


def kmeans(x: np.ndarray, k: int, seed: int = 0, max_iter: int = 100,
           init: str = "kmeans++", n_init: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations until the assignment stops changing (or ``max_iter``).

    ``init="kmeans++"`` runs ``n_init`` seeded k-means++ starts and keeps the
    lowest inertia; ``init="farthest"`` is a single farthest-point start.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < k:
        raise ValueError(f"need at least k={k} points, got {len(x)}")
    if init == "farthest":
        start, runs = farthest_point_init(x, k, np.random.default_rng(seed)), 1
    elif init == "kmeans++":
        start, runs = "k-means++", n_init
    else:
        raise ValueError(f"unknown k-means init {init!r}; expected one of {KMEANS_INITS}")
    km = KMeans(k, init=start, n_init=runs, max_iter=max_iter, tol=0.0,
                algorithm="lloyd", random_state=seed).fit(x)
    c = km.cluster_centers_
    return c, nearest(x, c)


def train(candidates, k: int = 3, p: int = 2, seed: int = 0, init: str = "kmeans++") -> PcaKmModel:
    waves = np.stack([np.asarray(getattr(c, "waveform", c), dtype=np.float64) for c in candidates]) \
        if len(candidates) else np.zeros((0, 0))
    if len(waves) < k:
        raise ValueError(f"need at least k={k} candidates to train, got {len(waves)}")
    mean = waves.mean(axis=0)
    cov = np.cov(waves - mean, rowvar=False, bias=True)
    evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
    order = np.argsort(evals)[::-1][:p]
    basis = evecs[:, order].T
    # fix the sign so the basis is reproducible
    basis *= np.where(basis[np.arange(len(basis)), np.argmax(np.abs(basis), axis=1)] < 0, -1, 1)[:, None]
    proj = (waves - mean) @ basis.T
    centroids, _ = kmeans(proj, k, seed, init=init)
    return PcaKmModel(mean, basis, evals[order], centroids)


def classify(model: PcaKmModel | None, candidate) -> int:
    """1-based cluster id of the nearest centroid."""
    if model is None or not model.trained:
        raise ValueError("model is not trained")
    w = getattr(candidate, "waveform", candidate)
    return int(nearest(model.project(w), model.centroids)[0]) + 1


def classify_many(model: PcaKmModel, candidates) -> np.ndarray:
    if not model.trained:
        raise ValueError("model is not trained")
    if not len(candidates):
        return np.zeros(0, dtype=int)
    waves = np.stack([getattr(c, "waveform", c) for c in candidates])
    return nearest(model.project(waves), model.centroids) + 1


def sort_candidates(candidates, train_fraction: float = 0.25, k: int = 3, p: int = 2,
                    seed: int = 0, channel_id: int = 0, train_count: int | None = None,
                    init: str = "kmeans++"):
    """Train on the leading candidates, then label every candidate with the frozen model."""
    n_train = train_count if train_count is not None else int(round(train_fraction * len(candidates)))
    model = train(candidates[:n_train], k, p, seed, init)
    labels = classify_many(model, candidates)
    out = [SortedSpike(channel_id, int(c.timestamp_samples), int(u), 0.0)
           for c, u in zip(candidates, labels)]
    return out, model
