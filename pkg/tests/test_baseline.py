"""Frozen PCA + k-means comparison sorter."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neusort.baseline import (
    PcaKmModel,
    classify,
    classify_many,
    kmeans,
    nearest,
    sort_candidates,
    train,
)
from neusort.model import SpikeCandidate


def _lloyd(x, centres, iters=200):
    """Plain Lloyd iterations from the given start (oracle)."""
    c = centres.copy()
    for _ in range(iters):
        lab = np.argmin(((x[:, None] - c[None]) ** 2).sum(-1), axis=1)
        c = np.stack([x[lab == k].mean(0) if np.any(lab == k) else c[k] for k in range(len(c))])
    lab = np.argmin(((x[:, None] - c[None]) ** 2).sum(-1), axis=1)
    return c, ((x - c[lab]) ** 2).sum()


def exhaustive_kmeans(x, k):
    """Lloyd restarted from every k-subset of points; keep the lowest inertia."""
    best = None
    for idx in itertools.combinations(range(len(x)), k):
        c, inertia = _lloyd(x, x[list(idx)])
        if best is None or inertia < best[1]:
            best = (c, inertia)
    return best[0]


def _two_clouds(seed, n=12):
    rng = np.random.default_rng(seed)
    a = rng.normal([0, 0], 0.3, (n, 2))
    b = rng.normal([6, 2], 0.3, (n, 2))
    return np.vstack([a, b]), np.array([[0, 0], [6, 2]])


def _sorted_rows(c):
    return c[np.lexsort(c.T[::-1])]


class TestKMeans:
    """Clustering against brute-force and closed-form oracles."""

    @pytest.mark.parametrize("init", ["kmeans++", "farthest"])
    def test_two_clouds(self, init):
        x, true = _two_clouds(0, n=50)
        c, _ = kmeans(x, 2, init=init)
        np.testing.assert_allclose(_sorted_rows(c), _sorted_rows(true), atol=0.1 + 0.3)
        np.testing.assert_allclose(_sorted_rows(c),
                                   _sorted_rows(np.stack([x[:50].mean(0), x[50:].mean(0)])),
                                   atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_matches_exhaustive_oracle(self, seed):
        x, _ = _two_clouds(seed, n=6)
        got, _ = kmeans(x, 2, seed=seed)
        want = exhaustive_kmeans(x, 2)
        np.testing.assert_allclose(_sorted_rows(got), _sorted_rows(want), atol=0.1)

    def test_single_cluster(self):
        x = np.tile([[1.5, -2.0]], (5, 1))
        c, lab = kmeans(x, 1)
        np.testing.assert_allclose(c[0], [1.5, -2.0])
        assert set(lab) == {0}

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((2, 2)), 3)

    def test_unknown_init(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((4, 2)), 2, init="random")

    def test_nearest_tie_lowest(self):
        c = np.array([[0.0, 0.0], [2.0, 0.0]])
        assert nearest(np.array([[1.0, 0.0]]), c)[0] == 0


def _waves(seed, n=90):
    rng = np.random.default_rng(seed)
    t = np.arange(64)
    shapes = [np.exp(-((t - 20) ** 2) / 8) * -100, np.exp(-((t - 20) ** 2) / 30) * 80,
              np.sin(t / 5) * 60]
    labels = rng.integers(3, size=n)
    return np.stack([shapes[k] for k in labels]) + rng.normal(0, 3, (n, 64)), labels


class TestModel:
    """PCA projection and frozen classification."""

    def test_basis_orthonormal(self):
        w, _ = _waves(0)
        m = train(list(w))
        gram = m.basis @ m.basis.T
        np.testing.assert_allclose(gram, np.eye(2), atol=1e-6)
        assert m.explained_variance[0] >= m.explained_variance[1]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_variance_ordered(self, seed):
        x = np.random.default_rng(seed).normal(size=(40, 8)) * np.arange(1, 9)
        m = train(list(x), k=2)
        var = np.var(m.project(x), axis=0)
        assert var[0] >= var[1] - 1e-9

    def test_training_point_keeps_cluster(self):
        w, _ = _waves(1)
        m = train(list(w))
        proj = m.project(w)
        labs = nearest(proj, m.centroids) + 1
        assert all(classify(m, w[i]) == labs[i] for i in range(len(w)))

    def test_frozen(self):
        w, _ = _waves(2)
        m = train(list(w[:30]))
        before = classify_many(m, list(w))
        after_json = PcaKmModel.from_json(m.to_json())
        classify_many(m, list(_waves(7, 500)[0]))
        np.testing.assert_array_equal(before, classify_many(m, list(w)))
        np.testing.assert_array_equal(before, classify_many(after_json, list(w)))

    def test_untrained(self):
        with pytest.raises(ValueError):
            classify(None, np.zeros(64))

    def test_unseen_unit_misassigned(self):
        """A waveform absent from training still lands in one of the K trained clusters."""
        w, lab = _waves(3, 200)
        known = w[lab != 2]
        m = train(list(known), k=2)
        got = classify_many(m, list(w[lab == 2]))
        assert set(got.tolist()) <= {1, 2}

    def test_midpoint_tie(self):
        m = PcaKmModel(np.zeros(2), np.eye(2), np.ones(2), np.array([[0.0, 0.0], [2.0, 0.0]]))
        assert classify(m, np.array([1.0, 0.0])) == 1

    def test_sort_candidates(self):
        w, lab = _waves(4, 120)
        cands = [SpikeCandidate(x, 20, 100 * i) for i, x in enumerate(w)]
        out, m = sort_candidates(cands, 0.5)
        assert len(out) == len(cands)
        got = np.array([o.unit for o in out])
        # labels are arbitrary; the partition must agree with the truth
        for k in range(3):
            assert len(set(got[lab == k])) == 1
