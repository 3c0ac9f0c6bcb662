"""Gaussian receptive-field encoder."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neusort.encoding import activation, build_field, encode
from neusort.model import SpikeCandidate, default_config


@pytest.fixture(scope="module")
def field():
    return build_field(default_config())


class TestField:
    """Centre placement and width of the receptive fields."""

    def test_geometry(self, field):
        assert field.n_fields == 31
        assert field.width == pytest.approx(0.5 * 400 / 29)
        assert field.centers[15] == 0.0
        assert field.centers[0] == pytest.approx(-200 - 0.5 * 400 / 29)

    def test_spacing_constant(self, field):
        np.testing.assert_allclose(np.diff(field.centers), 400 / 29, atol=1e-9)
        assert field.width == pytest.approx(field.spacing / 2.0)

    @pytest.mark.parametrize("beta", [1.0, 1.5, 2.0])
    def test_width_follows_beta(self, beta):
        f = build_field(default_config().replace(beta=beta))
        assert f.width == pytest.approx(f.spacing / beta)
        assert np.all(np.diff(f.centers) > 0)

    def test_coverage(self, field):
        """Every in-range value reaches the midway worst case on some node."""
        grid = np.linspace(-200, 200, 4001)
        best = field.activations(grid).max(axis=0)
        assert np.all(best >= np.exp(-(2.0**2) / 8) - 1e-12)


class TestActivation:
    """Single-node activation values."""

    def test_peak(self, field):
        assert activation(field, 16, 0.0) == 1.0

    def test_midway_symmetry(self, field):
        mid = 0.5 * (field.centers[9] + field.centers[10])
        assert activation(field, 10, mid) == pytest.approx(activation(field, 11, mid))

    def test_one_width_away(self, field):
        assert activation(field, 16, 400 / 29 / 2) == pytest.approx(np.exp(-0.5))

    def test_bad_node(self, field):
        with pytest.raises(IndexError):
            activation(field, 0, 0.0)


class TestEncode:
    """Event-train generation."""

    def test_deterministic_zero(self, field):
        train = encode(np.zeros(64), field, deterministic=True)
        assert train.shape == (31, 64)
        assert train[15].all()
        low = field.activations(np.zeros(64)) < 0.5
        assert not train[low].any()

    def test_same_seed_same_train(self, field):
        c = SpikeCandidate(np.random.default_rng(0).normal(0, 50, 64), 20, 0)
        a = encode(c, field, np.random.default_rng(9))
        b = encode(c, field, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_rate_at_center(self, field):
        rng = np.random.default_rng(0)
        hits = sum(encode(np.zeros(64), field, rng)[15] for _ in range(10_000))
        rate = hits / 10_000
        assert np.all((rate >= 0.99) & (rate <= 1.0))

    def test_rates_match_probabilities(self, field):
        """Empirical firing rates sit inside a 5-sigma binomial band."""
        rng = np.random.default_rng(1)
        wave = np.linspace(-150, 150, 64)
        p = field.activations(wave)
        n = 10_000
        rate = sum(encode(wave, field, rng).astype(np.int64) for _ in range(n)) / n
        band = 5 * np.sqrt(p * (1 - p) / n) + 1e-3
        assert np.all(np.abs(rate - p) <= band)

    def test_rejects_nonfinite(self, field):
        with pytest.raises(ValueError):
            encode(np.array([0.0, np.nan] * 32), field, np.random.default_rng(0))

    def test_stochastic_needs_rng(self, field):
        with pytest.raises(ValueError):
            encode(np.zeros(64), field)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-180, 180), min_size=64, max_size=64),
           st.floats(1.0, 1.5))
    def test_small_scaling_moves_winner_at_most_one_node(self, values, factor):
        """Scaling so no value moves by more than half a spacing keeps winners adjacent."""
        field = build_field(default_config())
        c = np.asarray(values)
        peak = np.max(np.abs(c))
        if peak == 0:
            return
        factor = min(factor, 1.0 + (field.spacing / 2) / peak)
        before = np.argmax(field.activations(c), axis=0)
        after = np.argmax(field.activations(c * factor), axis=0)
        assert np.all(np.abs(after - before) <= 1)

    @given(st.integers(0, 2**31 - 1))
    def test_binary_shape(self, seed):
        field = build_field(default_config())
        rng = np.random.default_rng(seed)
        train = encode(rng.normal(0, 80, 64), field, rng)
        assert train.shape == (31, 64) and train.dtype == bool
