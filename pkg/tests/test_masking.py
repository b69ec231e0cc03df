import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holo.exceptions import DimensionError, ParameterError
from holo.masking import (
    MaskState,
    downsample_mask,
    initial_mask_state,
    kmeans2_segment,
    masked_mse,
    sa_update,
    segmentation_feature,
    upsample_mask,
)
from holo.objective import loss_autoencoder

from oracles import masked_mse_loop, otsu_sweep


class TestKMeans:
    def test_separated_square(self):
        amp = np.ones((32, 32))
        amp[10:20, 12:22] = 0.0
        expected = np.ones((32, 32), np.uint8)
        expected[10:20, 12:22] = 0
        np.testing.assert_array_equal(kmeans2_segment(amp), expected)

    def test_bright_object_on_dark_border(self):
        amp = np.zeros((16, 16))
        amp[4:9, 4:9] = 2.0
        mask = kmeans2_segment(amp)
        assert mask[0, 0] == 1 and mask[5, 5] == 0

    def test_constant(self):
        np.testing.assert_array_equal(kmeans2_segment(np.full((8, 8), 0.7)), np.ones((8, 8)))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_bimodal_against_threshold_sweep(self, seed):
        r = np.random.default_rng(seed)
        labels = np.zeros((64, 64), bool)
        labels[16:48, 20:44] = True
        amp = np.where(labels, r.normal(0.2, 0.05, labels.shape), r.normal(0.9, 0.05, labels.shape))
        amp = np.clip(amp, 0, None)
        thr = otsu_sweep(amp)
        oracle = (amp > thr).astype(np.uint8)  # bright cluster touches the border
        assert (kmeans2_segment(amp) == oracle).mean() >= 0.99

    def test_rejects_non_2d(self):
        with pytest.raises(DimensionError):
            kmeans2_segment(np.ones(5))


class TestMaskedMSE:
    def test_full_mask_is_global_mse(self):
        r = np.random.default_rng(0)
        a, b = r.random((8, 8)), r.random((8, 8))
        assert masked_mse(a, b, np.ones((8, 8))) == pytest.approx(loss_autoencoder(a, b), rel=1e-12)

    def test_single_pixel(self):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        b[2, 1] = 0.3
        m = np.zeros((4, 4))
        m[2, 1] = 1
        assert masked_mse(a, b, m) == pytest.approx(0.09, rel=1e-12)

    def test_double_loop(self):
        r = np.random.default_rng(5)
        a, b, m = r.random((8, 8)), r.random((8, 8)), r.integers(0, 2, (8, 8))
        assert masked_mse(a, b, m) == pytest.approx(masked_mse_loop(a, b, m), rel=1e-12)

    def test_empty(self):
        assert masked_mse(np.ones((3, 3)), np.zeros((3, 3)), np.zeros((3, 3))) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            masked_mse(np.ones((3, 3)), np.ones((3, 3)), np.ones((3, 4)))


def _pair_with_delta(delta):
    """Holograms and masks whose masked MSEs differ by exactly ``delta``.

    Old mask sees a zero residual, the proposal sees a residual of sqrt(delta).
    """
    H = np.zeros((2, 2))
    Hhat = np.array([[0.0, 0.0], [math.sqrt(delta), 0.0]])
    old = np.array([[1, 1], [0, 0]], np.uint8)
    new = np.array([[0, 0], [1, 0]], np.uint8)
    return H, Hhat, old, new


class TestAnnealing:
    def test_initial_state(self):
        s = initial_mask_state((5, 6), 0.3)
        assert s.step == 0 and s.mask.shape == (5, 6) and s.mask.all()
        r = np.random.default_rng(0)
        a, b = r.random((5, 6)), r.random((5, 6))
        assert masked_mse(a, b, s.mask) == pytest.approx(loss_autoencoder(a, b))

    def test_temperature_must_be_positive(self):
        with pytest.raises(ParameterError):
            MaskState(np.ones((2, 2)), 0.0)

    def test_improvement_always_accepted(self):
        H, Hhat, old, new = _pair_with_delta(0.5)
        # swap roles: the proposal now has the lower MSE
        state = MaskState(new, temperature=1e-12, step=3)
        for seed in range(50):
            out = sa_update(state, old, H, Hhat, seed)
            assert out.accepted and np.array_equal(out.mask, old)

    def test_monte_carlo_acceptance_rate(self):
        delta, temp = 0.3, 0.5
        H, Hhat, old, new = _pair_with_delta(delta)
        state = MaskState(old, temperature=temp, step=4)
        n = 10_000
        hits = sum(sa_update(state, new, H, Hhat, seed).accepted for seed in range(n))
        p = math.exp(-delta / temp)
        sd = math.sqrt(n * p * (1 - p))
        assert abs(hits - n * p) <= 3 * sd

    def test_infinite_gap_keeps_old_mask(self):
        H, Hhat, old, new = _pair_with_delta(1e6)
        state = MaskState(old, temperature=1e-3, step=2)
        for seed in range(100):
            out = sa_update(state, new, H, Hhat, seed)
            assert not out.accepted and np.array_equal(out.mask, old)

    def test_temperature_schedule(self):
        H, Hhat, old, new = _pair_with_delta(0.1)
        state = MaskState(old, temperature=2.0)
        temps = [state.temperature]
        for t in range(1, 12):
            state = sa_update(state, new if t % 2 else old, H, Hhat, t)
            assert state.step == t
            temps.append(state.temperature)
        assert temps[1] == temps[0]  # no decay at t=1
        for t in range(2, 12):
            assert temps[t] == pytest.approx(temps[t - 1] / math.log(1 + t))
            assert temps[t] < temps[t - 1]

    def test_accept_uses_pre_decay_temperature(self):
        # at step t=2 the decay would divide by ln 3; acceptance must use T before that
        delta, temp = 0.2, 0.4
        H, Hhat, old, new = _pair_with_delta(delta)
        state = MaskState(old, temperature=temp, step=1)
        n = 4000
        hits = sum(sa_update(state, new, H, Hhat, s).accepted for s in range(n))
        p = math.exp(-delta / temp)
        assert abs(hits - n * p) <= 3 * math.sqrt(n * p * (1 - p))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), step=st.integers(0, 50))
    def test_determinism(self, seed, step):
        r = np.random.default_rng(seed % 1000)
        H, Hhat = r.random((6, 6)), r.random((6, 6))
        state = MaskState(r.integers(0, 2, (6, 6)).astype(np.uint8), 0.05, step)
        prop = r.integers(0, 2, (6, 6))
        a = sa_update(state, prop, H, Hhat, seed)
        b = sa_update(state, prop, H, Hhat, seed)
        assert np.array_equal(a.mask, b.mask) and a.temperature == b.temperature and a.accepted == b.accepted

    def test_last_delta_tracks_accepted_mask(self):
        H, Hhat, old, new = _pair_with_delta(0.5)
        out = sa_update(MaskState(new, 1.0, 2), old, H, Hhat, 0)
        assert out.last_delta == masked_mse(H, Hhat, old)


def test_mask_resampling():
    m = np.array([[1, 1, 0, 1], [1, 1, 1, 1]], np.uint8)
    np.testing.assert_array_equal(downsample_mask(m, 2), [[1, 0]])
    np.testing.assert_array_equal(upsample_mask([[1, 0]], 2), [[1, 1, 0, 0], [1, 1, 0, 0]])


def test_contrast_feature_separates_phase_object():
    phase = np.zeros((32, 32))
    phase[10:20, 12:22] = np.pi / 2
    field = np.exp(1j * phase)
    assert kmeans2_segment(segmentation_feature(field, "amplitude")).all()  # flat amplitude: nothing to split
    mask = kmeans2_segment(segmentation_feature(field, "contrast"))
    np.testing.assert_array_equal(mask, (phase == 0).astype(np.uint8))


def test_contrast_feature_matches_amplitude_on_real_objects():
    rng = np.random.default_rng(3)
    amp = np.ones((32, 32))
    amp[8:24, 8:24] = rng.uniform(0.2, 0.6, (16, 16))
    np.testing.assert_allclose(segmentation_feature(amp, "contrast"), 1 - amp, atol=1e-12)
    np.testing.assert_array_equal(
        kmeans2_segment(segmentation_feature(amp, "contrast")), kmeans2_segment(segmentation_feature(amp))
    )
    with pytest.raises(ParameterError):
        segmentation_feature(amp, "phase")
    with pytest.raises(DimensionError):
        segmentation_feature(amp[0])
