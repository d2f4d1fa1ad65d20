"""Spectral indices, probability maps, smoothing, pixel counts."""

import numpy as np
import pytest

from expanscan import (
    ProbMap,
    SyntheticSpec,
    cafo_pixel_count,
    confidences_to_probs,
    generate_location,
    mean_ndvi,
    ndvi,
    pseudo_segment,
    read_prob_stack,
    smooth,
    write_prob_stack,
)
from expanscan.scene_store import Frame
from helpers import day, make_frame, random_scene_series
from oracles import brute_ndvi, brute_pixel_count, brute_smooth


def prob_map(values, mask=None) -> ProbMap:
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.zeros(values.shape, dtype=bool)
    return ProbMap(values=values, mask=np.asarray(mask, bool), timestamp=day(0))


class TestNdvi:
    def test_direct_value(self):
        frame = make_frame(nir=np.full((2, 2), 0.8), red=np.full((2, 2), 0.4))
        out = ndvi(frame)
        assert out.data == pytest.approx(np.full((2, 2), 1 / 3), abs=1e-6)
        assert not out.mask.any()

    def test_equal_bands_give_zero(self):
        frame = make_frame(nir=np.full((3, 3), 0.37), red=np.full((3, 3), 0.37))
        assert (ndvi(frame).data == 0.0).all()

    def test_zero_sum_is_masked(self):
        nir = np.array([[0.0, 0.5]], dtype=np.float32)
        red = np.array([[0.0, 0.5]], dtype=np.float32)
        out = ndvi(make_frame(nir=nir, red=red))
        assert out.mask.tolist() == [[True, False]]

    def test_missing_band(self):
        frame = make_frame(np.ones((2, 2)), np.ones((2, 2)))
        bad = Frame(bands=("RED", "GREEN"), pixels=frame.pixels[:2],
                    mask=frame.mask, timestamp=frame.timestamp)
        with pytest.raises(ValueError, match="NIR"):
            ndvi(bad)

    def test_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            frame = make_frame(rng.random((6, 6)), rng.random((6, 6)))
            out = ndvi(frame)
            defined = out.data[~out.mask]
            assert ((defined >= -1) & (defined <= 1)).all()

    def test_matches_enumeration(self):
        rng = np.random.default_rng(1)
        nir = rng.random((7, 5)).astype(np.float32)
        red = rng.random((7, 5)).astype(np.float32)
        mask = rng.random((7, 5)) < 0.2
        frame = make_frame(nir=nir, red=red, mask=mask)
        out = ndvi(frame)
        exp_vals, exp_mask = brute_ndvi(frame.band("NIR"), frame.band("RED"), mask)
        assert np.array_equal(np.asarray(out.mask), exp_mask)
        assert out.data[~exp_mask] == pytest.approx(exp_vals[~exp_mask], abs=1e-12)


class TestMeanNdvi:
    def test_uniform(self):
        frame = make_frame(nir=np.full((4, 4), 0.65), red=np.full((4, 4), 0.35))
        assert mean_ndvi(frame) == pytest.approx(0.3, abs=1e-6)

    def test_symmetric_cancellation(self):
        nir = np.concatenate([np.full(8, 0.6), np.full(8, 0.4)]).reshape(4, 4)
        red = np.concatenate([np.full(8, 0.4), np.full(8, 0.6)]).reshape(4, 4)
        assert mean_ndvi(make_frame(nir=nir, red=red)) == pytest.approx(0.0, abs=1e-9)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(2)
        frame = make_frame(rng.random((20, 20)), rng.random((20, 20)),
                           mask=rng.random((20, 20)) < 0.1)
        vals, msk = brute_ndvi(frame.band("NIR"), frame.band("RED"), frame.mask)
        expected = vals[~msk].sum() / (~msk).sum()
        assert mean_ndvi(frame) == pytest.approx(expected, abs=1e-9)

    def test_all_masked(self):
        frame = make_frame(np.ones((2, 2)), np.ones((2, 2)),
                           mask=np.ones((2, 2), dtype=bool))
        with pytest.raises(ValueError, match="undefined"):
            mean_ndvi(frame)


class TestConfidencesToProbs:
    def test_zero_maps_to_half(self):
        out = confidences_to_probs(np.zeros((2, 2)))
        assert (out.values == 0.5).all()

    def test_seven(self):
        out = confidences_to_probs(np.full((1, 1), 7.0))
        assert out.values[0, 0] == pytest.approx(0.99908895, abs=1e-7)

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(3)
        conf = rng.uniform(-7, 7, size=(5, 5))
        out = confidences_to_probs(conf)
        assert ((out.values > 0) & (out.values < 1)).all()
        flat_c = conf.ravel()
        flat_p = out.values.ravel()
        order = np.argsort(flat_c)
        assert (np.diff(flat_p[order]) >= 0).all()

    def test_mask_passes_through(self):
        mask = np.array([[True, False]])
        out = confidences_to_probs(np.zeros((1, 2)), mask=mask, timestamp=day(2))
        assert np.array_equal(out.mask, mask)
        assert out.timestamp == day(2)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            confidences_to_probs(np.array([[np.inf]]))


class TestPseudoSegment:
    def test_center_maps_to_half(self):
        frame = make_frame(nir=np.full((2, 2), 0.5), red=np.full((2, 2), 0.5))
        out = pseudo_segment(frame, gain=10.0, center=0.0)
        assert out.values == pytest.approx(np.full((2, 2), 0.5), abs=1e-12)

    def test_extreme_ndvi(self):
        frame = make_frame(nir=np.zeros((1, 1)), red=np.full((1, 1), 0.4))
        out = pseudo_segment(frame, gain=10.0, center=0.0)
        assert out.values[0, 0] == pytest.approx(0.9999546, abs=1e-7)

    def test_strictly_decreasing_in_ndvi(self):
        ndvi_vals = np.linspace(-0.9, 0.9, 10, dtype=np.float32).reshape(1, 10)
        frame = make_frame(nir=0.5 * (1 + ndvi_vals), red=0.5 * (1 - ndvi_vals))
        out = pseudo_segment(frame)
        assert (np.diff(out.values[0]) < 0).all()

    def test_recovers_shed_mask(self):
        spec = SyntheticSpec(width=20, height=20, n_frames=10, noise=0.0,
                             missing_rate=0.0, base_sheds=((3, 4, 6, 9),), seed=1)
        scene, _, _ = generate_location(spec)
        shed = np.zeros((20, 20), dtype=bool)
        shed[3:9, 4:13] = True
        for frame in scene.frames:
            seg = pseudo_segment(frame)
            assert np.array_equal(seg.values >= 0.5, shed)


class TestSmooth:
    def test_constant_map(self):
        out = smooth(prob_map(np.full((6, 6), 0.5)), k=3)
        assert (out.values == 0.5).all()

    def test_k1_identity(self):
        pm = prob_map(np.random.default_rng(4).random((4, 4)))
        out = smooth(pm, k=1)
        assert np.array_equal(out.values, pm.values)

    @pytest.mark.parametrize("k", [3, 5])
    def test_matches_enumeration(self, k):
        rng = np.random.default_rng(5)
        values = rng.random((10, 10))
        mask = rng.random((10, 10)) < 0.2
        out = smooth(prob_map(values, mask), k=k)
        exp_vals, exp_mask = brute_smooth(values, mask, k)
        assert np.array_equal(out.mask, exp_mask)
        assert out.values[~exp_mask] == pytest.approx(exp_vals[~exp_mask], abs=1e-12)

    def test_preserves_bounds(self):
        rng = np.random.default_rng(6)
        values = rng.uniform(0.2, 0.9, size=(8, 8))
        out = smooth(prob_map(values), k=3)
        assert out.values.min() >= values.min() - 1e-12
        assert out.values.max() <= values.max() + 1e-12

    def test_fully_masked_window_stays_masked(self):
        values = np.full((7, 7), 0.4)
        mask = np.zeros((7, 7), dtype=bool)
        mask[2:5, 2:5] = True
        out = smooth(prob_map(values, mask), k=3)
        assert out.mask[3, 3]
        assert not out.mask[0, 0]

    @pytest.mark.parametrize("k", [0, 2, -3])
    def test_bad_kernel(self, k):
        with pytest.raises(ValueError, match="odd"):
            smooth(prob_map(np.full((3, 3), 0.5)), k=k)


class TestPixelCount:
    def test_all_zeros(self):
        assert cafo_pixel_count(prob_map(np.zeros((5, 5)))) == 0

    def test_exact_count(self):
        values = np.full(100, 0.1)
        values[:37] = 0.9
        assert cafo_pixel_count(prob_map(values.reshape(10, 10)), 0.5) == 37

    def test_matches_enumeration(self):
        rng = np.random.default_rng(7)
        values = rng.random((9, 9))
        mask = rng.random((9, 9)) < 0.25
        pm = prob_map(values, mask)
        assert cafo_pixel_count(pm, 0.4) == brute_pixel_count(values, mask, 0.4)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(8)
        pm = prob_map(rng.random((10, 10)))
        counts = [cafo_pixel_count(pm, thr) for thr in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert counts == sorted(counts, reverse=True)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            cafo_pixel_count(prob_map(np.zeros((2, 2))), 1.0)


class TestProbStackFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        spec = SyntheticSpec(width=9, height=7, n_frames=12, noise=0.2,
                             missing_rate=0.15, base_sheds=((1, 1, 3, 3),), seed=9)
        _, probs, _ = generate_location(spec)
        write_prob_stack(probs, tmp_path / "p")
        back = read_prob_stack(tmp_path / "p")
        assert back.location_id == probs.location_id
        assert back.timestamps == probs.timestamps
        for a, b in zip(probs.maps, back.maps):
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.mask, b.mask)

    def test_rejects_scene_stack(self, tmp_path):
        from expanscan import write_scene_stack
        rng = np.random.default_rng(10)
        write_scene_stack(random_scene_series(rng, 3, 4, 4), tmp_path / "s")
        with pytest.raises(ValueError, match="PROB"):
            read_prob_stack(tmp_path / "s")

    def test_probmap_value_range_enforced(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            prob_map(np.full((2, 2), 1.5))
