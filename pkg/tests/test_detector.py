"""Fitting, test statistic, reports, null calibration, ranking."""

import json

import numpy as np
import pytest

from expanscan import (
    FitConfig,
    FootprintModel,
    NullDistribution,
    SyntheticSpec,
    calibrate_null,
    detect,
    fit_static,
    fit_unrestricted,
    generate_location,
    log_likelihood,
    rank_locations,
    test_statistic,
)
from expanscan.detector import (
    FitResult,
    detection_record,
    report_from_record,
    rle_decode,
    rle_encode,
)
from helpers import day, prob_series_from_array, random_prob_series

CFG = FitConfig(seed=3)


def make_fit_result(loc, ll):
    model = FootprintModel(f0=np.zeros((2, 2)), fplus=np.zeros((2, 2)), t_star=None)
    return FitResult(location_id=loc, model=model, log_likelihood=ll,
                     converged=True, iterations_used=1, restart_index=0)


def binary_series(pattern, n_frames=6):
    values = np.broadcast_to(np.asarray(pattern, dtype=np.float64),
                             (n_frames, *np.shape(pattern)))
    return prob_series_from_array(values)


class TestFitStatic:
    def test_constant_binary_map_recovered(self):
        pattern = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        result = fit_static(binary_series(pattern), CFG)
        assert np.array_equal(result.model.f0 >= 0.5, pattern.astype(bool))
        assert not result.model.fplus.any()
        assert result.model.t_star is None

    def test_constant_map_thresholds_to_majority(self):
        pattern = np.array([[0.8, 0.3], [0.51, 0.49]])
        result = fit_static(binary_series(pattern), CFG)
        assert np.array_equal(result.model.f0 >= 0.5, pattern > 0.5)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(0)
        grid = np.arange(0.0, 1.0001, 0.001)
        for _ in range(5):
            series = random_prob_series(rng, n_frames=3, height=2, width=2)
            result = fit_static(series, CFG)
            p = np.stack([np.asarray(m.values) for m in series.maps])
            for i in range(2):
                for j in range(2):
                    per_f = np.log(np.clip(
                        p[:, i, j, None] * grid[None, :]
                        + (1 - p[:, i, j, None]) * (1 - grid[None, :]),
                        1e-9, 1.0)).sum(axis=0)
                    fittedexp = np.log(np.clip(
                        p[:, i, j] * result.model.f0[i, j]
                        + (1 - p[:, i, j]) * (1 - result.model.f0[i, j]),
                        1e-9, 1.0)).sum()
                    assert fitted >= per_f.max() - 1e-6

    def test_nesting(self):
        rng = np.random.default_rng(1)
        for seed in range(8):
            series = random_prob_series(rng, n_frames=4, height=3, width=3)
            static = fit_static(series, CFG)
            unres = fit_unrestricted(series, CFG, static_warm=static)
            tol = 1e-6 * max(1.0, abs(unres.log_likelihood))
            assert static.log_likelihood <= unres.log_likelihood + tol


class TestFitUnrestricted:
    def test_static_scene_identity(self):
        pattern = np.array([[1.0, 0.0], [0.0, 1.0]])
        result = fit_unrestricted(binary_series(pattern), CFG)
        assert not (result.model.fplus >= 0.5).any()
        assert np.array_equal(result.model.f0 >= 0.5, pattern.astype(bool))

    def test_recovers_added_block_and_transition(self):
        spec = SyntheticSpec(width=20, height=20, n_frames=100, noise=0.0,
                             missing_rate=0.0, base_sheds=((1, 1, 5, 5),),
                             added_shed=(10, 5, 10, 13), true_t_star=50, seed=2)
        _, probs, truth = generate_location(spec)
        result = fit_unrestricted(probs, CFG)
        block = np.zeros((20, 20), dtype=bool)
        block[10:20, 5:18] = True
        assert np.array_equal(result.model.fplus >= 0.5, block)
        assert abs(result.model.t_star - 50) <= 1.0

    @pytest.mark.parametrize("solver", ["newton", "momentum"])
    def test_beats_random_search(self, solver):
        rng = np.random.default_rng(3)
        config = FitConfig(seed=4, solver=solver)
        for _ in range(3):
            series = random_prob_series(rng, n_frames=4, height=3, width=3)
            result = fit_unrestricted(series, config)
            draws = []
            for _ in range(50):
                model = FootprintModel(
                    f0=rng.random((3, 3)), fplus=rng.random((3, 3)),
                    t_star=float(rng.uniform(1, 4)))
                draws.append(log_likelihood(model, series))
            assert result.log_likelihood >= max(draws)

    def test_deterministic_given_seed(self):
        spec = SyntheticSpec(width=12, height=12, n_frames=20, noise=0.2,
                             missing_rate=0.1, base_sheds=((2, 2, 4, 4),),
                             added_shed=(7, 7, 3, 4), true_t_star=10, seed=5)
        _, probs, _ = generate_location(spec)
        a = fit_unrestricted(probs, FitConfig(seed=9))
        b = fit_unrestricted(probs, FitConfig(seed=9))
        assert a.log_likelihood == b.log_likelihood
        assert np.array_equal(a.model.f0, b.model.f0)
        assert np.array_equal(a.model.fplus, b.model.fplus)
        assert a.model.t_star == b.model.t_star

    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError):
            prob_series_from_array(np.full((3, 2, 2), np.nan))


class TestTestStatistic:
    def test_identical_likelihoods(self):
        assert test_statistic(make_fit_result("a", -10.0),
                              make_fit_result("a", -10.0)) == 0.0

    def test_arithmetic(self):
        assert test_statistic(make_fit_result("a", -100.0),
                              make_fit_result("a", -150.0)) == 50.0

    def test_floored_at_zero(self):
        assert test_statistic(make_fit_result("a", -150.0),
                              make_fit_result("a", -100.0)) == 0.0

    def test_mismatched_locations(self):
        with pytest.raises(ValueError, match="different locations"):
            test_statistic(make_fit_result("a", -1.0), make_fit_result("b", -1.0))


class TestDetect:
    def test_static_scene_zero_area(self):
        spec = SyntheticSpec(width=16, height=16, n_frames=24, noise=0.05,
                             missing_rate=0.0, base_sheds=((3, 3, 5, 6),), seed=6)
        _, probs, _ = generate_location(spec)
        report = detect(probs, CFG)
        assert report.expansion_area_m2 == 0.0

    def test_expansion_area_within_one_row(self):
        spec = SyntheticSpec(width=32, height=32, n_frames=40, noise=0.05,
                             missing_rate=0.0, base_sheds=((2, 2, 6, 6),),
                             added_shed=(18, 10, 10, 20), true_t_star=20,
                             pixel_size_m=3.0, seed=7)
        _, probs, _ = generate_location(spec)
        report = detect(probs, CFG)
        assert report.expansion_area_m2 == pytest.approx(1800.0, abs=60.0)

    def test_maps_t_star_to_nearest_timestamp(self):
        spec = SyntheticSpec(width=12, height=12, n_frames=20, noise=0.0,
                             missing_rate=0.0, base_sheds=(),
                             added_shed=(2, 2, 5, 5), true_t_star=10, seed=8)
        _, probs, _ = generate_location(spec)
        report = detect(probs, CFG)
        nearest = int(np.clip(round(report.t_star_index), 1, 20))
        assert report.t_star_date == probs.maps[nearest - 1].timestamp

    def test_null_percentile_of_maximum(self):
        spec = SyntheticSpec(width=12, height=12, n_frames=20, noise=0.0,
                             missing_rate=0.0, base_sheds=(),
                             added_shed=(2, 2, 5, 5), true_t_star=10, seed=8)
        _, probs, _ = generate_location(spec)
        bare = detect(probs, CFG)
        null = NullDistribution(values=np.linspace(0, bare.test_statistic, 99))
        report = detect(probs, CFG, null=null)
        assert report.null_percentile == 1.0

    def test_monotone_damage(self):
        rng = np.random.default_rng(9)
        base = np.clip(rng.normal(0.0, 0.1, size=(30, 16, 16)), 0, 1)
        series = prob_series_from_array(base)
        ts_base = detect(series, CFG).test_statistic
        damaged = base.copy()
        damaged[15:, 5:10, 5:10] = 1.0  # 25-pixel block in the second half
        ts_damaged = detect(prob_series_from_array(damaged), CFG).test_statistic
        tol = 1e-6 * max(1.0, ts_base)
        assert ts_damaged >= ts_base - tol

    def test_block_at_zero_noise_increases_ts(self):
        flat = np.zeros((30, 16, 16))
        flat[:, 2:4, 2:6] = 1.0  # static shed
        ts_static = detect(prob_series_from_array(flat), CFG).test_statistic
        damaged = flat.copy()
        damaged[15:, 8:13, 8:13] = 1.0
        ts_damaged = detect(prob_series_from_array(damaged), CFG).test_statistic
        assert ts_damaged > ts_static + 1.0

    def test_reversal_removes_monotone_expansion_signal(self):
        # The footprint model only ever adds structure, so reversing an
        # expansion (turning it into a removal) must not score higher.
        spec = SyntheticSpec(width=16, height=16, n_frames=30, noise=0.0,
                             missing_rate=0.0, base_sheds=((2, 2, 4, 4),),
                             added_shed=(9, 9, 5, 5), true_t_star=15, seed=10)
        _, probs, _ = generate_location(spec)
        forward = detect(probs, CFG).test_statistic
        values = np.stack([np.asarray(m.values) for m in probs.maps])[::-1]
        reversed_series = prob_series_from_array(values)
        backward = detect(reversed_series, CFG).test_statistic
        assert backward <= forward

    def test_detect_deterministic_records(self):
        spec = SyntheticSpec(width=12, height=12, n_frames=16, noise=0.2,
                             missing_rate=0.1, base_sheds=((2, 2, 4, 4),),
                             added_shed=(7, 7, 3, 3), true_t_star=8, seed=11)
        _, probs, _ = generate_location(spec)
        rec_a = json.dumps(detection_record(detect(probs, CFG)))
        rec_b = json.dumps(detection_record(detect(probs, CFG)))
        assert rec_a == rec_b


class TestNullDistribution:
    def test_single_sample_member_query(self):
        null = calibrate_null([_report_with_ts(5.0)])
        assert null.percentile(5.0) == 1.0

    def test_interpolated_query(self):
        null = NullDistribution(values=np.array([1.0, 2.0, 3.0, 4.0]))
        assert null.percentile(2.5) == 0.5

    def test_member_queries_match_rank_enumeration(self):
        rng = np.random.default_rng(12)
        values = rng.random(200)
        null = NullDistribution(values=values)
        for x in values:
            less = sum(1 for v in values if v < x)
            ties = sum(1 for v in values if v == x)
            expected = (less + 0.5 * (ties + 1)) / 200
            assert null.percentile(float(x)) == pytest.approx(expected, abs=1e-12)

    def test_tied_values_use_midpoint_rank(self):
        null = NullDistribution(values=np.array([1.0, 2.0, 2.0, 3.0]))
        assert null.percentile(2.0) == pytest.approx((1 + 0.5 * 3) / 4)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            calibrate_null([])


def _report_with_ts(ts):
    from expanscan import DetectionReport
    return DetectionReport(
        location_id=f"loc-{ts}", test_statistic=ts, t_star_index=1.0,
        t_star_date=day(0), expansion_area_m2=0.0,
        footprint_before=np.zeros((2, 2), dtype=bool),
        footprint_added=np.zeros((2, 2), dtype=bool))


class TestRanking:
    def test_sorted_descending(self):
        reports = [_report_with_ts(3.0), _report_with_ts(9.0), _report_with_ts(1.0)]
        ranked = rank_locations(reports)
        assert [r.test_statistic for r in ranked] == [9.0, 3.0, 1.0]

    def test_ties_break_by_location_id(self):
        a = _report_with_ts(5.0)
        b = _report_with_ts(5.0)
        object.__setattr__(a, "location_id", "zzz")
        object.__setattr__(b, "location_id", "aaa")
        assert [r.location_id for r in rank_locations([a, b])] == ["aaa", "zzz"]


class TestSerialization:
    def test_rle_round_trip(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            mask = rng.random((6, 9)) < 0.4
            assert np.array_equal(rle_decode(rle_encode(mask), (6, 9)), mask)

    def test_rle_known_value(self):
        mask = np.array([[0, 0, 1], [1, 1, 0]], dtype=bool)
        assert rle_encode(mask) == [0, 2, 1, 3, 0, 1]

    def test_rle_bad_length(self):
        with pytest.raises(ValueError):
            rle_decode([1, 2, 0], (1, 3))

    def test_rle_wrong_total(self):
        with pytest.raises(ValueError):
            rle_decode([1, 2], (2, 2))

    def test_record_round_trip(self):
        report = _report_with_ts(17.5)
        back = report_from_record(json.loads(json.dumps(detection_record(report))))
        assert back.location_id == report.location_id
        assert back.test_statistic == report.test_statistic
        assert back.t_star_date == report.t_star_date
        assert np.array_equal(back.footprint_before, report.footprint_before)


class TestFitConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"max_iterations": 0},
        {"step_size": 0.0},
        {"momentum": 1.0},
        {"restarts": 0},
        {"sparsity": -0.1},
        {"solver": "adam"},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)

    def test_iterations_respect_budget(self):
        rng = np.random.default_rng(14)
        series = random_prob_series(rng, n_frames=5, height=4, width=4)
        config = FitConfig(seed=1, max_iterations=7)
        result = fit_unrestricted(series, config)
        assert result.iterations_used <= 7


class TestMomentumSolver:
    def test_recovers_clear_expansion(self):
        spec = SyntheticSpec(width=8, height=8, n_frames=20, noise=0.0,
                             missing_rate=0.0, base_sheds=((1, 1, 3, 3),),
                             added_shed=(4, 4, 3, 3), true_t_star=10, seed=15)
        _, probs, _ = generate_location(spec)
        config = FitConfig(seed=2, solver="momentum", max_iterations=1200)
        static = fit_static(probs, config)
        unres = fit_unrestricted(probs, config, static_warm=static)
        ts = test_statistic(unres, static)
        assert ts > 10.0
        added = unres.model.fplus >= 0.5
        block = np.zeros((8, 8), dtype=bool)
        block[4:7, 4:7] = True
        assert np.array_equal(added, block)
