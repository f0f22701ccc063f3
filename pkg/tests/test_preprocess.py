import math

import numpy as np
import pytest

from icpforecast.errors import (
    AllMissing,
    DegenerateScale,
    EmptyRecording,
    EmptySignal,
    InvalidTrim,
    TooShort,
)
from icpforecast.preprocess import (
    clip_physiologic,
    detect_unrealistic,
    fill_missing,
    preprocess_recording,
    resample_to_rate,
    scaler_apply,
    scaler_fit,
    scaler_invert,
    smooth_downsample,
    trim_ending,
)
from icpforecast.types import PreprocessConfig, RawRecording

from conftest import make_id, make_signal


def raw(times, values, nominal_rate=None):
    return RawRecording(id=make_id("p0", "r0"), times=np.asarray(times, float),
                        values=np.asarray(values, float), nominal_rate=nominal_rate)


class TestResample:
    def test_bin_averages_contained_values(self):
        # two samples inside the first 1-second bin at 1 Hz
        out = resample_to_rate(raw([0.1, 0.6], [10.0, 12.0]), 1.0)
        assert out.values[0] == 11.0

    def test_regular_input_is_identity(self):
        times = np.arange(500) / 50.0
        values = np.sin(times)
        out = resample_to_rate(raw(times, values), 50.0)
        assert out.values.shape == values.shape
        np.testing.assert_allclose(out.values, values, rtol=0, atol=0)

    def test_empty_bin_becomes_missing(self):
        out = resample_to_rate(raw([0.0, 2.5], [1.0, 2.0]), 1.0)
        assert np.isnan(out.values[1])
        assert out.values[0] == 1.0 and out.values[2] == 2.0

    def test_empty_recording_raises(self):
        with pytest.raises(EmptyRecording):
            resample_to_rate(raw([], []), 50.0)

    def test_missing_samples_do_not_pollute_bins(self):
        out = resample_to_rate(raw([0.1, 0.2], [np.nan, 4.0]), 1.0)
        assert out.values[0] == 4.0


class TestClip:
    def test_above_max_becomes_missing(self):
        out = clip_physiologic(np.array([55.0]), -5.0, 50.0)
        assert np.isnan(out[0])

    def test_boundary_kept(self):
        out = clip_physiologic(np.array([-5.0, 50.0]), -5.0, 50.0)
        np.testing.assert_array_equal(out, [-5.0, 50.0])

    def test_in_range_unchanged(self):
        v = np.array([0.0, 10.0, 49.9])
        np.testing.assert_array_equal(clip_physiologic(v, -5.0, 50.0), v)


class TestFill:
    def test_runs_take_next_value(self):
        out = fill_missing(np.array([1.0, np.nan, np.nan, 4.0]))
        np.testing.assert_array_equal(out, [1.0, 4.0, 4.0, 4.0])

    def test_no_missing_is_identity(self):
        v = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(fill_missing(v), v)

    def test_leading_gap(self):
        np.testing.assert_array_equal(fill_missing(np.array([np.nan, 7.0])), [7.0, 7.0])

    def test_trailing_gap_takes_last_value(self):
        np.testing.assert_array_equal(
            fill_missing(np.array([np.nan, 3.0, np.nan, np.nan])), [3.0, 3.0, 3.0, 3.0])

    def test_all_missing_raises(self):
        with pytest.raises(AllMissing):
            fill_missing(np.array([np.nan, np.nan]))


def naive_smooth_downsample(values, w, st, ds):
    # independent loop implementation of the same operator
    L = len(values)
    group = ds // st
    out = []
    for m in range(L // ds):
        acc = []
        for j in range(m * group, (m + 1) * group):
            end = (j + 1) * st
            start = max(end - w, 0)
            acc.append(np.mean(values[start:end]))
        out.append(np.mean(acc))
    return np.array(out)


class TestSmoothDownsample:
    def test_constant_maps_to_constant(self):
        out = smooth_downsample(np.full(1000, 7.5), w=100, st=10, ds=10)
        assert out.shape == (100,)
        np.testing.assert_allclose(out, 7.5)

    def test_matches_naive_windowed_mean(self, rng):
        values = rng.normal(size=3000)
        for w, st, ds in [(100, 10, 10), (300, 50, 100), (60, 20, 60)]:
            got = smooth_downsample(values, w, st, ds)
            np.testing.assert_allclose(got, naive_smooth_downsample(values, w, st, ds), atol=1e-10)

    def test_ramp_equals_window_means(self):
        values = np.arange(500, dtype=float)
        got = smooth_downsample(values, w=100, st=100, ds=100)
        expected = [np.mean(values[max(0, 100 * (m + 1) - 100):100 * (m + 1)]) for m in range(5)]
        np.testing.assert_allclose(got, expected)

    def test_exact_multiple_length(self):
        out = smooth_downsample(np.ones(10 * 50), w=50, st=50, ds=50)
        assert out.shape == (10,)

    def test_too_short_raises(self):
        with pytest.raises(TooShort):
            smooth_downsample(np.ones(10), w=100, st=10, ds=10)

    def test_causal_no_lookahead(self):
        # changing the future must not change earlier outputs
        base = np.zeros(1000)
        bumped = base.copy()
        bumped[900:] = 100.0
        a = smooth_downsample(base, w=100, st=100, ds=100)
        b = smooth_downsample(bumped, w=100, st=100, ds=100)
        np.testing.assert_array_equal(a[:9], b[:9])


class TestDetectUnrealistic:
    def test_long_plateau_rejected(self):
        values = np.concatenate([np.arange(10.0), np.full(90, 5.0), np.arange(10.0)])
        flat = detect_unrealistic(make_signal("p", "r", values), 60)
        assert flat is not None
        assert flat.start_minute == 10
        assert flat.run_minutes == 90

    def test_noise_passes(self, rng):
        assert detect_unrealistic(make_signal("p", "r", rng.normal(size=200)), 60) is None

    def test_infinite_threshold_disables(self):
        sig = make_signal("p", "r", np.zeros(500))
        assert detect_unrealistic(sig, math.inf) is None

    def test_monotone_in_threshold(self, rng):
        for _ in range(20):
            values = np.round(rng.normal(size=100), 1)
            sig = make_signal("p", "r", values)
            rejected_at = [t for t in range(1, 30) if detect_unrealistic(sig, t) is not None]
            # rejection set must be a prefix of thresholds
            assert rejected_at == list(range(1, len(rejected_at) + 1))


class TestTrim:
    def test_no_entry_is_identity(self):
        sig = make_signal("p", "r", np.arange(50.0))
        assert trim_ending(sig, {}) is sig

    def test_truncates_at_cut(self):
        sig = make_signal("p", "r", np.arange(200.0))
        out = trim_ending(sig, {"r": 100})
        assert len(out) == 100
        np.testing.assert_array_equal(out.values, np.arange(100.0))

    def test_zero_cut_raises(self):
        with pytest.raises(EmptySignal):
            trim_ending(make_signal("p", "r", np.arange(5.0)), {"r": 0})

    def test_cut_beyond_length_raises(self):
        with pytest.raises(InvalidTrim):
            trim_ending(make_signal("p", "r", np.arange(5.0)), {"r": 5})


class TestScaler:
    def test_pooled_moments(self):
        stats = scaler_fit([make_signal("a", "a1", [1.0, 1.0]), make_signal("b", "b1", [3.0, 3.0])])
        assert stats.mean == 2.0
        assert stats.std == 1.0  # population std of [1,1,3,3]

    def test_constant_signal_degenerate(self):
        with pytest.raises(DegenerateScale):
            scaler_fit([make_signal("a", "a1", [4.0, 4.0, 4.0])])

    def test_round_trip(self, rng):
        stats = scaler_fit([make_signal("a", "a1", rng.normal(10, 3, size=100))])
        v = rng.normal(10, 3, size=50)
        np.testing.assert_allclose(scaler_invert(scaler_apply(v, stats), stats), v, rtol=1e-12)

    def test_centering_and_unit_scale(self):
        stats = scaler_fit([make_signal("a", "a1", [0.0, 2.0, 4.0])])
        assert scaler_apply(np.array([stats.mean]), stats)[0] == 0.0
        np.testing.assert_allclose(scaler_apply(np.array([stats.mean + stats.std]), stats), [1.0])


class TestPipeline:
    def cfg(self, **kw):
        base = dict(target_rate=1.0, w=60, st=60, ds=60, min_duration=120,
                    flat_run_threshold=60.0)
        base.update(kw)
        return PreprocessConfig(**base)

    def test_three_hour_recording_gives_per_minute_values(self, rng):
        minutes = 180
        t = np.arange(minutes * 60) / 60.0
        values = 12 + 4 * np.sin(2 * np.pi * t / 37.0) + rng.normal(0, 0.5, t.size)
        rec = raw(np.arange(values.size, dtype=float), values)
        outcome = preprocess_recording(rec, self.cfg())
        assert outcome.accepted
        assert len(outcome.signal) == minutes

    def test_values_stay_in_hull(self, rng):
        values = rng.uniform(0, 20, size=300 * 60)
        rec = raw(np.arange(values.size, dtype=float), values)
        outcome = preprocess_recording(rec, self.cfg())
        assert outcome.signal.values.min() >= values.min() - 1e-9
        assert outcome.signal.values.max() <= values.max() + 1e-9

    def test_short_recording_rejected(self):
        values = np.full(100 * 60, 10.0) + np.sin(np.arange(100 * 60))
        rec = raw(np.arange(values.size, dtype=float), values)
        outcome = preprocess_recording(rec, self.cfg())
        assert not outcome.accepted
        assert "min_duration" in outcome.rejected_reason

    def test_flat_signal_rejected(self):
        rec = raw(np.arange(200 * 60, dtype=float), np.full(200 * 60, 10.0))
        outcome = preprocess_recording(rec, self.cfg())
        assert not outcome.accepted
        assert "constant run" in outcome.rejected_reason

    def test_out_of_range_only_recording_rejected(self):
        rec = raw(np.arange(100, dtype=float), np.full(100, 120.0))
        outcome = preprocess_recording(rec, self.cfg())
        assert not outcome.accepted
