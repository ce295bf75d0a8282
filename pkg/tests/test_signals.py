import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from ecgfit.signals import (
    SampledSignal,
    Window,
    autocorrelate,
    detect_peaks,
    ecg_envelope,
    minmax_normalize,
    resample,
    spectral_purity,
    window_split,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def sine(freq, duration, fs, phase=0.0):
    t = np.arange(int(round(duration * fs))) / fs
    return Window.of(np.sin(2 * np.pi * freq * t + phase), fs)


class TestSampledSignal:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            SampledSignal([0.0, np.nan], 10.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            SampledSignal([0.0, 1.0], 0.0)

    def test_samples_read_only(self):
        s = SampledSignal([1.0, 2.0], 5.0)
        with pytest.raises(ValueError):
            s.samples[0] = 3.0

    def test_window_length_must_match_duration(self):
        with pytest.raises(ValueError):
            Window(SampledSignal(np.zeros(10), 5.0), 3.0)


class TestWindowSplit:
    def test_300s_into_25s_windows(self):
        sig = SampledSignal(np.zeros(300 * 25), 25.0)
        wins = window_split(sig, 25.0)
        assert len(wins) == 12
        assert all(len(w) == 625 for w in wins)

    def test_trailing_partial_dropped(self):
        sig = SampledSignal(np.arange(130.0), 1.0)
        wins = window_split(sig, 60.0)
        assert [w.start_index for w in wins] == [0, 60]

    def test_overlap(self):
        sig = SampledSignal(np.arange(10.0), 1.0)
        wins = window_split(sig, 4.0, overlap_s=2.0)
        assert [w.start_index for w in wins] == [0, 2, 4, 6]
        assert_array_equal(wins[1].samples, [2, 3, 4, 5])

    @given(n=st.integers(1, 500), w=st.integers(1, 50))
    def test_windows_tile_the_signal(self, n, w):
        sig = SampledSignal(np.arange(float(n)), 1.0)
        wins = window_split(sig, float(w))
        assert len(wins) == n // w
        if wins:
            assert_array_equal(np.concatenate([x.samples for x in wins]), np.arange(float(len(wins) * w)))


class TestNormalize:
    def test_range(self):
        w = minmax_normalize(Window.of([2.0, 4.0, 3.0], 1.0))
        assert_array_equal(w.samples, [0.0, 1.0, 0.5])

    def test_constant_maps_to_zeros(self):
        assert_array_equal(minmax_normalize(Window.of([3.0] * 4, 1.0)).samples, np.zeros(4))

    @given(arrays(np.float64, st.integers(2, 200), elements=finite))
    def test_output_in_unit_interval(self, x):
        y = minmax_normalize(SampledSignal(x, 1.0)).samples
        assert y.min() >= 0.0 and y.max() <= 1.0
        if np.ptp(x) > 0:
            assert y.min() == 0.0 and y.max() == 1.0

    @given(arrays(np.float64, st.integers(2, 100), elements=st.floats(-100, 100)),
           st.floats(0.1, 10), st.floats(-50, 50))
    def test_affine_invariant(self, x, a, b):
        assume(np.ptp(x) > 1e-3)  # keep a*x + b from cancelling to a constant
        y1 = minmax_normalize(SampledSignal(x, 1.0)).samples
        y2 = minmax_normalize(SampledSignal(a * x + b, 1.0)).samples
        assert_allclose(y1, y2, atol=1e-6)


class TestDetectPeaks:
    def test_sine_peak_count(self):
        # 0.25 Hz over 60 s -> 15 maxima
        w = sine(0.25, 60.0, 25.0, phase=0.3)
        assert len(detect_peaks(w)) == 15

    def test_min_distance_keeps_most_prominent(self):
        x = np.zeros(100)
        x[40], x[45] = 1.0, 0.6
        peaks = detect_peaks(Window.of(x, 10.0), min_prominence=0.1, min_distance_s=1.0)
        assert_array_equal(peaks.indices, [40])

    def test_flat_has_no_peaks(self):
        assert len(detect_peaks(Window.of(np.ones(50), 10.0))) == 0

    @given(arrays(np.float64, st.integers(3, 300), elements=st.floats(-10, 10)),
           st.floats(0.1, 5.0))
    @settings(max_examples=60)
    def test_spacing_and_prominence(self, x, dist):
        fs = 10.0
        peaks = detect_peaks(Window.of(x, fs), min_prominence=0.2, min_distance_s=dist)
        if len(peaks) > 1:
            assert np.diff(peaks.indices).min() >= dist * fs - 1e-9
        if len(peaks):
            # prominences are reported as fractions of the range
            assert peaks.prominences.min() >= 0.2 - 1e-12


class TestAutocorrelate:
    def test_zero_lag_is_one(self):
        r = autocorrelate(sine(0.2, 30.0, 10.0))
        assert r.samples[0] == pytest.approx(1.0)

    def test_periodic_peak_at_period(self):
        r = autocorrelate(sine(0.25, 60.0, 10.0)).samples
        lag = 1 + int(np.argmax(r[20:60])) + 19
        assert lag == 40

    def test_constant(self):
        r = autocorrelate(Window.of(np.ones(8), 1.0)).samples
        assert_array_equal(r, [1.0] + [0.0] * 7)


class TestSpectralPurity:
    def test_pure_tone_above_10_db(self):
        # bin-aligned 0.3 Hz tone: no leakage into other bins
        assert spectral_purity(sine(0.3, 60.0, 25.0)) > 10.0

    def test_pure_tone_25s_window(self):
        # 0.3 Hz in 25 s is not bin-aligned; leakage caps purity but it stays high
        assert spectral_purity(sine(0.3, 25.0, 25.0)) > 5.0

    def test_white_noise_is_low(self):
        rng = np.random.default_rng(0)
        assert spectral_purity(Window.of(rng.standard_normal(625), 25.0)) < 0.9

    def test_constant_is_minus_inf(self):
        assert spectral_purity(Window.of(np.ones(100), 25.0)) == -np.inf

    def test_requires_band_bins(self):
        with pytest.raises(ValueError):
            spectral_purity(Window.of(np.arange(4.0), 25.0))


class TestEnvelope:
    def test_am_pulse_train_dominant_frequency(self):
        fs, dur = 250.0, 60.0
        t = np.arange(int(dur * fs)) / fs
        x = np.zeros_like(t)
        beats = np.arange(0.3, dur, 0.8)
        x[np.rint(beats * fs).astype(int)] = 1.0 + 0.3 * np.sin(2 * np.pi * 0.25 * beats)
        env = ecg_envelope(Window.of(x, fs)).samples
        assert len(env) == len(x)
        spec = np.abs(np.fft.rfft(env - env.mean()))
        freqs = np.fft.rfftfreq(len(env), 1 / fs)
        assert freqs[np.argmax(spec)] == pytest.approx(0.25, abs=1 / dur)

    def test_cutoff_above_nyquist_rejected(self):
        with pytest.raises(ValueError):
            ecg_envelope(Window.of(np.random.default_rng(0).random(100), 1.0), cutoff_hz=0.7)


class TestResample:
    def test_250_to_25_length(self):
        w = Window.of(np.zeros(6250), 250.0)
        out = resample(w, 25.0)
        assert isinstance(out, Window)
        assert len(out) == 625 and out.fs == 25.0

    def test_linear_signal_preserved(self):
        t = np.arange(1000) / 100.0
        out = resample(SampledSignal(3 * t + 1, 100.0), 30.0)
        t_out = np.arange(len(out)) / 30.0
        assert_allclose(out.samples, 3 * t_out + 1, atol=1e-12)

    def test_identity_rate(self):
        s = SampledSignal(np.random.default_rng(1).random(50), 10.0)
        assert_array_equal(resample(s, 10.0).samples, s.samples)
