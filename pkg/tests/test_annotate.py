import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from ecgfit.annotate import (
    AnnotationError,
    ExtremaSet,
    annotate,
    edge_valleys,
    ground_truth_fit,
    labels_from_extrema,
    mac_peaks,
)
from ecgfit.extract import duty_cycle_fit
from ecgfit.signals import Window
from ecgfit.synth import SynthSpec, gen_respiratory

FS = 25.0


def sine(freq, duration=60.0, phase=0.0):
    t = np.arange(int(duration * FS)) / FS
    return Window.of(np.sin(2 * np.pi * freq * t + phase), FS)


def synth_window(fit, rr, duration=60.0, noise=0.0, seed=0):
    spec = SynthSpec(fit=fit, rr_bpm=rr, duration_s=duration, fs=FS, noise_sd=noise, seed=seed)
    resp, labels = gen_respiratory(spec)
    return Window.of(resp.samples, FS), labels


class TestPeaks:
    def test_sine_maxima(self):
        w = sine(0.25, phase=0.4)
        peaks = mac_peaks(w, ma_window_s=4.0)
        # sin(2 pi f t + phi) peaks where 2 pi f t + phi = pi/2 + 2 pi k
        t_max = ((np.pi / 2 - 0.4) / (2 * np.pi) + np.arange(15)) / 0.25
        expected = np.rint(t_max * FS).astype(int)
        expected = expected[(expected > 0) & (expected < len(w) - 1)]
        assert len(peaks) == len(expected)
        assert np.max(np.abs(peaks - expected)) <= 2

    def test_ramp_has_no_peaks(self):
        assert mac_peaks(Window.of(np.linspace(0, 1, 500), FS)).size == 0

    @pytest.mark.parametrize("rr", [8, 12, 20, 28])
    def test_one_peak_per_breath(self, rr):
        w, _ = synth_window(0.3, rr)
        n = len(mac_peaks(w))
        assert abs(n - int(60 * rr / 60)) <= 1


class TestValleys:
    def test_sine_minima(self):
        w = sine(0.25, phase=0.4)
        valleys = edge_valleys(w, mac_peaks(w, 4.0))
        t_min = ((3 * np.pi / 2 - 0.4) / (2 * np.pi) + np.arange(-1, 15)) / 0.25
        expected = np.rint(t_min * FS).astype(int)
        expected = expected[(expected > 0) & (expected < len(w) - 1)]
        assert len(valleys) == len(expected)
        assert np.max(np.abs(valleys - expected)) <= 2

    def test_fit_02_rise_span(self):
        w, _ = synth_window(0.2, 12)
        peaks = mac_peaks(w)
        valleys = edge_valleys(w, peaks)
        ex = ExtremaSet(peaks, valleys)
        spans = [p - v for v, p in zip(ex.valleys, ex.peaks[ex.peaks > ex.valleys[0]])]
        period = 60 / 12 * FS
        np.testing.assert_allclose(spans, 0.2 * period, atol=2)

    def test_single_central_peak(self):
        # one full breath centred in the window; the maxima at both edges
        # sit on the boundary and are not counted as peaks
        t = np.arange(251) / FS
        w = Window.of(np.cos(2 * np.pi * 0.2 * (t - 5.0)), FS)
        peaks = mac_peaks(w)
        assert_array_equal(peaks, [125])
        valleys = edge_valleys(w, peaks)
        assert len(valleys) == 2
        assert valleys[0] < 125 < valleys[1]


class TestLabels:
    def test_valley_peak_valley(self):
        y = labels_from_extrema(ExtremaSet([40], [0, 100]), 100).labels
        assert y[:40].sum() == 40 and y[40:].sum() == 0
        assert duty_cycle_fit(y) == 0.4

    def test_peak_then_valley(self):
        y = labels_from_extrema(ExtremaSet([0], [50]), 100).labels
        assert_array_equal(y, [0] * 50 + [1] * 50)

    def test_leading_samples_before_peak(self):
        y = labels_from_extrema(ExtremaSet([10], []), 20).labels
        assert_array_equal(y, [1] * 10 + [0] * 10)

    def test_interleave_violation(self):
        with pytest.raises(AnnotationError):
            ExtremaSet([10, 20], [30])

    def test_ground_truth_fit(self):
        assert ground_truth_fit(np.ones(5)) == 1.0
        assert ground_truth_fit(np.array([1, 0] * 5)) == 0.5

    @given(st.lists(st.integers(1, 60), min_size=1, max_size=12), st.booleans())
    def test_transitions_only_at_extrema(self, gaps, valley_first):
        idx = np.cumsum(gaps)
        n = int(idx[-1]) + 5
        first, second = idx[0::2], idx[1::2]
        peaks, valleys = (second, first) if valley_first else (first, second)
        ex = ExtremaSet(peaks, valleys)
        y = labels_from_extrema(ex, n).labels
        changes = np.flatnonzero(np.diff(y)) + 1
        assert set(changes) <= set(idx.tolist())
        assert np.all(y[valleys] == 1) and np.all(y[peaks] == 0)


class TestAnnotate:
    def test_symmetric_sine_half_duty(self):
        a = annotate(sine(0.2))
        assert a.fit == pytest.approx(0.5, abs=0.02)
        assert a.rr_bpm == pytest.approx(12.0, abs=0.1)

    def test_fit_035(self):
        w, _ = synth_window(0.35, 15)
        assert annotate(w).fit == pytest.approx(0.35, abs=0.02)

    @given(st.floats(0.1, 50), st.floats(-20, 20))
    @settings(max_examples=25, deadline=None)
    def test_affine_invariant(self, a, b):
        w, _ = synth_window(0.4, 14, duration=25.0, noise=0.05, seed=3)
        base = annotate(w)
        moved = annotate(Window.of(a * w.samples + b, FS))
        assert_array_equal(base.labels.labels, moved.labels.labels)

    def test_noisy_labels_mostly_right(self):
        w, truth = synth_window(0.3, 12, noise=0.05, seed=1)
        y = annotate(w).labels.labels
        assert np.mean(y == truth) > 0.9
