import numpy as np
import pytest

from ecgfit.signals import Window
from ecgfit.synth import SynthSpec, gen_respiratory
from ecgfit.validate import (
    Reason,
    ValidationConfig,
    ValidationVerdict,
    rates_disagree,
    rr_from_autocorr,
    rr_from_peaks,
    validate_window,
)

FS = 25.0


def tone(bpm, duration=25.0, fs=FS):
    t = np.arange(int(duration * fs)) / fs
    return Window.of(np.sin(2 * np.pi * bpm / 60 * t), fs)


class TestRates:
    def test_peak_and_autocorr_agree_on_sine(self):
        w = tone(15, 60.0)
        assert rr_from_peaks(w) == pytest.approx(15.0, abs=0.1)
        assert rr_from_autocorr(w) == pytest.approx(15.0, abs=0.2)

    def test_disagreement_rule(self):
        assert not rates_disagree(10.0, 20.0)   # exactly 100 %
        assert rates_disagree(10.0, 20.5)
        assert rates_disagree(20.5, 10.0)


class TestVerdicts:
    def test_clean_sine_accepted(self):
        v = validate_window(tone(15))
        assert v.accepted and v.reason is None

    def test_flat_no_peaks(self):
        v = validate_window(Window.of(np.zeros(625), FS))
        assert v.reason is Reason.NO_PEAKS

    def test_fast_sine_too_high(self):
        v = validate_window(tone(90))
        assert v.reason is Reason.RR_TOO_HIGH
        assert v.rr1_bpm == pytest.approx(90.0, abs=1.0)

    def test_white_noise_rejected_for_quality(self):
        rng = np.random.default_rng(0)
        v = validate_window(Window.of(rng.standard_normal(625), FS))
        assert v.reason in (Reason.LOW_SPECTRAL_PURITY, Reason.RR_DISAGREEMENT)

    def test_purity_rule_alone(self):
        # a clean tone fails only when the purity bar is raised above it
        v = validate_window(tone(15), ValidationConfig(min_purity_db=100.0))
        assert v.reason is Reason.LOW_SPECTRAL_PURITY

    def test_reason_strings(self):
        assert [r.value for r in Reason] == ["NoPeaks", "RrDisagreement", "RrTooHigh", "LowSpectralPurity"]

    def test_verdict_consistency(self):
        with pytest.raises(ValueError):
            ValidationVerdict(True, Reason.NO_PEAKS, None, None, 0.0)
        with pytest.raises(ValueError):
            ValidationVerdict(False, None, None, None, 0.0)

    def test_noisy_synthetic_breathing_accepted(self):
        for seed in range(5):
            spec = SynthSpec(fit=0.3, rr_bpm=8 + 4 * seed, noise_sd=0.05, duration_s=25, fs=FS, seed=seed)
            resp, _ = gen_respiratory(spec)
            assert validate_window(Window.of(resp.samples, FS)).accepted
