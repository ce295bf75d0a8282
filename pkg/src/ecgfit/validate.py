"""Respiratory-window quality gate.

A window is discarded when the first of these rules fires:

1. fewer than two peaks in the respiratory signal (``NO_PEAKS``);
2. the peak-interval and autocorrelation rate estimates disagree by more
   than 100 %, or the autocorrelation gives no rate at all
   (``RR_DISAGREEMENT``);
3. the peak-interval rate exceeds 60 breaths/min (``RR_TOO_HIGH``);
4. spectral purity below 0.9 dB (``LOW_SPECTRAL_PURITY``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .extract import peaks_to_rate
from .signals import SignalLike, autocorrelate, detect_peaks, minmax_normalize, spectral_purity

# Peak spacing for the quality rules only. It must allow rates above 60 bpm,
# otherwise rule 3 could never fire.
VALIDATION_MIN_DISTANCE_S = 0.3
VALIDATION_MIN_PROMINENCE = 0.2


class Reason(str, enum.Enum):
    NO_PEAKS = "NoPeaks"
    RR_DISAGREEMENT = "RrDisagreement"
    RR_TOO_HIGH = "RrTooHigh"
    LOW_SPECTRAL_PURITY = "LowSpectralPurity"


@dataclass(frozen=True)
class ValidationConfig:
    max_disagreement: float = 1.0
    max_rr_bpm: float = 60.0
    min_purity_db: float = 0.9
    min_prominence: float = VALIDATION_MIN_PROMINENCE
    min_distance_s: float = VALIDATION_MIN_DISTANCE_S


@dataclass(frozen=True)
class ValidationVerdict:
    accepted: bool
    reason: Optional[Reason]
    rr1_bpm: Optional[float]
    rr2_bpm: Optional[float]
    purity_db: float

    def __post_init__(self):
        if self.accepted == (self.reason is not None):
            raise ValueError("an accepted verdict carries no reason; a rejection carries one")


def rr_from_peaks(resp: SignalLike, min_prominence=VALIDATION_MIN_PROMINENCE,
                  min_distance_s=VALIDATION_MIN_DISTANCE_S) -> Optional[float]:
    """Rate from the mean spacing of peaks in the respiratory signal, or None."""
    peaks = detect_peaks(minmax_normalize(resp), min_prominence, min_distance_s)
    return peaks_to_rate(peaks.indices, resp.fs)


def rr_from_autocorr(resp: SignalLike, min_prominence=VALIDATION_MIN_PROMINENCE,
                     min_distance_s=VALIDATION_MIN_DISTANCE_S) -> Optional[float]:
    """Rate from the lag of the first prominent autocorrelation peak, or None."""
    r = autocorrelate(resp)
    peaks = detect_peaks(r, min_prominence, min_distance_s)
    lags = peaks.indices[peaks.indices > 0]
    if lags.size == 0:
        return None
    return 60.0 * r.fs / float(lags[0])


def rates_disagree(rr1: float, rr2: float, max_disagreement: float = 1.0) -> bool:
    return abs(rr1 - rr2) / min(rr1, rr2) > max_disagreement


def validate_window(resp: SignalLike, config: ValidationConfig = ValidationConfig()) -> ValidationVerdict:
    rr1 = rr_from_peaks(resp, config.min_prominence, config.min_distance_s)
    rr2 = rr_from_autocorr(resp, config.min_prominence, config.min_distance_s)
    try:
        purity = spectral_purity(resp)
    except ValueError:
        purity = -math.inf

    reason = None
    if rr1 is None:
        reason = Reason.NO_PEAKS
    elif rr2 is None or rates_disagree(rr1, rr2, config.max_disagreement):
        reason = Reason.RR_DISAGREEMENT
    elif rr1 > config.max_rr_bpm:
        reason = Reason.RR_TOO_HIGH
    elif purity < config.min_purity_db:
        reason = Reason.LOW_SPECTRAL_PURITY
    return ValidationVerdict(reason is None, reason, rr1, rr2, purity)
