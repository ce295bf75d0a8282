"""FIT and respiratory-rate extraction from network outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .signals import (
    DEFAULT_MIN_DISTANCE_S,
    DEFAULT_MIN_PROMINENCE,
    SignalLike,
    Window,
    detect_peaks,
    minmax_normalize,
)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class WindowEstimate:
    fit: float
    rr_bpm: Optional[float]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.fit <= 1.0:
            raise ValueError(f"fit must lie in [0, 1], got {self.fit}")
        if self.rr_bpm is not None and not self.rr_bpm > 0:
            raise ValueError(f"rr_bpm must be positive, got {self.rr_bpm}")


def duty_cycle_fit(phase_labels) -> float:
    """Fraction of samples labelled inspiratory (label 1)."""
    y = np.asarray(phase_labels)
    if y.size == 0:
        raise ValueError("duty cycle of an empty label sequence is undefined")
    if y.dtype != bool and not np.all((y == 0) | (y == 1)):
        raise ValueError("phase labels must be binary")
    return int(np.count_nonzero(y)) / int(y.size)


def peaks_to_rate(indices, fs: float) -> Optional[float]:
    """60 / mean inter-peak period; ``None`` with fewer than two peaks."""
    idx = np.asarray(indices)
    if idx.size < 2:
        return None
    mean_period_s = float(np.mean(np.diff(idx))) / fs
    return 60.0 / mean_period_s


def respiratory_rate(
    resp_estimate: SignalLike,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
    min_distance_s: float = DEFAULT_MIN_DISTANCE_S,
) -> Optional[float]:
    peaks = detect_peaks(minmax_normalize(resp_estimate), min_prominence, min_distance_s)
    return peaks_to_rate(peaks.indices, resp_estimate.fs)


def phase_labels_from_probs(phase_probs, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    return (np.asarray(phase_probs) >= threshold).astype(np.int8)


def estimate_window(
    phase_probs,
    resp_estimate,
    fs: float,
    threshold: float = DEFAULT_THRESHOLD,
    fit_mode: str = "hard",
    provenance: Optional[dict] = None,
) -> WindowEstimate:
    """Turn one window of network outputs into a (FIT, RR) estimate.

    ``fit_mode="hard"`` thresholds the probabilities before the duty cycle;
    ``"expected"`` averages the probabilities instead.
    """
    probs = np.asarray(phase_probs, dtype=np.float64)
    if probs.shape != np.shape(resp_estimate):
        raise ValueError("phase probabilities and respiration estimate must align")
    if fit_mode == "hard":
        fit = duty_cycle_fit(phase_labels_from_probs(probs, threshold))
    elif fit_mode == "expected":
        fit = float(np.clip(probs.mean(), 0.0, 1.0))
    else:
        raise ValueError(f"unknown fit_mode {fit_mode!r}")
    rr = respiratory_rate(Window.of(resp_estimate, fs))
    prov = dict(provenance or {})
    prov.setdefault("n_samples", int(probs.size))
    prov.setdefault("fs", float(fs))
    return WindowEstimate(fit, rr, prov)
