"""Windowed network inputs: ECG feature channels, reference respiration and labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import annotate as ann
from .extract import duty_cycle_fit, respiratory_rate
from .nn.train import WindowSet
from .signals import (
    DEFAULT_ENVELOPE_CUTOFF_HZ,
    SampledSignal,
    Window,
    detect_peaks,
    ecg_envelope,
    lowpass,
    minmax_normalize,
    resample,
    window_split,
)
from .validate import ValidationConfig, ValidationVerdict, validate_window

DEFAULT_INTERNAL_FS = 25.0
TRAIN_WINDOW_S = 25.0
EVAL_WINDOW_S = 60.0

log = logging.getLogger(__name__)


def _raw_ecg(ecg: Window, cfg: "FeatureConfig") -> Window:
    # band-limit before the linear-interpolation resampler so narrow QRS
    # pulses are not aliased into random heights
    cutoff = cfg.antialias_fraction * cfg.internal_fs
    if cfg.antialias_fraction > 0 and cutoff < ecg.fs / 2:
        ecg = lowpass(ecg, cutoff)
    return minmax_normalize(ecg)


def _envelope(ecg: Window, cfg: "FeatureConfig") -> Window:
    return ecg_envelope(ecg, cfg.envelope_cutoff_hz)


def _beat_rate(ecg: Window, cfg: "FeatureConfig") -> Window:
    # instantaneous beat rate, held constant over each inter-beat interval
    beats = detect_peaks(ecg, cfg.beat_prominence, cfg.beat_min_distance_s).indices
    out = np.zeros(len(ecg))
    if len(beats) >= 2:
        rate = ecg.fs / np.diff(beats).astype(np.float64)
        seg = np.clip(np.searchsorted(beats, np.arange(len(ecg)), side="right") - 1, 0, len(rate) - 1)
        out = rate[seg]
    return ecg.with_samples(out)


# Channel builders run at the native ECG rate, before resampling.
FEATURE_CHANNELS: dict[str, Callable[[Window, "FeatureConfig"], Window]] = {
    "ecg": _raw_ecg,
    "envelope": _envelope,
    "beat_rate": _beat_rate,
}


@dataclass(frozen=True)
class FeatureConfig:
    internal_fs: float = DEFAULT_INTERNAL_FS
    channels: tuple[str, ...] = ("ecg", "envelope", "beat_rate")
    envelope_cutoff_hz: float = DEFAULT_ENVELOPE_CUTOFF_HZ
    # anti-alias cutoff for the raw ECG channel as a fraction of internal_fs; 0 disables
    antialias_fraction: float = 0.4
    # R-peak picking for the beat-rate channel
    beat_prominence: float = 0.3
    beat_min_distance_s: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        unknown = [c for c in self.channels if c not in FEATURE_CHANNELS]
        if unknown:
            raise ValueError(f"unknown feature channel(s) {unknown}; known: {sorted(FEATURE_CHANNELS)}")


@dataclass
class WindowRecord:
    subject_id: str
    index: int
    start_s: float
    fs: float
    features: np.ndarray                    # (channels, T)
    resp: Optional[np.ndarray] = None       # (T,) normalized reference respiration
    labels: Optional[np.ndarray] = None     # (T,) 0/1 phase labels
    verdict: Optional[ValidationVerdict] = None
    provenance: dict = field(default_factory=dict)

    @property
    def window_id(self) -> str:
        return f"{self.subject_id}:{self.index}"

    @property
    def fit_true(self) -> Optional[float]:
        return None if self.labels is None else duty_cycle_fit(self.labels)

    @property
    def rr_true(self) -> Optional[float]:
        return None if self.resp is None else respiratory_rate(Window.of(self.resp, self.fs))


def window_features(ecg: Window, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """(channels, T) network input for one native-rate ECG window."""
    rows = []
    for name in cfg.channels:
        ch = FEATURE_CHANNELS[name](ecg, cfg)
        rows.append(minmax_normalize(resample(ch, cfg.internal_fs)).samples)
    n = min(len(r) for r in rows)
    return np.vstack([r[:n] for r in rows])


def _labels_at(labels: np.ndarray, fs: float, internal_fs: float, start: int, n_out: int) -> np.ndarray:
    idx = start + np.rint(np.arange(n_out) * fs / internal_fs).astype(np.int64)
    return np.asarray(labels[np.clip(idx, 0, len(labels) - 1)], dtype=np.int8)


def build_windows(
    ecg: SampledSignal,
    resp: Optional[SampledSignal] = None,
    window_s: float = TRAIN_WINDOW_S,
    cfg: FeatureConfig = FeatureConfig(),
    labels: Optional[np.ndarray] = None,
    subject_id: str = "",
    validate: bool = False,
    validation: ValidationConfig = ValidationConfig(),
    keep_rejected: bool = False,
    provenance: Optional[dict] = None,
    annotation: Optional[dict] = None,
) -> list[WindowRecord]:
    """Cut a recording into non-overlapping windows and build network inputs.

    ``labels`` (native rate) are used when given; otherwise, when ``resp`` is
    present, the labels come from automatic annotation of each window.  With
    ``validate`` set, windows failing the respiratory quality rules are
    dropped unless ``keep_rejected`` is set.  ``annotation`` holds keyword
    overrides for :func:`annotate.annotate`.
    """
    if resp is not None and (len(resp) != len(ecg) or resp.fs != ecg.fs):
        raise ValueError("ecg and resp must share length and sampling rate")
    out = []
    ecg_windows = window_split(ecg, window_s)
    resp_windows = window_split(resp, window_s) if resp is not None else [None] * len(ecg_windows)
    for i, (ew, rw) in enumerate(zip(ecg_windows, resp_windows)):
        feats = window_features(ew, cfg)
        n = feats.shape[1]
        rec = WindowRecord(subject_id, i, ew.start_index / ecg.fs, cfg.internal_fs, feats,
                           provenance=dict(provenance or {}))
        if rw is not None:
            r_int = minmax_normalize(resample(rw, cfg.internal_fs))
            rec.resp = r_int.samples[:n].copy()
            if validate:
                rec.verdict = validate_window(r_int, validation)
                if not rec.verdict.accepted and not keep_rejected:
                    continue
            if labels is not None:
                rec.labels = _labels_at(labels, ecg.fs, cfg.internal_fs, ew.start_index, n)
            else:
                try:
                    rec.labels = ann.annotate(r_int, **(annotation or {})).labels.labels[:n].copy()
                except ann.AnnotationError as exc:
                    log.warning("%s window %d skipped: %s", subject_id, i, exc)
                    continue
        out.append(rec)
    return out


def to_window_set(records: Sequence[WindowRecord]) -> WindowSet:
    """Stack labelled windows of equal length into arrays for training."""
    recs = [r for r in records if r.labels is not None and r.resp is not None]
    if not recs:
        return WindowSet(np.zeros((0, 1, 2)), np.zeros((0, 1)), np.zeros((0, 1)))
    lengths = {r.features.shape[1] for r in recs}
    if len(lengths) != 1:
        raise ValueError(f"windows differ in length: {sorted(lengths)}")
    return WindowSet(
        np.stack([r.features.T for r in recs]),
        np.stack([r.labels for r in recs]).astype(np.float64),
        np.stack([r.resp for r in recs]),
    )
