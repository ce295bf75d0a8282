"""Signal containers and the DSP primitives shared by the rest of the package."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import signal as sps

DEFAULT_MIN_PROMINENCE = 0.2
DEFAULT_MIN_DISTANCE_S = 1.0
DEFAULT_ENVELOPE_CUTOFF_HZ = 0.7
RESP_BAND_HZ = (0.05, 1.0)


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sample sequence, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled waveform."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        arr = _frozen_array(self.samples)
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.fs

    def with_samples(self, samples) -> "SampledSignal":
        return SampledSignal(samples, self.fs)


@dataclass(frozen=True)
class Window:
    """A fixed-duration slice of a :class:`SampledSignal`."""

    signal: SampledSignal
    duration_s: float
    start_index: int = 0

    def __post_init__(self):
        expected = round(self.duration_s * self.signal.fs)
        if len(self.signal) != expected:
            raise ValueError(
                f"window of {self.duration_s} s at {self.signal.fs} Hz needs "
                f"{expected} samples, got {len(self.signal)}"
            )

    @classmethod
    def of(cls, samples, fs: float, start_index: int = 0) -> "Window":
        sig = SampledSignal(samples, fs)
        return cls(sig, len(sig) / sig.fs, start_index)

    @property
    def samples(self) -> np.ndarray:
        return self.signal.samples

    @property
    def fs(self) -> float:
        return self.signal.fs

    def __len__(self) -> int:
        return len(self.signal)

    def with_samples(self, samples) -> "Window":
        return Window(SampledSignal(samples, self.fs), self.duration_s, self.start_index)


SignalLike = Union[SampledSignal, Window]


@dataclass(frozen=True)
class PeakSet:
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    prominences: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        prom = np.asarray(self.prominences, dtype=np.float64)
        if idx.shape != prom.shape:
            raise ValueError("indices and prominences must align")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("peak indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "prominences", prom)

    def __len__(self) -> int:
        return len(self.indices)


def window_split(signal: SampledSignal, duration_s: float, overlap_s: float = 0.0) -> list[Window]:
    """Cut ``signal`` into consecutive windows; a trailing partial window is dropped."""
    if not duration_s > 0:
        raise ValueError(f"window duration must be positive, got {duration_s}")
    if not 0 <= overlap_s < duration_s:
        raise ValueError(f"overlap must satisfy 0 <= overlap < duration, got {overlap_s}")
    n = round(duration_s * signal.fs)
    step = n - round(overlap_s * signal.fs)
    if n < 1 or step < 1:
        raise ValueError("window or hop shorter than one sample")
    out = []
    start = 0
    while start + n <= len(signal):
        chunk = SampledSignal(signal.samples[start:start + n], signal.fs)
        out.append(Window(chunk, n / signal.fs, start))
        start += step
    return out


def _normalized_samples(x: np.ndarray) -> np.ndarray:
    lo = x.min()
    span = x.max() - lo
    if span == 0:
        return np.zeros_like(x)
    return (x - lo) / span


def minmax_normalize(w: SignalLike):
    """Affinely map samples onto [0, 1]; a constant window becomes all zeros."""
    if len(w) == 0:
        raise ValueError("cannot normalize an empty window")
    return w.with_samples(_normalized_samples(w.samples))


def _greedy_by_prominence(candidates, prominences, min_distance: float):
    order = np.lexsort((candidates, -prominences))
    kept: list[int] = []
    for k in order:
        pos = candidates[k]
        if all(abs(pos - candidates[j]) >= min_distance for j in kept):
            kept.append(k)
    kept.sort(key=lambda j: candidates[j])
    return np.asarray(candidates[kept], dtype=np.int64), np.asarray(prominences[kept])


def detect_peaks(
    w: SignalLike,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
    min_distance_s: float = DEFAULT_MIN_DISTANCE_S,
) -> PeakSet:
    """Prominent local maxima, selected greedily by descending prominence.

    ``min_prominence`` is a fraction of the window's peak-to-peak range, so the
    result does not change under positive affine rescaling of the samples.
    Peaks closer than ``min_distance_s`` to an already accepted, more
    prominent peak are discarded.
    """
    if min_distance_s < 0:
        raise ValueError("min_distance_s must be non-negative")
    x = w.samples
    if len(x) < 3:
        return PeakSet()
    span = float(x.max() - x.min())
    if span == 0:
        return PeakSet()
    candidates, _ = sps.find_peaks(x)
    if candidates.size == 0:
        return PeakSet()
    prominences = sps.peak_prominences(x, candidates)[0] / span
    keep = prominences >= min_prominence
    candidates, prominences = candidates[keep], prominences[keep]
    if candidates.size == 0:
        return PeakSet()
    idx, prom = _greedy_by_prominence(candidates, prominences, min_distance_s * w.fs)
    return PeakSet(idx, prom)


def autocorrelate(w: SignalLike) -> SampledSignal:
    """Biased autocorrelation of the mean-removed samples for lags 0..N-1, scaled so r[0] = 1."""
    x = np.asarray(w.samples, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("cannot autocorrelate an empty window")
    x = x - x.mean()
    energy = float(np.dot(x, x))
    if energy == 0:
        r = np.zeros(len(x))
        r[0] = 1.0
        return SampledSignal(r, w.fs)
    full = sps.correlate(x, x, mode="full", method="auto")
    r = full[len(x) - 1:] / energy
    r[0] = 1.0
    return SampledSignal(r, w.fs)


def spectral_purity(w: SignalLike, band_hz: tuple[float, float] = RESP_BAND_HZ) -> float:
    """Power ratio, in dB, of the dominant respiratory-band component to everything else.

    The fundamental is the largest-magnitude bin inside ``band_hz``; its power
    is summed over that bin and its two neighbours.  The rest is all other
    non-DC power.  Constant input returns ``-inf``.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    n = len(x)
    if n < 4:
        raise ValueError("window too short for a spectral estimate")
    power = np.abs(np.fft.rfft(x)) ** 2
    # one-sided spectrum: every bin except DC and Nyquist stands for two
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0
    power[0] = 0.0
    total = power.sum()
    if total <= 1e-24 * max(1.0, float(np.dot(x, x))):
        return -math.inf
    freqs = np.fft.rfftfreq(n, d=1.0 / w.fs)
    in_band = np.flatnonzero((freqs >= band_hz[0]) & (freqs <= band_hz[1]))
    in_band = in_band[in_band > 0]
    if in_band.size == 0:
        raise ValueError(
            f"window of {n / w.fs:.1f} s has no spectral bins within {band_hz} Hz"
        )
    k = in_band[np.argmax(power[in_band])]
    lo, hi = max(k - 1, 1), min(k + 1, len(power) - 1)
    fund = power[lo:hi + 1].sum()
    rest = total - fund
    if rest <= 0:
        return math.inf
    if fund <= 0:
        return -math.inf
    return 10.0 * math.log10(fund / rest)


def lowpass(signal: SignalLike, cutoff_hz: float, order: int = 4):
    """Zero-phase Butterworth low-pass; output keeps the input's length and rate."""
    fs = signal.fs
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, fs/2 = {fs / 2} Hz)")
    x = np.asarray(signal.samples, dtype=np.float64)
    if len(x) < 2:
        return signal
    sos = sps.butter(order, cutoff_hz, btype="low", fs=fs, output="sos")
    padlen = min(len(x) - 1, 3 * (2 * len(sos) + 1))
    return signal.with_samples(sps.sosfiltfilt(sos, x, padlen=padlen))


def ecg_envelope(ecg: SignalLike, cutoff_hz: float = DEFAULT_ENVELOPE_CUTOFF_HZ, order: int = 4):
    """Rectify about the median, low-pass at ``cutoff_hz`` (zero phase) and normalize.

    The output has the input's length and sampling rate.
    """
    fs = ecg.fs
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, fs/2 = {fs / 2} Hz)")
    x = np.asarray(ecg.samples, dtype=np.float64)
    rect = np.abs(x - np.median(x))
    if np.ptp(rect) == 0:
        return ecg.with_samples(np.zeros_like(x))
    smooth = lowpass(ecg.with_samples(rect), cutoff_hz, order).samples
    return ecg.with_samples(_normalized_samples(smooth))


def resample(signal: SignalLike, target_fs: float):
    """Linear-interpolation resampling onto a ``target_fs`` grid starting at t = 0.

    The output never extends past the last input sample, so it is exact on
    linear inputs.  Windows keep their nominal duration when the arithmetic
    allows it.
    """
    if not target_fs > 0:
        raise ValueError(f"target rate must be positive, got {target_fs}")
    fs = signal.fs
    x = np.asarray(signal.samples)
    if target_fs == fs:
        return signal
    n = len(x)
    n_out = int(math.floor((n - 1) * target_fs / fs + 1e-9)) + 1 if n else 0
    t_in = np.arange(n) / fs
    t_out = np.arange(n_out) / target_fs
    y = np.interp(t_out, t_in, x)
    out = SampledSignal(y, target_fs)
    if isinstance(signal, Window):
        start = round(signal.start_index * target_fs / fs)
        if round(signal.duration_s * target_fs) == n_out:
            return Window(out, signal.duration_s, start)
        return Window(out, n_out / target_fs, start)
    return out
