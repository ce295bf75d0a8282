"""Automatic inspiration/expiration labelling of a reference respiratory signal.

Peaks come from intercepts of the signal with its moving-average curve,
valleys from a rising-edge search between consecutive peaks.  Samples from a
valley up to the next peak are inspiratory (1), the rest expiratory (0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d

from .extract import duty_cycle_fit, peaks_to_rate
from .signals import SignalLike, minmax_normalize

DEFAULT_MA_WINDOW_S = 2.0
DEFAULT_EDGE_SMOOTH_S = 0.5
# pre-smoothing of the signal before intercepts are taken, and the smallest
# excursion above the moving average that counts as a breath, relative to the
# largest excursion in the window
CROSSING_SMOOTH_S = 0.3
MIN_REL_EXCURSION = 0.4
# a valley in a window-edge span must have at least this much smoothed swing
# (fraction of the window's range) on its open side, so noise ripples near a
# boundary are not taken for the start of a breath
MIN_EDGE_SWING = 0.1


class AnnotationError(ValueError):
    pass


def _as_index_array(values) -> np.ndarray:
    return np.asarray(values, dtype=np.int64).reshape(-1)


@dataclass(frozen=True)
class ExtremaSet:
    peaks: np.ndarray
    valleys: np.ndarray

    def __post_init__(self):
        p, v = _as_index_array(self.peaks), _as_index_array(self.valleys)
        object.__setattr__(self, "peaks", p)
        object.__setattr__(self, "valleys", v)
        for name, arr in (("peaks", p), ("valleys", v)):
            if arr.size > 1 and np.any(np.diff(arr) <= 0):
                raise AnnotationError(f"{name} must be strictly increasing")
        events = self.events()
        kinds = [k for _, k in events]
        positions = [i for i, _ in events]
        if len(set(positions)) != len(positions):
            raise AnnotationError("a peak and a valley share an index")
        if any(a == b for a, b in zip(kinds, kinds[1:])):
            raise AnnotationError("peaks and valleys must strictly interleave")

    def events(self) -> list[tuple[int, str]]:
        ev = [(int(i), "p") for i in self.peaks] + [(int(i), "v") for i in self.valleys]
        return sorted(ev)


@dataclass(frozen=True)
class PhaseLabelSeq:
    labels: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if not np.all((y == 0) | (y == 1)):
            raise AnnotationError("phase labels must be 0 or 1")
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Annotation:
    extrema: ExtremaSet
    labels: PhaseLabelSeq
    fit: float
    rr_bpm: Optional[float]


def _moving_average(x: np.ndarray, width_samples: int) -> np.ndarray:
    width = max(int(width_samples), 1)
    if width == 1:
        return x.astype(np.float64)
    return uniform_filter1d(x.astype(np.float64), size=width, mode="nearest")


def _odd(n: float) -> int:
    n = max(int(round(n)), 1)
    return n if n % 2 else n + 1


def mac_peaks(resp: SignalLike, ma_window_s: float = DEFAULT_MA_WINDOW_S) -> np.ndarray:
    """Peaks located from pairs of up/down intercepts with the moving-average curve.

    Within each (upward, downward) intercept pair the peak is the maximum of a
    lightly smoothed copy, snapped to the largest raw sample close by.  A pair still open at the window start or end is
    kept only if its maximum is not on the boundary itself.
    """
    x = np.asarray(resp.samples, dtype=np.float64)
    n = len(x)
    span = np.ptp(x) if n else 0.0
    if n < 3 or span == 0:
        return np.zeros(0, dtype=np.int64)
    fs = resp.fs
    ma = _moving_average(x, _odd(ma_window_s * fs))
    lightly = _moving_average(x, _odd(CROSSING_SMOOTH_S * fs))
    above = (lightly - ma) > 0

    half = _odd(CROSSING_SMOOTH_S * fs) // 2

    change = np.flatnonzero(np.diff(above.astype(np.int8))) + 1
    bounds = np.concatenate(([0], change, [n]))
    pairs = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if above[a]]
    if not pairs:
        return np.zeros(0, dtype=np.int64)
    excursion = np.array([np.max(lightly[a:b] - ma[a:b]) for a, b in pairs])
    floor = MIN_REL_EXCURSION * excursion.max()
    peaks = []
    for (a, b), exc in zip(pairs, excursion):
        if exc < floor:
            continue
        # locate on the smoothed trace, then snap to the raw maximum nearby
        k = a + int(np.argmax(lightly[a:b]))
        lo, hi = max(k - half, a), min(k + half + 1, b)
        k = lo + int(np.argmax(x[lo:hi]))
        if (a == 0 and k == 0) or (b == n and k == n - 1):
            continue
        peaks.append(k)
    return np.asarray(peaks, dtype=np.int64)


def edge_valleys(
    resp: SignalLike,
    peaks,
    smooth_s: float = DEFAULT_EDGE_SMOOTH_S,
) -> np.ndarray:
    """One valley per span between peaks, plus at most one per window edge.

    In each span the valley is the onset of the final rising edge: the last
    place the smoothed derivative turns from non-positive to positive.  It is
    then snapped to the raw minimum within half a smoothing width, since the
    smoothing itself shifts minima of asymmetric breaths.  Spans without such
    a turn fall back to the minimum of the smoothed signal.  Edge-span valleys
    that land on the window boundary, or lack a clear swing toward it, are
    dropped.
    """
    x = np.asarray(resp.samples, dtype=np.float64)
    peaks = _as_index_array(peaks)
    n = len(x)
    if peaks.size == 0 or n < 3:
        return np.zeros(0, dtype=np.int64)
    width = _odd(smooth_s * resp.fs)
    half = width // 2
    sm = _moving_average(x, width)
    d = np.diff(sm)
    min_swing = MIN_EDGE_SWING * np.ptp(x)

    spans = [(0, int(peaks[0]))]
    spans += [(int(a), int(b)) for a, b in zip(peaks[:-1], peaks[1:])]
    spans.append((int(peaks[-1]), n))
    valleys = []
    for j, (a, b) in enumerate(spans):
        leading, trailing = j == 0, j == len(spans) - 1
        lo, hi = (a, b) if leading else (a + 1, b)
        if hi - lo < 1:
            continue
        stop = b if not trailing else n - 1
        # d[i - 1] <= 0 < d[i]: the smoothed signal turns upward at sample i
        i_range = np.arange(max(lo, 1), min(stop, n - 1))
        if i_range.size:
            steepest = int(i_range[np.argmax(d[i_range])])
            i_range = i_range[i_range <= steepest]
        turns = i_range[(d[i_range - 1] <= 0) & (d[i_range] > 0)] if i_range.size else i_range
        if turns.size:
            v = int(turns[-1])
            s_lo, s_hi = max(v - half, lo), min(v + half + 1, hi)
            v = s_lo + int(np.argmin(x[s_lo:s_hi]))
        else:
            v = lo + int(np.argmin(sm[lo:hi]))
        if (leading and v == 0) or (trailing and v >= n - 1):
            continue
        if leading and sm[: v + 1].max() - sm[v] < min_swing:
            continue
        if trailing and sm[v:].max() - sm[v] < min_swing:
            continue
        if v in peaks:
            continue
        valleys.append(v)
    return np.asarray(sorted(set(valleys)), dtype=np.int64)


def labels_from_extrema(extrema: ExtremaSet, length: int) -> PhaseLabelSeq:
    """Label [valley, peak) as 1 and [peak, next valley) as 0.

    Samples before the first extremum take the phase that extremum closes:
    1 before a peak, 0 before a valley.  Indices may equal ``length`` (an
    end marker) but not exceed it.
    """
    events = extrema.events()
    if events and (events[0][0] < 0 or events[-1][0] > length):
        raise AnnotationError("extremum index outside the window")
    y = np.zeros(length, dtype=np.int8)
    if not events:
        return PhaseLabelSeq(y)
    y[: events[0][0]] = 1 if events[0][1] == "p" else 0
    bounds = [i for i, _ in events] + [length]
    for (start, kind), stop in zip(events, bounds[1:]):
        y[start:stop] = 1 if kind == "v" else 0
    return PhaseLabelSeq(y)


def ground_truth_fit(labels) -> float:
    if isinstance(labels, PhaseLabelSeq):
        labels = labels.labels
    return duty_cycle_fit(labels)


def annotate(
    resp: SignalLike,
    ma_window_s: float = DEFAULT_MA_WINDOW_S,
    smooth_s: float = DEFAULT_EDGE_SMOOTH_S,
) -> Annotation:
    """Full labelling pass over one (normalized) respiratory window."""
    resp = minmax_normalize(resp)
    peaks = mac_peaks(resp, ma_window_s)
    valleys = edge_valleys(resp, peaks, smooth_s)
    extrema = ExtremaSet(peaks, valleys)
    labels = labels_from_extrema(extrema, len(resp))
    return Annotation(extrema, labels, ground_truth_fit(labels), peaks_to_rate(peaks, resp.fs))
