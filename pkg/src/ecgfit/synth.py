"""Synthetic ECG/respiration pairs with known FIT, RR and phase labels.

Respiration is a train of raised-cosine breaths whose rising (inspiratory)
part lasts ``fit * T`` and falling part ``(1 - fit) * T``.  The ECG is one
Gaussian pulse per beat: pulse amplitude follows lung volume (R-peak
amplitude modulation) and instantaneous heart rate follows the breathing
phase (respiratory sinus arrhythmia).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .signals import SampledSignal

QRS_SD_S = 0.025  # FWHM ~ 60 ms


@dataclass(frozen=True)
class SynthSpec:
    fit: float = 0.4
    rr_bpm: float = 15.0
    hr_bpm: float = 70.0
    am_depth: float = 0.3
    rsa_depth: float = 0.15
    noise_sd: float = 0.0
    duration_s: float = 300.0
    fs: float = 250.0
    seed: int = 0
    subject_id: str = ""

    def __post_init__(self):
        checks = [
            ("fit", 0.1 <= self.fit <= 0.9, "must lie in [0.1, 0.9]"),
            ("rr_bpm", 4 <= self.rr_bpm <= 60, "must lie in [4, 60]"),
            ("hr_bpm", self.hr_bpm > self.rr_bpm, "must exceed rr_bpm"),
            ("am_depth", 0 <= self.am_depth < 1, "must lie in [0, 1)"),
            ("rsa_depth", 0 <= self.rsa_depth < 1, "must lie in [0, 1)"),
            ("noise_sd", 0 <= self.noise_sd < 1, "must lie in [0, 1)"),
            ("duration_s", self.duration_s > 0, "must be positive"),
            ("fs", self.fs > 0, "must be positive"),
        ]
        for name, ok, why in checks:
            if not ok:
                raise ValueError(f"SynthSpec.{name}={getattr(self, name)!r} {why}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SynthSpec field(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class SynthRecord:
    ecg: SampledSignal
    resp: SampledSignal
    labels: np.ndarray
    spec: SynthSpec

    def __post_init__(self):
        if not len(self.ecg) == len(self.resp) == len(self.labels):
            raise ValueError("ecg, resp and labels must have equal length")


def _rngs(seed: int):
    # independent streams so that changing one noise level leaves the others intact
    resp_ss, ecg_ss, phase_ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(resp_ss), np.random.default_rng(ecg_ss), np.random.default_rng(phase_ss)


def breath_phase(spec: SynthSpec, n: int | None = None) -> np.ndarray:
    """Fraction of the current breath elapsed at each sample, in [0, 1)."""
    n = spec.n_samples if n is None else n
    k = np.arange(n, dtype=np.float64)
    return np.mod(k * spec.rr_bpm / (60.0 * spec.fs), 1.0)


def clean_respiration(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    u = breath_phase(spec)
    # the tolerance keeps samples whose phase lands on fit up to rounding in expiration
    insp = u < spec.fit - 1e-9
    rising = 0.5 * (1.0 - np.cos(np.pi * u / spec.fit))
    falling = 0.5 * (1.0 + np.cos(np.pi * (u - spec.fit) / (1.0 - spec.fit)))
    return np.where(insp, rising, falling), insp.astype(np.int8)


def gen_respiratory(spec: SynthSpec) -> tuple[SampledSignal, np.ndarray]:
    """Asymmetric breathing waveform in [0, 1] (plus noise) and its 0/1 phase labels."""
    wave, labels = clean_respiration(spec)
    if spec.noise_sd > 0:
        rng = _rngs(spec.seed)[0]
        wave = wave + spec.noise_sd * rng.standard_normal(len(wave))
    return SampledSignal(wave, spec.fs), labels


def beat_times(labels: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """Beat instants from integrating the phase-modulated heart rate."""
    phase_sign = 2.0 * np.asarray(labels, dtype=np.float64) - 1.0
    rate_hz = spec.hr_bpm / 60.0 * (1.0 + spec.rsa_depth * phase_sign)
    start = _rngs(spec.seed)[2].uniform(0.0, 1.0)
    cycles = start + np.concatenate(([0.0], np.cumsum(rate_hz) / spec.fs))
    t_grid = np.arange(len(cycles)) / spec.fs
    targets = np.arange(np.ceil(cycles[0]), np.floor(cycles[-1]) + 1)
    return np.interp(targets, cycles, t_grid)


def gen_ecg(resp: SampledSignal, labels: np.ndarray, spec: SynthSpec) -> SampledSignal:
    """Gaussian-pulse ECG surrogate modulated by the given respiration.

    Pulse amplitude is ``1 + am_depth * c`` where ``c = 2 * resp - 1`` is the
    centred lung volume; beat rate is raised by ``rsa_depth`` during
    inspiration and lowered by the same fraction during expiration.
    """
    n = len(resp)
    t = np.arange(n) / spec.fs
    beats = beat_times(labels, spec)
    centred = np.clip(2.0 * resp.samples - 1.0, -1.0, 1.0)
    amps = 1.0 + spec.am_depth * np.interp(beats, t, centred)

    ecg = np.zeros(n)
    half = int(np.ceil(5 * QRS_SD_S * spec.fs))
    for tb, a in zip(beats, amps):
        c = int(round(tb * spec.fs))
        lo, hi = max(c - half, 0), min(c + half + 1, n)
        if lo >= hi:
            continue
        seg = t[lo:hi] - tb
        ecg[lo:hi] += a * np.exp(-0.5 * (seg / QRS_SD_S) ** 2)
    if spec.noise_sd > 0:
        ecg = ecg + spec.noise_sd * _rngs(spec.seed)[1].standard_normal(n)
    return SampledSignal(ecg, spec.fs)


def gen_record(spec: SynthSpec) -> SynthRecord:
    """Respiration, labels and ECG for one subject.

    The ECG is driven by the noise-free lung volume: the additive noise on
    the respiration channel models the reference sensor, not the chest.
    """
    resp, labels = gen_respiratory(spec)
    clean = SampledSignal(clean_respiration(spec)[0], spec.fs)
    ecg = gen_ecg(clean, labels, spec)
    return SynthRecord(ecg, resp, labels, spec)


def spec_bank(
    n: int,
    seed: int = 0,
    fit_range: tuple[float, float] = (0.2, 0.6),
    rr_range: tuple[float, float] = (8.0, 28.0),
    hr_range: tuple[float, float] = (60.0, 90.0),
    noise_sd: float = 0.05,
    duration_s: float = 300.0,
    fs: float = 250.0,
    prefix: str = "syn",
) -> list[SynthSpec]:
    """``n`` subject specs spread over the given FIT and RR ranges.

    FIT and RR are stratified (a shuffled even grid) so that small banks still
    cover both ranges; everything else is drawn at random.
    """
    rng = np.random.default_rng(seed)
    edges = (np.arange(n) + rng.uniform(size=n)) / n
    fits = fit_range[0] + (fit_range[1] - fit_range[0]) * rng.permutation(edges)
    rrs = rr_range[0] + (rr_range[1] - rr_range[0]) * rng.permutation(edges)
    specs = []
    for i in range(n):
        specs.append(
            SynthSpec(
                fit=round(float(fits[i]), 4),
                rr_bpm=round(float(rrs[i]), 3),
                hr_bpm=round(float(rng.uniform(*hr_range)), 2),
                am_depth=round(float(rng.uniform(0.2, 0.4)), 3),
                rsa_depth=round(float(rng.uniform(0.08, 0.2)), 3),
                noise_sd=noise_sd,
                duration_s=duration_s,
                fs=fs,
                seed=int(rng.integers(2**31)),
                subject_id=f"{prefix}{i:03d}",
            )
        )
    return specs


def gen_dataset(specs: Sequence[SynthSpec], window_s: float = 25.0,
                internal_fs: float = 25.0, validate: bool = False, features=None) -> list:
    """Generate every spec and cut it into labelled network-input windows.

    Labels come from the generator itself, so they are exact.  Each window's
    provenance carries the full spec.  ``features`` is an optional
    :class:`dataset.FeatureConfig`; its ``internal_fs`` takes precedence.
    """
    from .dataset import FeatureConfig, build_windows

    cfg = features if features is not None else FeatureConfig(internal_fs=internal_fs)
    out = []
    for spec in specs:
        if spec.duration_s < window_s:
            raise ValueError(f"subject {spec.subject_id!r}: duration_s {spec.duration_s} < window_s {window_s}")
        rec = gen_record(spec)
        out.extend(
            build_windows(rec.ecg, rec.resp, window_s, cfg, labels=rec.labels,
                          subject_id=spec.subject_id, validate=validate,
                          provenance={"spec": spec.to_dict()})
        )
    return out
