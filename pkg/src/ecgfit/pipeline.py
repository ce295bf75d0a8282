"""Run a trained model over windows and score the (FIT, RR) estimates."""

from __future__ import annotations

from typing import Iterator, Optional, Sequence

import numpy as np

from .dataset import FeatureConfig, WindowRecord, window_features
from .extract import DEFAULT_THRESHOLD, WindowEstimate, estimate_window
from .metrics import EvalReport, WindowResult, confusion
from .nn.model import MtlModel, StreamingPredictor, predict_batch
from .signals import SampledSignal, Window


def predict_windows(model: MtlModel, records: Sequence[WindowRecord]) -> list[tuple[np.ndarray, np.ndarray]]:
    """(phase_probs, resp_estimate) per window, batching windows of equal length."""
    out: list = [None] * len(records)
    by_len: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        by_len.setdefault(r.features.shape[1], []).append(i)
    for idx in by_len.values():
        X = np.stack([records[i].features.T for i in idx], axis=1)
        probs, resp = predict_batch(model, X)
        for j, i in enumerate(idx):
            out[i] = (probs[:, j].copy(), resp[:, j].copy())
    return out


def estimate_windows(model: MtlModel, records: Sequence[WindowRecord],
                     threshold: float = DEFAULT_THRESHOLD, fit_mode: str = "hard") -> list[WindowEstimate]:
    preds = predict_windows(model, records)
    return [
        estimate_window(p, z, r.fs, threshold, fit_mode, {"window": r.window_id})
        for r, (p, z) in zip(records, preds)
    ]


def score_windows(records: Sequence[WindowRecord], preds: Sequence[tuple[np.ndarray, np.ndarray]],
                  threshold: float = DEFAULT_THRESHOLD, fit_mode: str = "hard") -> EvalReport:
    """Compare per-window predictions with the windows' reference labels and respiration."""
    results = []
    for r, (probs, resp) in zip(records, preds):
        if r.labels is None:
            raise ValueError(f"window {r.window_id} has no reference labels")
        est = estimate_window(probs, resp, r.fs, threshold, fit_mode)
        tp, tn, fp, fn = confusion(r.labels, probs >= threshold)
        results.append(WindowResult(r.window_id, r.fit_true, est.fit, r.rr_true, est.rr_bpm, tp, tn, fp, fn))
    return EvalReport(results)


def evaluate_windows(model: MtlModel, records: Sequence[WindowRecord],
                     threshold: float = DEFAULT_THRESHOLD, fit_mode: str = "hard") -> EvalReport:
    return score_windows(records, predict_windows(model, records), threshold, fit_mode)


def oracle_predictions(records: Sequence[WindowRecord]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reference labels and respiration posing as network outputs."""
    return [(r.labels.astype(np.float64), r.resp) for r in records]


def stream_estimates(
    model: MtlModel,
    ecg_samples,
    fs: float,
    window_s: float,
    cfg: FeatureConfig = FeatureConfig(),
    threshold: float = DEFAULT_THRESHOLD,
    fit_mode: str = "hard",
) -> Iterator[tuple[int, float, WindowEstimate]]:
    """Consume ECG samples in arrival order; yield ``(index, start_s, estimate)`` per completed window.

    Each window is featurized once complete and then pushed through the
    network one sample at a time, hidden state reset at the window start.
    Trailing samples that do not fill a window are dropped.
    """
    n = int(round(window_s * fs))
    if n < 1:
        raise ValueError("window shorter than one sample")
    predictor = StreamingPredictor(model)
    buf = np.empty(n)
    filled, index = 0, 0
    for x in ecg_samples:
        buf[filled] = x
        filled += 1
        if filled < n:
            continue
        feats = window_features(Window(SampledSignal(buf.copy(), fs), n / fs, index * n), cfg)
        predictor.reset()
        probs, resp = predictor.run(feats)
        yield index, index * n / fs, estimate_window(probs, resp, cfg.internal_fs, threshold, fit_mode)
        filled = 0
        index += 1


def summary_line(est: Optional[WindowEstimate]) -> str:
    if est is None:
        return "nan,nan"
    return f"{est.fit!r},{'nan' if est.rr_bpm is None else repr(est.rr_bpm)}"
