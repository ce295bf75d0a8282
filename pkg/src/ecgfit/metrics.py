"""Evaluation statistics and the evaluation report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np


class BlandAltman(NamedTuple):
    mean_diff: float
    lo: float
    hi: float


def _pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.size == 0:
        return np.zeros(0), np.zeros(0)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a sequence of (true, estimate) pairs")
    return arr[:, 0], arr[:, 1]


def accuracy(tp: int, tn: int, fp: int, fn: int) -> float:
    if min(tp, tn, fp, fn) < 0:
        raise ValueError("confusion counts must be non-negative")
    total = tp + tn + fp + fn
    if total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return (tp + tn) / total


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    t = np.asarray(y_true).astype(bool).ravel()
    p = np.asarray(y_pred).astype(bool).ravel()
    if t.shape != p.shape:
        raise ValueError("label sequences differ in length")
    return (
        int(np.sum(t & p)),
        int(np.sum(~t & ~p)),
        int(np.sum(~t & p)),
        int(np.sum(t & ~p)),
    )


def rmse(pairs) -> float:
    truth, est = _pairs(pairs)
    if truth.size == 0:
        raise ValueError("RMSE of an empty pair list is undefined")
    return float(np.sqrt(np.mean((truth - est) ** 2)))


def r_squared(pairs) -> float:
    """Coefficient of determination; NaN when the true values have no spread."""
    truth, est = _pairs(pairs)
    if truth.size < 2:
        raise ValueError("R^2 needs at least two pairs")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0:
        return math.nan
    ss_res = float(np.sum((truth - est) ** 2))
    return 1.0 - ss_res / ss_tot


def bland_altman(pairs, ddof: int = 0) -> BlandAltman:
    """Mean of (estimate - true) and its 95 % limits of agreement, mean +/- 1.96 sd.

    The sd is the population value by default (so differences {-1, +1} give
    sd 1); pass ``ddof=1`` for the sample estimate.
    """
    truth, est = _pairs(pairs)
    if truth.size < 2:
        raise ValueError("Bland-Altman limits need at least two pairs")
    diff = est - truth
    mean = float(diff.mean())
    sd = float(diff.std(ddof=ddof))
    return BlandAltman(mean, mean - 1.96 * sd, mean + 1.96 * sd)


@dataclass
class WindowResult:
    window_id: str
    fit_true: float
    fit_est: float
    rr_true: Optional[float]
    rr_est: Optional[float]
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    windows: list[WindowResult] = field(default_factory=list)

    @property
    def fit_pairs(self) -> list[tuple[float, float]]:
        return [(w.fit_true, w.fit_est) for w in self.windows]

    @property
    def rr_pairs(self) -> list[tuple[float, float]]:
        return [(w.rr_true, w.rr_est) for w in self.windows
                if w.rr_true is not None and w.rr_est is not None]

    @property
    def rr_missing(self) -> int:
        return len(self.windows) - len(self.rr_pairs)

    def summary(self) -> dict:
        counts = [sum(getattr(w, k) for w in self.windows) for k in ("tp", "tn", "fp", "fn")]
        out: dict = {"n_windows": len(self.windows), "rr_no_estimate": self.rr_missing}
        out["accuracy"] = accuracy(*counts) if sum(counts) else math.nan
        for name, pairs in (("fit", self.fit_pairs), ("rr", self.rr_pairs)):
            out[f"rmse_{name}"] = rmse(pairs) if pairs else math.nan
            out[f"r2_{name}"] = r_squared(pairs) if len(pairs) >= 2 else math.nan
            ba = bland_altman(pairs) if len(pairs) >= 2 else BlandAltman(math.nan, math.nan, math.nan)
            out[f"ba_{name}_mean"], out[f"ba_{name}_lo"], out[f"ba_{name}_hi"] = ba
        return out

    def write(self, out_dir) -> dict:
        """Write the pair table, summary block and plot-ready data files.

        Returns the summary dict.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "pairs.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window", "fit_true", "fit_est", "rr_true", "rr_est", "tp", "tn", "fp", "fn"])
            for r in self.windows:
                w.writerow([r.window_id, _fmt(r.fit_true), _fmt(r.fit_est), _fmt(r.rr_true),
                            _fmt(r.rr_est), r.tp, r.tn, r.fp, r.fn])
        summary = self.summary()
        with open(out_dir / "summary.txt", "w") as fh:
            for key, value in summary.items():
                fh.write(f"{key} = {_fmt(value)}\n")
        for name, pairs in (("fit", self.fit_pairs), ("rr", self.rr_pairs)):
            _write_xy(out_dir / f"scatter_{name}.csv", [(t, e) for t, e in pairs])
            _write_xy(out_dir / f"bland_altman_{name}.csv",
                      [((t + e) / 2.0, e - t) for t, e in pairs])
        return summary


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_xy(path: Path, rows: Iterable[Sequence[float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in rows:
            w.writerow([repr(float(x)), repr(float(y))])
