"""Record files, dataset manifests and subject-level splits.

Record format: UTF-8 CSV with a header row ``t,<channel>,...``.  ``t`` is in
seconds with a uniform step; the sampling rate is taken from the first two
timestamps and every later timestamp must sit on that grid to within 1e-6 s.

Manifest format: JSON lines.  The first line is a header object
``{"window_s": ..., "internal_fs": ...}``; each further line describes one
record ``{"path": ..., "subject_id": ..., "split": "train"|"val"|"test"}``.
Relative paths are resolved against the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .signals import SampledSignal

TIME_TOLERANCE_S = 1e-6
SPLITS = ("train", "val", "test")


class RecordParseError(ValueError):
    """Malformed text in a record file; carries the 1-based line number."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class RecordStructureError(ValueError):
    pass


@dataclass
class RecordFile:
    subject_id: str
    channels: dict[str, SampledSignal]

    def __post_init__(self):
        if not self.channels:
            raise RecordStructureError("record has no channels")
        lengths = {len(s) for s in self.channels.values()}
        if len(lengths) != 1:
            raise RecordStructureError(f"channel lengths differ: {sorted(lengths)}")

    @property
    def fs(self) -> float:
        return next(iter(self.channels.values())).fs

    @property
    def ecg(self) -> SampledSignal:
        try:
            return self.channels["ecg"]
        except KeyError:
            raise RecordStructureError(f"record {self.subject_id!r} has no 'ecg' channel") from None

    @property
    def resp(self) -> Optional[SampledSignal]:
        return self.channels.get("resp")


def _float(text: str, path, line: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise RecordParseError(path, line, f"{what}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise RecordParseError(path, line, f"{what}: non-finite value {text!r}")
    return v


def read_record(path, subject_id: Optional[str] = None) -> RecordFile:
    """Parse a CSV record; ``subject_id`` defaults to the file stem."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise RecordParseError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "t":
            raise RecordParseError(path, 1, f"header must be 't,<channel>,...', got {','.join(header)!r}")
        names = header[1:]
        if len(set(names)) != len(names) or any(not n for n in names):
            raise RecordParseError(path, 1, "channel names must be unique and non-empty")
        t, cols = [], [[] for _ in names]
        for row in rows:
            line = rows.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RecordStructureError(
                    f"{path}:{line}: expected {len(header)} fields, found {len(row)}"
                )
            t.append(_float(row[0], path, line, "t"))
            for j, cell in enumerate(row[1:]):
                cols[j].append(_float(cell, path, line, names[j]))
    if len(t) < 2:
        raise RecordStructureError(f"{path}: need at least two samples to infer the sampling rate")
    t = np.asarray(t)
    step = t[1] - t[0]
    if step <= 0:
        raise RecordStructureError(f"{path}: timestamps are not increasing (line 3)")
    deviation = np.abs(t - (t[0] + step * np.arange(len(t))))
    bad = np.flatnonzero(deviation > TIME_TOLERANCE_S)
    if bad.size:
        i = int(bad[0])
        kind = "non-monotonic" if t[i] <= t[i - 1] else "non-uniform"
        raise RecordStructureError(f"{path}:{i + 2}: {kind} timestamp {t[i]!r}")
    fs = 1.0 / step
    channels = {n: SampledSignal(np.asarray(c), fs) for n, c in zip(names, cols)}
    return RecordFile(subject_id or path.stem, channels)


def write_record(record: RecordFile, path, t0: float = 0.0) -> None:
    """Write ``record`` as CSV; values use ``repr`` so reading back is bit-exact."""
    names = list(record.channels)
    n = len(record.channels[names[0]])
    fs = record.fs
    cols = [record.channels[c].samples for c in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for i in range(n):
            w.writerow([repr(t0 + i / fs), *(repr(float(c[i])) for c in cols)])


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject_id: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass
class DatasetManifest:
    records: list[ManifestEntry]
    window_s: float = 25.0
    internal_fs: float = 25.0
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        check_disjoint(self.records)

    def split(self, name: str) -> list[ManifestEntry]:
        return [r for r in self.records if r.split == name]

    def subjects(self, name: str) -> list[str]:
        return sorted({r.subject_id for r in self.split(name)})

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"window_s": self.window_s, "internal_fs": self.internal_fs}) + "\n")
            for r in self.records:
                fh.write(json.dumps({"path": r.path, "subject_id": r.subject_id, "split": r.split}) + "\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        header, entries = {}, []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordParseError(path, line_no, f"invalid JSON ({exc.msg})") from None
                if "path" not in obj:
                    header.update(obj)
                    continue
                try:
                    entries.append(ManifestEntry(str(obj["path"]), str(obj["subject_id"]), obj["split"]))
                except (KeyError, ValueError) as exc:
                    raise RecordParseError(path, line_no, f"bad record entry ({exc})") from None
        return cls(entries, float(header.get("window_s", 25.0)),
                   float(header.get("internal_fs", 25.0)), path.parent)


def check_disjoint(entries: Iterable[ManifestEntry]) -> None:
    seen: dict[str, str] = {}
    for e in entries:
        prev = seen.setdefault(e.subject_id, e.split)
        if prev != e.split:
            raise ValueError(f"subject {e.subject_id!r} appears in both {prev!r} and {e.split!r}")


def split_by_subject(
    records: Sequence[tuple[str, str]],
    test_fraction: float = 5 / 18,
    val_fraction: float = 0.2,
    seed: int = 0,
    n_test: Optional[int] = None,
    window_s: float = 25.0,
    internal_fs: float = 25.0,
) -> DatasetManifest:
    """Partition ``(path, subject_id)`` pairs into subject-disjoint splits.

    The test split takes ``n_test`` subjects (or ``round(test_fraction * n)``);
    validation takes ``round(val_fraction * remaining)`` of the rest, at least
    one.  All records of a subject land in the same split.
    """
    subjects = sorted({s for _, s in records})
    n = len(subjects)
    if n < 3:
        raise ValueError(f"need at least 3 subjects for train/val/test, got {n}")
    if n_test is None:
        n_test = int(round(test_fraction * n))
    if not 1 <= n_test <= n - 2:
        raise ValueError(f"test split of {n_test} leaves too few of {n} subjects for train and val")
    n_val = min(max(1, int(round(val_fraction * (n - n_test)))), n - n_test - 1)
    order = np.random.default_rng(seed).permutation(n)
    assigned = {}
    for rank, i in enumerate(order):
        assigned[subjects[i]] = "test" if rank < n_test else "val" if rank < n_test + n_val else "train"
    entries = [ManifestEntry(p, s, assigned[s]) for p, s in records]
    return DatasetManifest(entries, window_s, internal_fs)
