"""Command-line entry point: ``ecgfit <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import annotate as ann
from .config import ConfigError, RunConfig
from .dataset import FeatureConfig, WindowRecord, build_windows, to_window_set
from .ingest import (
    DatasetManifest,
    RecordFile,
    RecordParseError,
    RecordStructureError,
    read_record,
    split_by_subject,
    write_record,
)
from .nn.gru import ShapeError
from .nn.io import ModelFormatError, load_model, save_model
from .nn.train import TrainingDiverged, finetune, train
from .pipeline import oracle_predictions, predict_windows, score_windows, stream_estimates
from .signals import minmax_normalize, resample, window_split
from .synth import SynthSpec, gen_record, spec_bank
from .validate import validate_window

log = logging.getLogger("ecgfit")


class CliError(Exception):
    """Failure reported to the user as ``error: <message>`` with exit code 1."""


# -- shared helpers -------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _out_dir(args) -> Path:
    if not args.out:
        raise CliError(f"{args.command}: --out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _feature_config(cfg: RunConfig) -> FeatureConfig:
    return FeatureConfig(internal_fs=float(cfg["fs"]), envelope_cutoff_hz=float(cfg["envelope_cutoff_hz"]),
                         channels=tuple(cfg["channels"]))


def _manifest(args) -> DatasetManifest:
    if not args.manifest:
        raise CliError(f"{args.command}: --manifest is required")
    try:
        return DatasetManifest.read(args.manifest)
    except FileNotFoundError:
        raise CliError(f"manifest not found: {args.manifest}") from None


def _read(path) -> RecordFile:
    try:
        return read_record(path)
    except FileNotFoundError:
        raise CliError(f"record not found: {path}") from None


def _records(args) -> list[RecordFile]:
    """Records named on the command line, or every record in the manifest."""
    if args.records:
        return [_read(p) for p in args.records]
    m = _manifest(args)
    out = []
    for e in m.records:
        rec = _read(m.resolve(e))
        rec.subject_id = e.subject_id
        out.append(rec)
    return out


def _load_windows(args, cfg: RunConfig, split: str, kind: str, m: DatasetManifest) -> list[WindowRecord]:
    entries = m.split(split)
    if not entries:
        raise CliError(f"manifest {args.manifest} has no {split!r} records")
    window_s = cfg.window_s(kind, args.window_s)
    out = []
    for e in entries:
        path = m.resolve(e)
        rec = _read(path)
        if rec.resp is None:
            raise CliError(f"{path}: a 'resp' channel is needed for {split} windows")
        out.extend(build_windows(
            rec.ecg, rec.resp, window_s, _feature_config(cfg), subject_id=e.subject_id,
            validate=True, validation=cfg.validation_config(), annotation=dict(cfg["annotation"]),
        ))
    if not out:
        raise CliError(f"no {split} window passed validation")
    return out


def _load_model(args):
    if not args.model:
        raise CliError(f"{args.command}: --model is required")
    try:
        return load_model(args.model)
    except FileNotFoundError:
        raise CliError(f"model not found: {args.model}") from None


def _write_history(path: Path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for i, row in enumerate(zip(history.train_loss, history.val_loss, history.val_accuracy), 1):
            w.writerow([i, *(repr(float(x)) for x in row)])


# -- subcommands ----------------------------------------------------------------

def _load_specs(path) -> list[SynthSpec]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"spec file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if isinstance(data, dict):
        data = data.get("specs")
    if not isinstance(data, list):
        raise CliError(f"{path}: expected a list of specs or an object with a 'specs' list")
    specs = []
    for i, d in enumerate(data):
        try:
            spec = SynthSpec.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise CliError(f"{path}: spec {i}: {exc}") from None
        specs.append(spec if spec.subject_id else SynthSpec.from_dict({**d, "subject_id": f"syn{i:03d}"}))
    return specs


def cmd_synth(args, cfg: RunConfig) -> int:
    s = cfg["synth"]
    if args.spec:
        specs = _load_specs(args.spec)
    else:
        specs = spec_bank(int(s["n_subjects"]), seed=int(cfg["seed"]), fit_range=tuple(s["fit_range"]),
                          rr_range=tuple(s["rr_range"]), hr_range=tuple(s["hr_range"]),
                          noise_sd=float(s["noise_sd"]), duration_s=float(s["duration_s"]), fs=float(s["fs"]))
    if not specs:
        raise CliError("spec list is empty")
    ids = [sp.subject_id for sp in specs]
    if len(set(ids)) != len(ids):
        raise CliError("subject_id values in the spec list must be unique")
    out = _out_dir(args)
    (out / "records").mkdir(exist_ok=True)
    pairs = []
    for sp in specs:
        rec = gen_record(sp)
        rel = f"records/{sp.subject_id}.csv"
        write_record(RecordFile(sp.subject_id, {"ecg": rec.ecg, "resp": rec.resp}), out / rel)
        pairs.append((rel, sp.subject_id))
    (out / "specs.json").write_text(json.dumps([sp.to_dict() for sp in specs], indent=2) + "\n")
    try:
        n_test = min(int(s["n_test"]), len(specs) - 2)
        manifest = split_by_subject(pairs, val_fraction=float(s["val_fraction"]), seed=int(cfg["seed"]),
                                    n_test=n_test, window_s=cfg.window_s("train"),
                                    internal_fs=float(cfg["fs"]))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    manifest.write(out / "manifest.jsonl")
    print(f"wrote {len(specs)} records and {out / 'manifest.jsonl'} "
          f"(train {len(manifest.split('train'))}, val {len(manifest.split('val'))}, "
          f"test {len(manifest.split('test'))})")
    return 0


def cmd_validate(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    vcfg = cfg.validation_config()
    window_s = cfg.window_s("train", args.window_s)
    n_ok = n_all = 0
    with open(out / "validation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "window_index", "start_s", "accepted", "reason", "rr1_bpm", "rr2_bpm", "purity_db"])
        for rec in _records(args):
            if rec.resp is None:
                raise CliError(f"record {rec.subject_id!r} has no 'resp' channel to validate")
            for i, win in enumerate(window_split(rec.resp, window_s)):
                v = validate_window(minmax_normalize(resample(win, float(cfg["fs"]))), vcfg)
                w.writerow([rec.subject_id, i, _fmt(win.start_index / win.fs), _fmt(v.accepted),
                            v.reason.value if v.reason else "", _fmt(v.rr1_bpm), _fmt(v.rr2_bpm),
                            _fmt(v.purity_db)])
                n_all += 1
                n_ok += v.accepted
    print(f"accepted {n_ok} of {n_all} windows; table in {out / 'validation.csv'}")
    return 0


def cmd_annotate(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    (out / "labels").mkdir(exist_ok=True)
    window_s = cfg.window_s("train", args.window_s)
    fs = float(cfg["fs"])
    with open(out / "annotation_summary.csv", "w", newline="") as sfh:
        summary = csv.writer(sfh, lineterminator="\n")
        summary.writerow(["subject_id", "window_index", "start_s", "fit", "rr_bpm", "n_peaks", "n_valleys"])
        for rec in _records(args):
            if rec.resp is None:
                raise CliError(f"record {rec.subject_id!r} has no 'resp' channel to annotate")
            with open(out / "labels" / f"{rec.subject_id}.csv", "w", newline="") as lfh:
                lw = csv.writer(lfh, lineterminator="\n")
                lw.writerow(["window_index", "t", "label"])
                for i, win in enumerate(window_split(rec.resp, window_s)):
                    start = win.start_index / win.fs
                    try:
                        a = ann.annotate(resample(win, fs), **cfg["annotation"])
                    except ann.AnnotationError as exc:
                        log.warning("%s window %d: %s", rec.subject_id, i, exc)
                        continue
                    for k, lab in enumerate(a.labels.labels):
                        lw.writerow([i, repr(start + k / fs), int(lab)])
                    summary.writerow([rec.subject_id, i, _fmt(start), _fmt(a.fit), _fmt(a.rr_bpm),
                                      len(a.extrema.peaks), len(a.extrema.valleys)])
    print(f"labels in {out / 'labels'}; summary in {out / 'annotation_summary.csv'}")
    return 0


def _fit(args, cfg: RunConfig, pretrained=None) -> int:
    out = _out_dir(args)
    m = _manifest(args)
    train_w = _load_windows(args, cfg, "train", "train", m)
    val_w = _load_windows(args, cfg, "val", "train", m)
    tcfg = cfg.train_config()
    log.info("training on %d windows, validating on %d", len(train_w), len(val_w))
    try:
        if pretrained is None:
            model, hist = train(to_window_set(train_w), to_window_set(val_w), tcfg,
                                cfg.arch_config(train_w[0].features.shape[0]))
        else:
            model, hist = finetune(pretrained, to_window_set(train_w), to_window_set(val_w), tcfg)
    except (ShapeError, TrainingDiverged) as exc:
        raise CliError(str(exc)) from None
    target = out / "model.bin"
    save_model(model, target)
    _write_history(out / "history.csv", hist)
    (out / "run_config.json").write_text(cfg.to_json() + "\n")
    print(f"best epoch {hist.best_epoch} of {hist.epochs}, validation accuracy "
          f"{hist.best_val_accuracy:.4f}; model written to {target}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    return _fit(args, cfg)


def cmd_finetune(args, cfg: RunConfig) -> int:
    return _fit(args, cfg, pretrained=_load_model(args))


def cmd_eval(args, cfg: RunConfig) -> int:
    m = _manifest(args)
    out = _out_dir(args)
    windows = _load_windows(args, cfg, "test", "eval", m)
    if args.oracle:
        preds = oracle_predictions(windows)
    else:
        model = _load_model(args)
        if model.arch.input_dim != windows[0].features.shape[0]:
            raise CliError(f"{args.model}: model expects {model.arch.input_dim} feature channels, "
                           f"data has {windows[0].features.shape[0]}")
        preds = predict_windows(model, windows)
    report = score_windows(windows, preds, float(cfg["threshold"]))
    summary = report.write(out)
    print(" ".join(f"{k}={_fmt(v)}" for k, v in summary.items()))
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    if not args.records or len(args.records) != 1:
        raise CliError("infer: give exactly one record path")
    model = _load_model(args)
    rec = _read(args.records[0])
    window_s = cfg.window_s("eval", args.window_s)
    sink = open(Path(_out_dir(args)) / "infer.csv", "w") if args.out else None
    try:
        for index, start, est in stream_estimates(model, iter(rec.ecg.samples), rec.ecg.fs, window_s,
                                                  _feature_config(cfg), float(cfg["threshold"])):
            line = f"{index},{start!r},{est.fit!r},{'nan' if est.rr_bpm is None else repr(est.rr_bpm)}"
            print(line, flush=True)
            if sink:
                sink.write(line + "\n")
    finally:
        if sink:
            sink.close()
    return 0


COMMANDS = {
    "synth": (cmd_synth, "generate synthetic records and a manifest"),
    "validate": (cmd_validate, "apply the respiratory quality rules to each window"),
    "annotate": (cmd_annotate, "label inspiratory/expiratory phases from respiration"),
    "train": (cmd_train, "train a model on the manifest's train/val splits"),
    "finetune": (cmd_finetune, "continue training a saved model on new data"),
    "eval": (cmd_eval, "score a model on the manifest's test split"),
    "infer": (cmd_infer, "stream an ECG record and print fit,rr per window"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--manifest", help="dataset manifest (JSON lines)")
    common.add_argument("--model", help="model file to read")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--fs", type=float, help="internal processing rate, Hz")
    common.add_argument("--window-s", type=float, dest="window_s")
    common.add_argument("--epochs", type=int)
    common.add_argument("--patience", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--batch", type=int)
    common.add_argument("--dropout", type=float)
    common.add_argument("--w-cls", type=float, dest="w_cls")
    common.add_argument("--w-reg", type=float, dest="w_reg")
    common.add_argument("--threshold", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ecgfit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "synth":
            p.add_argument("--spec", help="JSON list of subject specs (default: built-in spec bank)")
        if name in ("validate", "annotate", "infer"):
            p.add_argument("records", nargs="*", help="record CSV files (default: every manifest record)")
        else:
            p.set_defaults(records=None)
        if name == "eval":
            p.add_argument("--oracle", action="store_true",
                           help="score the reference labels and respiration instead of a model")
    return parser


FLAG_KEYS = ("seed", "fs", "epochs", "patience", "lr", "batch", "dropout", "w_cls", "w_reg", "threshold")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.resolve(args.config, {k: getattr(args, k) for k in FLAG_KEYS})
        return COMMANDS[args.command][0](args, cfg)
    except (CliError, ConfigError, RecordParseError, RecordStructureError, ModelFormatError,
            ShapeError, ann.AnnotationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
