"""Run configuration: built-in defaults, an optional JSON file, then CLI flags.

Every threshold and default used by the command-line tool lives in
:data:`DEFAULTS`.  A config file is a JSON object with any subset of these
keys (nested ``validation``/``annotation``/``synth`` objects may also be
partial).  Precedence is flags > file > built-in.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .annotate import DEFAULT_EDGE_SMOOTH_S, DEFAULT_MA_WINDOW_S
from .dataset import DEFAULT_INTERNAL_FS, FeatureConfig, EVAL_WINDOW_S, TRAIN_WINDOW_S
from .nn.model import ArchConfig
from .nn.train import TrainConfig
from .signals import DEFAULT_ENVELOPE_CUTOFF_HZ
from .validate import ValidationConfig

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "fs": DEFAULT_INTERNAL_FS,          # internal processing rate, Hz
    "train_window_s": TRAIN_WINDOW_S,   # train, finetune, validate, annotate
    "eval_window_s": EVAL_WINDOW_S,     # eval, infer
    "epochs": 1000,
    "patience": 200,
    "lr": 1e-3,
    "batch": 32,
    "dropout": 0.2,
    "w_cls": 1.0,
    "w_reg": 1.0,
    "threshold": 0.5,
    "envelope_cutoff_hz": DEFAULT_ENVELOPE_CUTOFF_HZ,
    "channels": list(FeatureConfig().channels),   # network input feature channels
    "arch": {"shared_hidden": [10], "branch_hidden": 10},
    "validation": {
        "max_disagreement": 1.0,
        "max_rr_bpm": 60.0,
        "min_purity_db": 0.9,
        "min_prominence": 0.2,
        "min_distance_s": 0.3,
    },
    "annotation": {"ma_window_s": DEFAULT_MA_WINDOW_S, "smooth_s": DEFAULT_EDGE_SMOOTH_S},
    "synth": {
        "n_subjects": 20,
        "n_test": 5,
        "val_fraction": 0.2,
        "fit_range": [0.2, 0.6],
        "rr_range": [8.0, 28.0],
        "hr_range": [60.0, 90.0],
        "noise_sd": 0.05,
        "duration_s": 300.0,
        "fs": 250.0,
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: Mapping, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}: {key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, Any]

    @classmethod
    def resolve(cls, config_path: Optional[str] = None, flags: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        values = copy.deepcopy(DEFAULTS)
        if config_path:
            values = _merge(values, load_config_file(config_path), str(config_path))
        if flags:
            values = _merge(values, {k: v for k, v in flags.items() if v is not None}, "flags")
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def window_s(self, kind: str, override: Optional[float] = None) -> float:
        if override is not None:
            return float(override)
        return float(self.values["eval_window_s" if kind == "eval" else "train_window_s"])

    def train_config(self) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(
                batch_size=int(v["batch"]), learning_rate=float(v["lr"]), dropout=float(v["dropout"]),
                max_epochs=int(v["epochs"]), patience=int(v["patience"]), w_cls=float(v["w_cls"]),
                w_reg=float(v["w_reg"]), threshold=float(v["threshold"]), seed=int(v["seed"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def arch_config(self, input_dim: int = 3) -> ArchConfig:
        a = self.values["arch"]
        return ArchConfig(input_dim=input_dim, shared_hidden=tuple(a["shared_hidden"]),
                          branch_hidden=int(a["branch_hidden"]), dropout=float(self.values["dropout"]))

    def validation_config(self) -> ValidationConfig:
        return ValidationConfig(**self.values["validation"])

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)
