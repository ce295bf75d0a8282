"""Mini-batch training with best-validation-accuracy checkpointing."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .gru import ShapeError
from .model import ArchConfig, MtlModel, forward_batch, init_model, loss_and_grads
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    dropout: float = 0.2
    max_epochs: int = 1000
    patience: int = 200
    w_cls: float = 1.0
    w_reg: float = 1.0
    threshold: float = 0.5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.w_cls < 0 or self.w_reg < 0 or self.w_cls + self.w_reg <= 0:
            raise ValueError("loss weights must be non-negative and not both zero")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class WindowSet:
    """Equal-length windows: features (N, T, D), labels (N, T), reference respiration (N, T)."""

    features: np.ndarray
    labels: np.ndarray
    resp: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.resp = np.asarray(self.resp, dtype=np.float64)
        if self.features.ndim != 3:
            raise ShapeError(f"features must be (N, T, D), got {self.features.shape}")
        if self.labels.shape != self.features.shape[:2] or self.resp.shape != self.features.shape[:2]:
            raise ShapeError("labels and resp must be (N, T) matching the features")

    def __len__(self) -> int:
        return self.features.shape[0]

    def time_major(self, idx=None):
        sel = slice(None) if idx is None else idx
        X = np.ascontiguousarray(self.features[sel].transpose(1, 0, 2))
        return X, np.ascontiguousarray(self.labels[sel].T), np.ascontiguousarray(self.resp[sel].T)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("nan")
    stopped_early: bool = False
    seconds: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


class TrainingDiverged(FloatingPointError):
    pass


def evaluate(model: MtlModel, data: WindowSet, cfg: TrainConfig) -> tuple[float, float]:
    """(loss, phase accuracy) in inference mode.

    Uses the compiled sequence kernels; the results agree with
    :func:`predict_batch` to rounding.
    """
    X, y, z = data.time_major()
    fp = forward_batch(model, X)
    probs, resp = fp.probs, fp.resp
    p = np.clip(probs, 1e-12, 1 - 1e-12)
    bce = float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))
    mse = float(np.mean((resp - z) ** 2))
    acc = float(np.mean((probs >= cfg.threshold) == (y > 0.5)))
    return cfg.w_cls * bce + cfg.w_reg * mse, acc


def train(train_set: WindowSet, val_set: WindowSet, cfg: TrainConfig = TrainConfig(),
          arch: ArchConfig = ArchConfig(), init: Optional[MtlModel] = None,
          on_epoch: Optional[Callable[[int, TrainHistory], None]] = None):
    """Train with Adam; keep the weights of the best validation-accuracy epoch.

    Returns ``(model, history)``.  Training stops after ``cfg.max_epochs`` or
    after ``cfg.patience`` epochs without a validation-accuracy improvement.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if len(val_set) == 0:
        raise ValueError("validation set is empty")
    arch = replace(arch, dropout=cfg.dropout)
    if init is None:
        model = init_model(arch, seed=cfg.seed)
    else:
        if init.arch.input_dim != arch.input_dim or init.arch.shared_hidden != arch.shared_hidden \
                or init.arch.branch_hidden != arch.branch_hidden:
            raise ShapeError(f"pretrained architecture {init.arch} does not match {arch}")
        model = MtlModel(arch, {k: v.copy() for k, v in init.params.items()}, dict(init.meta))
    if train_set.features.shape[2] != arch.input_dim:
        raise ShapeError(f"features have {train_set.features.shape[2]} channels, model expects {arch.input_dim}")

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    params = model.params
    state = AdamState()
    history = TrainHistory(config=asdict(cfg))
    best_params = {k: v.copy() for k, v in params.items()}
    best_acc = -np.inf
    started = time.perf_counter()
    n = len(train_set)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            X, y, z = train_set.time_major(idx)
            current = model.with_params(params)
            loss, grads = loss_and_grads(current, X, y, z, cfg.w_cls, cfg.w_reg, cfg.dropout, rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, batch starting {start}; "
                    f"max |param| = {max(float(np.abs(p).max()) for p in params.values()):.3g}"
                )
            params, state = adam_step(params, grads, state, cfg.learning_rate,
                                      cfg.beta1, cfg.beta2, cfg.eps)
            total += loss * len(idx)
            seen += len(idx)
        current = model.with_params(params)
        val_loss, val_acc = evaluate(current, val_set, cfg)
        history.train_loss.append(total / seen)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = {k: v.copy() for k, v in params.items()}
            history.best_epoch = epoch
            history.best_val_accuracy = val_acc
        log.info("epoch %d train_loss %.5f val_loss %.5f val_acc %.4f", epoch,
                 history.train_loss[-1], val_loss, val_acc)
        if on_epoch is not None:
            on_epoch(epoch, history)
        if epoch - history.best_epoch >= cfg.patience:
            history.stopped_early = True
            break
    history.seconds = time.perf_counter() - started

    meta = dict(model.meta)
    prior_epochs = int(meta.get("epochs_trained", 0))
    meta.update(
        epochs_trained=prior_epochs + history.best_epoch,
        best_epoch=history.best_epoch,
        best_val_accuracy=None if history.epochs == 0 else history.best_val_accuracy,
        finetuned=init is not None or bool(meta.get("finetuned", False)),
    )
    return MtlModel(arch, best_params, meta), history


def finetune(pretrained: MtlModel, train_set: WindowSet, val_set: WindowSet,
             cfg: TrainConfig = TrainConfig(), arch: Optional[ArchConfig] = None):
    """Continue training every layer from ``pretrained`` weights."""
    arch = pretrained.arch if arch is None else arch
    return train(train_set, val_set, cfg, arch, init=pretrained)
