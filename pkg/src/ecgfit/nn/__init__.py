from .gru import GruParams, ShapeError, gru_cell_forward, gru_sequence_backward, gru_sequence_forward
from .io import ModelFormatError, load_model, save_model
from .model import (
    ArchConfig,
    MtlModel,
    StreamingPredictor,
    forward_batch,
    init_model,
    loss_and_grads,
    mtl_forward,
    mtl_loss,
    predict_batch,
)
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainHistory, TrainingDiverged, WindowSet, evaluate, finetune, train

__all__ = [
    "AdamState", "ArchConfig", "GruParams", "ModelFormatError", "MtlModel", "ShapeError",
    "StreamingPredictor", "TrainConfig", "TrainHistory", "TrainingDiverged", "WindowSet",
    "adam_step", "evaluate", "finetune", "forward_batch", "gru_cell_forward",
    "gru_sequence_backward", "gru_sequence_forward", "init_model", "load_model",
    "loss_and_grads", "mtl_forward", "mtl_loss", "predict_batch", "save_model", "train",
]
