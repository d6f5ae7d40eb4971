"""Bidirectional LSTM regression engine: model, BPTT, Adam, training and checkpoints."""

from orgsim.neural.checkpoint import load_checkpoint, save_checkpoint
from orgsim.neural.model import (
    N_CHANNELS,
    BiLSTMModel,
    ModelConfig,
    backward,
    bilstm_forward,
    draw_masks,
    l2_penalty,
    loss,
    lstm_cell_forward,
    mae,
    model_forward,
    mse,
)
from orgsim.neural.optim import AdamState, Schedule, adam_step, init_adam, lr_at
from orgsim.neural.training import TrainConfig, TrainHistory, evaluate_loss, grid_search, train

__all__ = [
    "AdamState", "BiLSTMModel", "ModelConfig", "N_CHANNELS", "Schedule", "TrainConfig",
    "TrainHistory", "adam_step", "backward", "bilstm_forward", "draw_masks", "evaluate_loss",
    "grid_search", "init_adam", "l2_penalty", "load_checkpoint", "loss", "lr_at",
    "lstm_cell_forward", "mae", "model_forward", "mse", "save_checkpoint", "train",
]
