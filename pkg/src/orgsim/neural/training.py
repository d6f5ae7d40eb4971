"""Epoch loop with plateau LR reduction, early stopping, checkpointing and grid search."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from orgsim.errors import ConfigError, DataError, OrgsimError
from orgsim.neural.checkpoint import save_checkpoint
from orgsim.neural.model import BiLSTMModel, ModelConfig, backward
from orgsim.neural.optim import AdamState, Schedule, adam_step, init_adam


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 30
    early_stop_patience: int = 5
    lr_reduce_factor: float = 0.5
    lr_reduce_patience: int = 3
    min_lr: float = 1e-6
    min_delta: float = 0.0
    seed: int = 0
    checkpoint_path: str | None = None
    lr0: float = 1e-3
    decay_rate: float = 0.96
    decay_steps: int = 1000

    def __post_init__(self):
        if not 0.0 < self.lr_reduce_factor < 1.0:
            raise ConfigError(f"lr_reduce_factor must be in (0, 1), got {self.lr_reduce_factor}")
        if self.early_stop_patience < 1 or self.lr_reduce_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.lr0, self.decay_rate, self.decay_steps)

    def as_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**self.as_dict(), **changes})


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_mae: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    state: AdamState | None = None

    def __len__(self) -> int:
        return len(self.val_loss)

    @property
    def best_val_loss(self) -> float:
        return min(self.val_loss) if self.val_loss else math.inf

    def rows(self) -> list:
        return [[e + 1, self.train_loss[e], self.val_loss[e], self.train_mae[e], self.val_mae[e], self.lr[e]]
                for e in range(len(self))]

    HEADER = ["epoch", "train_loss", "val_loss", "train_mae", "val_mae", "lr"]


def _epoch_batches(gen, epoch: int):
    return gen(epoch) if callable(gen) else gen


def _check(model: BiLSTMModel, X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    cfg = model.config
    if X.ndim != 3 or X.shape[1:] != (cfg.window_len, cfg.n_mfcc):
        raise DataError(f"window batch shape {X.shape}, expected (B, {cfg.window_len}, {cfg.n_mfcc})")
    if Y.shape != (X.shape[0], cfg.n_outputs):
        raise DataError(f"target batch shape {Y.shape}, expected ({X.shape[0]}, {cfg.n_outputs})")
    return X, Y


def evaluate_loss(model: BiLSTMModel, gen, epoch: int = 0):
    """Plain MSE and MAE over every sample the generator yields."""
    sq = ab = 0.0
    n = 0
    for X, Y in _epoch_batches(gen, epoch):
        X, Y = _check(model, X, Y)
        err = model.predict(X) - Y
        sq += float(np.sum(err * err))
        ab += float(np.sum(np.abs(err)))
        n += err.size
    if n == 0:
        raise DataError("validation generator yielded no batches")
    return sq / n, ab / n


def train(model: BiLSTMModel, train_gen, val_gen, config: TrainConfig | None = None):
    """Fit ``model`` and return ``(best_model, history)``; the input model is not modified.

    Generators are either callables ``epoch -> iterable of (X, Y)`` or re-iterable
    collections of batches.
    """
    config = config or TrainConfig()
    model = model.copy()
    state = init_adam(model.params, config.schedule, min_lr=config.min_lr)
    history = TrainHistory()
    best = model.copy()
    best_val = math.inf
    wait = plateau = 0
    for epoch in range(config.max_epochs):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch]))
        loss_sum = abs_sum = 0.0
        n_out = 0
        for X, Y in _epoch_batches(train_gen, epoch):
            X, Y = _check(model, X, Y)
            loss, grads, pred = backward(model, X, Y, training=True, rng=rng)
            model.params, state = adam_step(model.params, grads, state)
            loss_sum += loss * Y.size
            abs_sum += float(np.sum(np.abs(pred - Y)))
            n_out += Y.size
        if n_out == 0:
            raise DataError("training generator yielded no batches")
        val_loss, val_mae = evaluate_loss(model, val_gen, epoch)
        history.train_loss.append(loss_sum / n_out)
        history.train_mae.append(abs_sum / n_out)
        history.val_loss.append(val_loss)
        history.val_mae.append(val_mae)
        history.lr.append(state.current_lr())

        if val_loss < best_val - config.min_delta:
            best_val = val_loss
            best = model.copy()
            history.best_epoch = epoch + 1
            wait = plateau = 0
            if config.checkpoint_path:
                save_checkpoint(best, state, config.checkpoint_path)
        else:
            wait += 1
            plateau += 1
            if plateau >= config.lr_reduce_patience:
                state = state.reduced(config.lr_reduce_factor)
                plateau = 0
            if wait >= config.early_stop_patience:
                history.stopped_early = True
                break
    history.state = state
    return best, history


_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def grid_search(grid, budget_epochs: int, data, model_config: ModelConfig | None = None,
                train_config: TrainConfig | None = None, norm=None):
    """Train each grid entry for ``budget_epochs`` and pick the lowest validation loss.

    ``data`` is ``(train_gen, val_gen)``; ``norm`` optionally gives input
    ``(mean, std)``. Ties go to the earliest entry. Returns ``(best_entry, losses)``.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("grid must contain at least one configuration")
    model_config = model_config or ModelConfig()
    train_config = (train_config or TrainConfig()).replace(max_epochs=budget_epochs, checkpoint_path=None)
    train_gen, val_gen = data
    losses = []
    for i, entry in enumerate(grid):
        try:
            unknown = set(entry) - _MODEL_KEYS - _TRAIN_KEYS
            if unknown:
                raise ConfigError(f"unknown hyperparameters {sorted(unknown)}")
            mcfg = model_config.replace(**{k: v for k, v in entry.items() if k in _MODEL_KEYS})
            tcfg = train_config.replace(**{k: v for k, v in entry.items() if k in _TRAIN_KEYS})
            model = BiLSTMModel(mcfg)
            if norm is not None:
                model.set_normalization(*norm)
            _, hist = train(model, train_gen, val_gen, tcfg)
        except OrgsimError as exc:
            exc.args = (f"grid config {i}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        best = hist.best_val_loss
        losses.append(best if math.isfinite(best) else math.inf)
    winner = min(range(len(grid)), key=lambda i: (losses[i], i))
    return dict(grid[winner]), losses

