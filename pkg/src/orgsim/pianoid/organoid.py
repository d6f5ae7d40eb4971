"""The 47-cell EEG organoid: one model inference per timestep fanned out to cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from orgsim.errors import ConfigError
from orgsim.neural.model import N_CHANNELS, BiLSTMModel, model_forward
from orgsim.pianoid.environment import AudioEnvironment
from orgsim.simcore.organoid import BehaviorModule, Cell, Organoid, SimulationHistory
from orgsim.simcore.scheduler import SchedulerPolicy, run, step


@dataclass
class EEGCell(Cell):
    channel_index: int = 0


class EEGModule(BehaviorModule):
    """Shares one prediction per timestep across every cell.

    The cache holds only the latest timestep, so memory stays constant.
    """

    def __init__(self, model: BiLSTMModel, env: AudioEnvironment, predict=None):
        self.model = model
        self.env = env
        self.predict = predict or (lambda window: model_forward(model, window))
        self.inference_count = 0
        self._cache_t = None
        self._cache = None

    def prediction(self, t: int) -> np.ndarray:
        if self._cache_t != t:
            self._cache = np.asarray(self.predict(self.env.window(t)), dtype=np.float64)
            self._cache_t = t
            self.inference_count += 1
        return self._cache

    def update(self, cell, sample, t, rng, peers):
        return self.prediction(t)[cell.channel_index:cell.channel_index + 1]


class AudioScheduler(SchedulerPolicy):
    """Cells in channel order, one audio window per step."""

    kind = "Audio"

    def order(self, organoid, t):
        return [c.id for c in sorted(organoid.cells, key=lambda c: c.channel_index)]


@dataclass
class EEGOrganoid(Organoid):
    module: EEGModule | None = None
    history: SimulationHistory | None = None

    def channel_states(self) -> np.ndarray:
        out = np.zeros(N_CHANNELS)
        for c in self.cells:
            out[c.channel_index] = c.state[0]
        return out


def build_pianoid(model: BiLSTMModel, env: AudioEnvironment, seed: int = 0,
                  creation_order=None, predict=None) -> EEGOrganoid:
    """47 cells at seeded random positions, channel indices 0..46, zero states.

    ``creation_order`` permutes which cell id gets which channel index.
    ``predict`` substitutes the inference callable (e.g. a counting adapter).
    """
    cfg = model.config
    if cfg.n_outputs != N_CHANNELS:
        raise ConfigError(f"model predicts {cfg.n_outputs} values, the organoid needs {N_CHANNELS}")
    if cfg.n_mfcc != env.features.n_mfcc or cfg.window_len != env.window_len:
        raise ConfigError(f"model expects {cfg.window_len}x{cfg.n_mfcc} windows, environment gives "
                          f"{env.window_len}x{env.features.n_mfcc}")
    order = list(range(N_CHANNELS)) if creation_order is None else [int(i) for i in creation_order]
    if sorted(order) != list(range(N_CHANNELS)):
        raise ConfigError("creation_order must be a permutation of 0..46")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9051]))
    positions = env.bounds.uniform(rng, N_CHANNELS)
    module = EEGModule(model, env, predict)
    cells = [EEGCell(i, positions[i], np.zeros(1), 0, channel_index=order[i]) for i in range(N_CHANNELS)]
    return EEGOrganoid(env, cells, {0: module}, seed=seed, state_len=1, module=module)


def audio_step(organoid: EEGOrganoid, t: int) -> EEGOrganoid:
    organoid.env.window(t)  # range check before any cell is touched
    return step(organoid, AudioScheduler(), t)


def run_simulation(organoid: EEGOrganoid) -> np.ndarray:
    """Play the whole audio; returns the 47 x T matrix with row i = channel i."""
    n = organoid.env.n_steps - organoid.time
    hist = run(organoid, AudioScheduler(), n)
    organoid.history = hist
    out = np.zeros((N_CHANNELS, hist.steps_executed))
    for row, cid in enumerate(hist.cell_ids):
        out[organoid.cell(cid).channel_index] = hist.states[row, :, 0]
    return out
