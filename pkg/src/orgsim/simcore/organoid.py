"""Cells, behavior modules, organoids and their simulation history."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from orgsim import container
from orgsim.errors import InvalidArgument, NumericError, ShapeError
from orgsim.simcore.environment import Environment, Position3D


@dataclass
class Cell:
    id: int
    position: Position3D
    state: np.ndarray
    module_id: int = 0


class LazyRng:
    """A per-(seed, t, cell) generator that is only built if a module draws from it."""

    __slots__ = ("_key", "_rng")

    def __init__(self, *key):
        self._key = key
        self._rng = None

    def __getattr__(self, name):
        if self._rng is None:
            self._rng = np.random.default_rng(np.random.SeedSequence(list(self._key)))
        return getattr(self._rng, name)


class PeerView:
    """Read-only access to other cells' states as the active policy exposes them."""

    def __init__(self, states: dict):
        self._states = states

    def state(self, cell_id: int) -> np.ndarray:
        return self._states[cell_id]

    def ids(self):
        return list(self._states)


class BehaviorModule:
    """Maps (cell, environment sample, t, rng, peers) to the cell's next state.

    Implementations must not keep hidden mutable state that influences the
    result; ``rng`` is the only source of randomness.
    """

    def update(self, cell: Cell, sample: float, t: int, rng, peers: PeerView) -> np.ndarray:
        raise NotImplementedError


class FunctionModule(BehaviorModule):
    """Adapter for a plain ``fn(state, sample, t, rng) -> state``."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def update(self, cell, sample, t, rng, peers):
        return self.fn(cell.state, sample, t, rng)


@dataclass
class Organoid:
    env: Environment
    cells: list
    modules: dict
    seed: int = 0
    time: int = 0
    state_len: int = 1

    def __len__(self):
        return len(self.cells)

    def cell(self, cell_id: int) -> Cell:
        return self._by_id[cell_id]

    @property
    def _by_id(self):
        return {c.id: c for c in self.cells}

    def states(self) -> dict:
        return {c.id: c.state for c in self.cells}

    def compute_update(self, cell: Cell, t: int, peers: PeerView) -> np.ndarray:
        sample = self.env.sample_field(cell.position, t)
        module = self.modules[cell.module_id]
        new = module.update(cell, sample, t, LazyRng(self.seed, t, cell.id), peers)
        new = np.asarray(new, dtype=np.float64)
        if new.shape != (self.state_len,):
            raise ShapeError(f"cell {cell.id}: module returned shape {new.shape}, "
                             f"expected ({self.state_len},)")
        if not np.all(np.isfinite(new)):
            raise NumericError(f"cell {cell.id}: module produced a non-finite state {new}")
        return new

    def step(self, policy, t: int | None = None) -> "Organoid":
        from orgsim.simcore.scheduler import step
        return step(self, policy, self.time if t is None else t)

    def run(self, policy, n_steps: int) -> "SimulationHistory":
        from orgsim.simcore.scheduler import run
        return run(self, policy, n_steps)


def create_organoid(env: Environment, cell_count: int, state_len: int,
                    module: BehaviorModule, seed: int = 0) -> Organoid:
    """Cells with ids 0..n-1 at seeded uniform positions, states zeroed."""
    if cell_count < 1:
        raise InvalidArgument(f"cell_count must be positive, got {cell_count}")
    if state_len < 1:
        raise InvalidArgument(f"state_len must be positive, got {state_len}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9051]))  # positions stream
    positions = env.bounds.uniform(rng, cell_count)
    cells = [Cell(i, positions[i], np.zeros(state_len)) for i in range(cell_count)]
    return Organoid(env, cells, {0: module}, seed=seed, state_len=state_len)


@dataclass
class SimulationHistory:
    cell_ids: list
    states: np.ndarray  # cells x steps x state_len
    start_time: int = 0

    @property
    def steps_executed(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.states.shape[0] * self.states.shape[1]

    def series(self, cell_id: int) -> np.ndarray:
        return self.states[self._row(cell_id)]

    def at(self, cell_id: int, step: int) -> np.ndarray:
        """State of ``cell_id`` after the ``step``-th executed step (0-based)."""
        if not 0 <= step < self.steps_executed:
            raise IndexError(f"step {step} outside [0, {self.steps_executed})")
        return self.states[self._row(cell_id), step]

    def _row(self, cell_id):
        try:
            return self.cell_ids.index(cell_id)
        except ValueError:
            raise KeyError(f"no cell with id {cell_id}") from None

    def to_csv(self, path) -> None:
        n_state = self.states.shape[2]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["cell_id", "timestep"] + [f"s{k}" for k in range(n_state)])
            for row, cid in enumerate(self.cell_ids):
                for step in range(self.steps_executed):
                    writer.writerow([cid, self.start_time + step]
                                    + [repr(float(v)) for v in self.states[row, step]])

    def to_pods(self, path) -> None:
        """One record per timestep holding every cell's state, in ``cell_ids`` order."""
        rows = self.states.transpose(1, 0, 2).reshape(self.steps_executed, -1)
        container.write_matrix(path, rows)
