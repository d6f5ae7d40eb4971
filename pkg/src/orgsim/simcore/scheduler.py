"""Update-ordering policies and the step/run drivers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from orgsim.errors import InvalidArgument
from orgsim.simcore.organoid import Organoid, PeerView, SimulationHistory


class SchedulerPolicy:
    kind = "Policy"

    def order(self, organoid: Organoid, t: int) -> list:
        raise NotImplementedError


@dataclass(frozen=True)
class Sequential(SchedulerPolicy):
    kind = "Sequential"

    def order(self, organoid, t):
        return sorted(c.id for c in organoid.cells)


@dataclass(frozen=True)
class Stochastic(SchedulerPolicy):
    """Fresh Fisher-Yates permutation of the ids each step, seeded by (seed, t)."""

    seed: int = 0
    kind = "Stochastic"

    def order(self, organoid, t):
        ids = sorted(c.id for c in organoid.cells)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, t]))
        for i in range(len(ids) - 1, 0, -1):
            j = int(rng.integers(0, i + 1))
            ids[i], ids[j] = ids[j], ids[i]
        return ids


@dataclass(frozen=True)
class Priority(SchedulerPolicy):
    """Descending priority key, ties broken by ascending id.

    ``keys`` is either a mapping from cell id to key or a callable on the cell.
    """

    keys: Mapping | Callable = field(default_factory=dict)
    kind = "Priority"

    def key(self, cell) -> float:
        if callable(self.keys):
            return float(self.keys(cell))
        return float(self.keys.get(cell.id, 0.0))

    def order(self, organoid, t):
        return [c.id for c in sorted(organoid.cells, key=lambda c: (-self.key(c), c.id))]


@dataclass(frozen=True)
class Parallel(SchedulerPolicy):
    """Double-buffered: every update reads the pre-step snapshot, then all commit.

    ``workers`` > 1 evaluates on a thread pool; ``eval_seed`` shuffles the
    evaluation order. Neither can change the result.
    """

    workers: int = 1
    eval_seed: int | None = None
    kind = "Parallel"

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidArgument("workers must be >= 1")

    def order(self, organoid, t):
        ids = sorted(c.id for c in organoid.cells)
        if self.eval_seed is not None:
            ids = [ids[i] for i in np.random.default_rng(self.eval_seed).permutation(len(ids))]
        return ids


def step(organoid: Organoid, policy: SchedulerPolicy, t: int) -> Organoid:
    """Advance every cell exactly once at timestep ``t``."""
    if not organoid.cells:
        raise InvalidArgument("cannot step an empty organoid")
    by_id = {c.id: c for c in organoid.cells}
    order = policy.order(organoid, t)
    if sorted(order) != sorted(by_id):
        raise RuntimeError(f"{policy.kind} policy did not produce a permutation of the cell ids")

    if isinstance(policy, Parallel):
        snapshot = {cid: c.state.copy() for cid, c in by_id.items()}
        peers = PeerView(snapshot)

        def compute(cid):
            return cid, organoid.compute_update(by_id[cid], t, peers)

        if policy.workers > 1:
            with ThreadPoolExecutor(max_workers=policy.workers) as pool:
                results = dict(pool.map(compute, order))
        else:
            results = dict(map(compute, order))
        for cid, new in results.items():
            by_id[cid].state = new
    else:
        live = organoid.states()
        peers = PeerView(live)
        for cid in order:
            new = organoid.compute_update(by_id[cid], t, peers)
            by_id[cid].state = new
            live[cid] = new
    organoid.time = t + 1
    return organoid


def run(organoid: Organoid, policy: SchedulerPolicy, n_steps: int) -> SimulationHistory:
    """Step ``n_steps`` times from ``organoid.time``, recording every state."""
    if n_steps < 0:
        raise InvalidArgument(f"n_steps must be >= 0, got {n_steps}")
    ids = [c.id for c in organoid.cells]
    states = np.zeros((len(ids), n_steps, organoid.state_len))
    start = organoid.time
    for k in range(n_steps):
        step(organoid, policy, start + k)
        for row, cell in enumerate(organoid.cells):
            states[row, k] = cell.state
    return SimulationHistory(ids, states, start)
