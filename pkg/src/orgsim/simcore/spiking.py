"""Leaky integrate-and-fire cells, the shipped spiking exemplar."""

from __future__ import annotations

import numpy as np

from orgsim.errors import InvalidArgument
from orgsim.simcore.organoid import BehaviorModule

_MAX = np.finfo(np.float64).max


def spiking_exemplar(state, env_sample: float, threshold: float = 1.0,
                     leak: float = 0.9, reset: float = 0.0) -> np.ndarray:
    """One LIF update on ``state = [v, spiked]``.

    ``v' = leak * v + input``; crossing ``threshold`` sets the spike flag and
    resets ``v'``. The membrane value saturates instead of overflowing.
    """
    if not 0.0 < leak <= 1.0:
        raise InvalidArgument(f"leak must be in (0, 1], got {leak}")
    v = float(np.asarray(state, dtype=np.float64)[0])
    with np.errstate(over="ignore"):
        v_new = float(np.clip(np.float64(leak) * v + np.float64(env_sample), -_MAX, _MAX))
    if v_new >= threshold:
        return np.array([reset, 1.0])
    return np.array([v_new, 0.0])


class LIFModule(BehaviorModule):
    """Drives :func:`spiking_exemplar` with the environment sample as input current."""

    state_len = 2

    def __init__(self, threshold: float = 1.0, leak: float = 0.9, reset: float = 0.0):
        if not 0.0 < leak <= 1.0:
            raise InvalidArgument(f"leak must be in (0, 1], got {leak}")
        self.threshold = threshold
        self.leak = leak
        self.reset = reset

    def update(self, cell, sample, t, rng, peers):
        return spiking_exemplar(cell.state, sample, self.threshold, self.leak, self.reset)
