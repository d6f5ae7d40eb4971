"""Adam with an exponentially decaying step size."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from orgsim.errors import InvalidArgument, ShapeError


@dataclass(frozen=True)
class Schedule:
    lr0: float = 1e-3
    decay_rate: float = 0.96
    decay_steps: int = 1000

    def __post_init__(self):
        if self.lr0 < 0 or self.decay_rate <= 0 or self.decay_steps <= 0:
            raise InvalidArgument(f"bad schedule {self}")


def lr_at(schedule: Schedule, step: int) -> float:
    """``lr0 * decay_rate ** (step / decay_steps)`` with a continuous exponent."""
    if step < 0:
        raise InvalidArgument(f"step must be >= 0, got {step}")
    if step % schedule.decay_steps == 0:
        # integer exponent: exact power, so lr_at(decay_steps) == lr0 * decay_rate
        return schedule.lr0 * schedule.decay_rate ** (step // schedule.decay_steps)
    return schedule.lr0 * schedule.decay_rate ** (step / schedule.decay_steps)


@dataclass(frozen=True)
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: Schedule = field(default_factory=Schedule)
    lr_scale: float = 1.0
    min_lr: float = 0.0

    def current_lr(self) -> float:
        lr = self.lr_scale * lr_at(self.schedule, self.t)
        # the floor guards plateau reductions only
        return max(lr, self.min_lr) if self.lr_scale < 1.0 else lr

    def reduced(self, factor: float) -> "AdamState":
        return replace(self, lr_scale=self.lr_scale * factor)


def init_adam(params: dict, schedule: Schedule | None = None, **kw) -> AdamState:
    return AdamState(m={k: np.zeros_like(v) for k, v in params.items()},
                     v={k: np.zeros_like(v) for k, v in params.items()},
                     schedule=schedule or Schedule(), **kw)


def adam_step(params: dict, grads: dict, state: AdamState):
    """Return ``(new_params, new_state)``; inputs are left untouched."""
    if set(grads) != set(params):
        raise ShapeError(f"gradient blocks {sorted(set(grads) ^ set(params))} do not match parameters")
    lr = state.current_lr()
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"{name}: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, replace(state, m=new_m, v=new_v, t=t)
