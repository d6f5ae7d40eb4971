"""Scalar-field environments that cells sample once per timestep."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from orgsim.errors import DomainError, InvalidArgument


class Position3D(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)


@dataclass(frozen=True)
class Box:
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise InvalidArgument("bounds must be three-dimensional")
        if not all(np.isfinite(lo + hi)) or not all(a < b for a, b in zip(lo, hi)):
            raise InvalidArgument(f"need finite lo < hi on every axis, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, pos) -> bool:
        p = tuple(pos)
        return all(np.isfinite(p)) and all(a <= v <= b for a, v, b in zip(self.lo, p, self.hi))

    def uniform(self, rng: np.random.Generator, n: int) -> list:
        pts = rng.uniform(self.lo, self.hi, size=(n, 3))
        return [Position3D(*map(float, p)) for p in pts]


@dataclass(frozen=True)
class Environment:
    """Base environment; subclasses define :meth:`value`."""

    bounds: Box = field(default_factory=Box)
    kind = "Environment"

    def value(self, pos: np.ndarray, t: int) -> float:
        raise NotImplementedError

    def sample_field(self, pos, t: int) -> float:
        if not self.bounds.contains(pos):
            raise DomainError(f"position {tuple(pos)} outside {self.kind} bounds {self.bounds}")
        value = float(self.value(np.asarray(pos, dtype=np.float64), t))
        if not np.isfinite(value):
            raise DomainError(f"{self.kind} field is not finite at {tuple(pos)}")
        return value


def sample_field(env: Environment, pos, t: int) -> float:
    return env.sample_field(pos, t)


@dataclass(frozen=True)
class GradientEnvironment(Environment):
    """``offset + slope * pos[axis]``."""

    slope: float = 1.0
    axis: int = 0
    offset: float = 0.0
    kind = "Gradient"

    def value(self, pos, t):
        return self.offset + self.slope * pos[self.axis]


@dataclass(frozen=True)
class TemperatureEnvironment(Environment):
    """Constant plus a linear gradient: ``base + gradient . pos``."""

    base: float = 37.0
    gradient: tuple = (0.0, 0.0, 0.0)
    kind = "Temperature"

    def value(self, pos, t):
        return self.base + float(np.dot(self.gradient, pos))


@dataclass(frozen=True)
class ChemicalGradientEnvironment(Environment):
    """Radial decay from a point source: ``peak * exp(-|pos - source| / decay_length)``."""

    source: tuple = (0.5, 0.5, 0.5)
    peak: float = 1.0
    decay_length: float = 0.25
    kind = "ChemicalGradient"

    def __post_init__(self):
        if self.decay_length <= 0:
            raise InvalidArgument("decay_length must be positive")

    def value(self, pos, t):
        r = np.linalg.norm(pos - np.asarray(self.source, dtype=np.float64))
        return self.peak * np.exp(-r / self.decay_length)


@dataclass(frozen=True)
class ElectricFieldEnvironment(Environment):
    """Uniform vector field; the scalar sample is the potential ``-E . (pos - reference)``."""

    field_vector: tuple = (1.0, 0.0, 0.0)
    reference: tuple = (0.0, 0.0, 0.0)
    kind = "ElectricField"

    def value(self, pos, t):
        return -float(np.dot(self.field_vector, pos - np.asarray(self.reference, dtype=np.float64)))

    def vector(self, pos) -> np.ndarray:
        return np.asarray(self.field_vector, dtype=np.float64)


@dataclass(frozen=True)
class StochasticEnvironment(Environment):
    """Gaussian noise that is a deterministic function of (seed, position, t)."""

    seed: int = 0
    mean: float = 0.0
    std: float = 1.0
    kind = "Stochastic"

    def value(self, pos, t):
        words = struct.unpack("<3Q", struct.pack("<3d", *pos))
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, t & 0xFFFFFFFFFFFFFFFF, *words])
        return self.mean + self.std * np.random.default_rng(ss).standard_normal()
