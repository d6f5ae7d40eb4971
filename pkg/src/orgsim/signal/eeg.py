"""EEG containers, event epoching, normalization and correlation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from orgsim import container
from orgsim.errors import (
    EmptyEpochsError,
    FormatError,
    InvalidArgument,
    UndefinedCorrelationError,
)


@dataclass(frozen=True)
class EEGRecording:
    data: np.ndarray  # channels x samples
    sample_rate_hz: float
    channel_names: tuple = ()

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidArgument("EEG data must be channels x samples")
        names = tuple(self.channel_names) or tuple(f"ch{i:02d}" for i in range(data.shape[0]))
        if len(names) != data.shape[0]:
            raise InvalidArgument(f"{len(names)} channel names for {data.shape[0]} channels")
        if not np.all(np.isfinite(data)):
            raise InvalidArgument("EEG data must be finite")
        if self.sample_rate_hz <= 0:
            raise InvalidArgument("sample rate must be positive")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def with_data(self, data) -> "EEGRecording":
        return EEGRecording(data, self.sample_rate_hz, self.channel_names)


@dataclass(frozen=True)
class EpochSet:
    epochs: np.ndarray  # events x channels x samples
    tmin_s: float
    tmax_s: float
    event_times_s: np.ndarray
    dropped_times_s: np.ndarray = field(default_factory=lambda: np.zeros(0))


def epoch(rec: EEGRecording, event_times_s, tmin_s: float, tmax_s: float) -> EpochSet:
    """Cut ``[event + tmin, event + tmax)`` windows around each event.

    Events whose window runs off either end of the recording are dropped
    and listed in ``dropped_times_s``.
    """
    if not tmin_s < tmax_s:
        raise InvalidArgument(f"tmin ({tmin_s}) must be below tmax ({tmax_s})")
    events = np.atleast_1d(np.asarray(event_times_s, dtype=np.float64))
    rate = rec.sample_rate_hz
    length = int(round((tmax_s - tmin_s) * rate))
    kept, dropped, segments = [], [], []
    for ev in events:
        start = int(round((ev + tmin_s) * rate))
        if start < 0 or start + length > rec.n_samples:
            dropped.append(ev)
            continue
        kept.append(ev)
        segments.append(rec.data[:, start:start + length])
    if not segments:
        raise EmptyEpochsError(f"all {events.size} events fall outside the recording")
    return EpochSet(np.stack(segments), tmin_s, tmax_s, np.array(kept), np.array(dropped))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise InvalidArgument(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InvalidArgument("need at least two samples")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    dx = x - x.mean()
    dy = y - y.mean()
    r = np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    return float(np.clip(r, -1.0, 1.0))


def zscore_channels(rec: EEGRecording) -> EEGRecording:
    """Per-channel mean 0, population standard deviation 1."""
    data = rec.data
    for name, row in zip(rec.channel_names, data):
        if np.all(row == row[0]):
            raise InvalidArgument(f"channel {name} is constant and cannot be normalized")
    centred = data - data.mean(axis=1, keepdims=True)
    scaled = centred / centred.std(axis=1, keepdims=True)
    # second centring pass mops up rounding left by the first
    scaled -= scaled.mean(axis=1, keepdims=True)
    return rec.with_data(scaled)


def save_recording(rec: EEGRecording, path) -> None:
    """Write a recording as a PORG container with one EEG0 section."""
    cfg = {"sample_rate_hz": float(rec.sample_rate_hz), "channel_names": "\n".join(rec.channel_names)}
    container.write_container(path, [("EEG0", container.encode_payload(cfg, [("data", rec.data)]))])


def save_recording_matrix(rec: EEGRecording, path) -> None:
    """Write samples x channels as a PODS matrix (float32); rate and names are not kept."""
    container.write_matrix(path, rec.data.T)


def load_recording(path, sample_rate_hz: float | None = None) -> EEGRecording:
    """Read a PORG recording, or a PODS matrix when ``sample_rate_hz`` is supplied."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == container.PODS_MAGIC:
        if sample_rate_hz is None:
            raise InvalidArgument(f"{path} is a bare matrix; its sample rate must be given")
        return EEGRecording(container.read_matrix(path).T, sample_rate_hz)
    for tag, payload in container.read_container(path):
        if tag == "EEG0":
            cfg, arrays = container.decode_payload(payload)
            names = tuple(cfg["channel_names"].split("\n")) if cfg["channel_names"] else ()
            return EEGRecording(arrays["data"], cfg["sample_rate_hz"], names)
    raise FormatError(f"{path} has no EEG0 section")
