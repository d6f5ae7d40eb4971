"""Aligned (MFCC window, EEG vector) pairs in a memory-mapped PODS file."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from orgsim import container
from orgsim.errors import ConfigError, EmptyDataError, FormatError, InvalidArgument, StorageError
from orgsim.neural.model import N_CHANNELS
from orgsim.signal.eeg import EEGRecording
from orgsim.signal.mfcc import MFCCMatrix

_CHUNK = 4096


class DatasetStore:
    """Read-only view of a pairs file; records are fetched on demand, never loaded whole."""

    def __init__(self, path):
        self.path = Path(path)
        n_pairs, window_len, n_mfcc, n_targets = container.read_pods_header(self.path)
        if window_len == 0:
            raise FormatError(f"{self.path} is a plain matrix file, not a pairs store")
        if n_targets != N_CHANNELS:
            raise ConfigError(f"{self.path} holds {n_targets} targets per pair, expected {N_CHANNELS}")
        self.n_pairs, self.window_len, self.n_mfcc, self.n_targets = n_pairs, window_len, n_mfcc, n_targets
        self.dtype = np.dtype([("window", "<f4", (window_len, n_mfcc)), ("target", "<f4", (n_targets,))])
        self._mm = None

    def __len__(self) -> int:
        return self.n_pairs

    @property
    def records(self) -> np.ndarray:
        if self._mm is None:
            if self.n_pairs == 0:
                self._mm = np.zeros(0, dtype=self.dtype)
            else:
                self._mm = np.memmap(self.path, dtype=self.dtype, mode="r",
                                     offset=container.PODS_HEADER.size, shape=(self.n_pairs,))
        return self._mm

    def pair(self, k: int):
        """Pair ``k`` exactly as stored (float32)."""
        if not 0 <= k < self.n_pairs:
            raise IndexError(f"pair {k} outside [0, {self.n_pairs})")
        rec = self.records[k]
        return np.array(rec["window"]), np.array(rec["target"])

    def read(self, indices):
        """Windows and targets for ``indices``, upcast to float64."""
        idx = np.asarray(indices, dtype=np.int64)
        recs = self.records[idx]
        return recs["window"].astype(np.float64), recs["target"].astype(np.float64)

    def feature_stats(self, indices=None):
        """Per-coefficient mean and std over every frame of the selected windows."""
        idx = np.arange(self.n_pairs) if indices is None else np.asarray(indices)
        if idx.size == 0:
            raise EmptyDataError("no pairs to take statistics over")
        total = np.zeros(self.n_mfcc)
        sq = np.zeros(self.n_mfcc)
        count = 0
        for start in range(0, idx.size, _CHUNK):
            X, _ = self.read(idx[start:start + _CHUNK])
            flat = X.reshape(-1, self.n_mfcc)
            total += flat.sum(axis=0)
            count += flat.shape[0]
        mean = total / count
        for start in range(0, idx.size, _CHUNK):
            X, _ = self.read(idx[start:start + _CHUNK])
            sq += ((X.reshape(-1, self.n_mfcc) - mean) ** 2).sum(axis=0)
        std = np.sqrt(sq / count)
        return mean, np.where(std > 0, std, 1.0)


def write_pairs(path, windows, targets) -> DatasetStore:
    windows = np.asarray(windows)
    targets = np.asarray(targets)
    if windows.ndim != 3 or targets.ndim != 2 or windows.shape[0] != targets.shape[0]:
        raise InvalidArgument(f"windows {windows.shape} and targets {targets.shape} do not pair up")
    if targets.shape[1] != N_CHANNELS:
        raise ConfigError(f"targets have {targets.shape[1]} channels, expected {N_CHANNELS}")
    n, W, M = windows.shape
    dtype = np.dtype([("window", "<f4", (W, M)), ("target", "<f4", (N_CHANNELS,))])
    try:
        with open(path, "wb") as fh:
            fh.write(container.pack_pods_header(n, W, M, N_CHANNELS))
            for start in range(0, n, _CHUNK):
                stop = min(n, start + _CHUNK)
                rec = np.empty(stop - start, dtype=dtype)
                rec["window"] = windows[start:stop]
                rec["target"] = targets[start:stop]
                fh.write(rec.tobytes())
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return DatasetStore(path)


def target_indices(features: MFCCMatrix, window_len: int, rate_hz: float, n_samples: int) -> np.ndarray:
    """EEG sample nearest in time to the last frame of each window, clipped to the recording."""
    last = np.arange(features.n_frames - window_len + 1) + window_len - 1
    idx = np.floor(features.frame_time(last) * rate_hz + 0.5).astype(np.int64)
    return np.clip(idx, 0, n_samples - 1)


def make_dataset(features: MFCCMatrix, eeg: EEGRecording, window_len: int, path) -> DatasetStore:
    if eeg.n_channels != N_CHANNELS:
        raise ConfigError(f"EEG has {eeg.n_channels} channels, expected {N_CHANNELS}")
    if not 1 <= window_len <= features.n_frames:
        raise InvalidArgument(f"window_len {window_len} does not fit {features.n_frames} frames")
    windows = np.lib.stride_tricks.sliding_window_view(features.coeffs, window_len, axis=0)
    windows = windows.transpose(0, 2, 1)  # pairs x window_len x n_mfcc
    idx = target_indices(features, window_len, eeg.sample_rate_hz, eeg.n_samples)
    return write_pairs(path, windows, eeg.data[:, idx].T)


def split_indices(n_pairs: int, val_frac: float = 0.2):
    """Contiguous split: the last ``val_frac`` of the pairs are held out."""
    if not 0.0 < val_frac < 1.0:
        raise InvalidArgument(f"val_frac must be in (0, 1), got {val_frac}")
    n_val = max(1, int(round(n_pairs * val_frac)))
    if n_val >= n_pairs:
        raise EmptyDataError(f"{n_pairs} pairs cannot be split into train and validation")
    return np.arange(n_pairs - n_val), np.arange(n_pairs - n_val, n_pairs)


def batches(store: DatasetStore, batch_size: int, seed: int, epoch: int, indices=None, shuffle=True):
    """Yield ``(windows, targets)`` batches covering every selected pair once.

    The order is a permutation derived from ``(seed, epoch)``; the final short
    batch is kept.
    """
    if batch_size < 1:
        raise InvalidArgument(f"batch_size must be >= 1, got {batch_size}")
    idx = np.arange(len(store)) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise EmptyDataError("no pairs to batch")
    if shuffle:
        idx = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(idx)

    def gen():
        for start in range(0, idx.size, batch_size):
            yield store.read(idx[start:start + batch_size])

    return gen()


class BatchGenerator:
    """Callable ``epoch -> batches``, the form the training loop consumes."""

    def __init__(self, store: DatasetStore, batch_size: int, seed: int = 0, indices=None,
                 shuffle: bool = True):
        self.store = store
        self.batch_size = batch_size
        self.seed = seed
        self.indices = np.arange(len(store)) if indices is None else np.asarray(indices, dtype=np.int64)
        self.shuffle = shuffle

    def __len__(self) -> int:
        return -(-self.indices.size // self.batch_size)

    def __call__(self, epoch: int):
        return batches(self.store, self.batch_size, self.seed, epoch, self.indices, self.shuffle)
