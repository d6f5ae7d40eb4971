"""Radix-2 FFT and Welch power spectral density."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from orgsim.errors import InvalidArgument


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(size: int) -> np.ndarray:
    half = size // 2
    return np.exp(-2j * np.pi * np.arange(half) / size)


def fft(x) -> np.ndarray:
    """Unnormalized forward DFT along the last axis.

    Iterative decimation-in-time radix-2; the last axis must have a
    power-of-two length. Leading axes are treated as a batch.
    """
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1] if a.ndim else 0
    if not is_power_of_two(n):
        raise InvalidArgument(f"fft length must be a power of two, got {n}")
    lead = a.shape[:-1]
    a = a[..., _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        a = a.reshape(lead + (n // size, size))
        even = a[..., :half]
        odd = a[..., half:] * _twiddles(size)
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(lead + (n,))


def ifft(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    return np.conj(fft(np.conj(X))) / X.shape[-1]


def power_spectrum(frames, n_fft: int) -> np.ndarray:
    """One-sided |X|^2 of real frames zero-padded (or cut) to ``n_fft``."""
    frames = np.asarray(frames, dtype=np.float64)
    m = frames.shape[-1]
    if m < n_fft:
        pad = [(0, 0)] * (frames.ndim - 1) + [(0, n_fft - m)]
        frames = np.pad(frames, pad)
    elif m > n_fft:
        frames = frames[..., :n_fft]
    spec = fft(frames)[..., : n_fft // 2 + 1]
    return spec.real ** 2 + spec.imag ** 2


def hann(n: int, periodic: bool = True) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    denom = n if periodic else n - 1
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / denom)


@dataclass(frozen=True)
class PSDEstimate:
    freqs_hz: np.ndarray
    power: np.ndarray

    def rows(self):
        return [(float(f), float(p)) for f, p in zip(self.freqs_hz, self.power)]


def welch_psd(x, sample_rate_hz: float, nperseg: int = 256,
              overlap_frac: float = 0.5) -> PSDEstimate:
    """Welch estimate: Hann-windowed segments, averaged one-sided periodograms.

    Power is in signal^2/Hz, so ``sum(power) * df`` approximates the
    signal's mean square. No detrending is applied.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument("welch_psd expects a 1-D signal")
    if not is_power_of_two(nperseg):
        raise InvalidArgument(f"nperseg must be a power of two, got {nperseg}")
    if not 0.0 <= overlap_frac < 1.0:
        raise InvalidArgument(f"overlap_frac must be in [0, 1), got {overlap_frac}")
    if x.size < nperseg:
        raise InvalidArgument(f"signal of {x.size} samples is shorter than nperseg={nperseg}")
    if sample_rate_hz <= 0:
        raise InvalidArgument("sample rate must be positive")

    step = max(1, nperseg - int(round(overlap_frac * nperseg)))
    n_seg = 1 + (x.size - nperseg) // step
    starts = np.arange(n_seg) * step
    segments = x[starts[:, None] + np.arange(nperseg)]
    win = hann(nperseg)
    spec = power_spectrum(segments * win, nperseg).mean(axis=0)

    power = spec / (sample_rate_hz * np.sum(win ** 2))
    power[1:] *= 2.0
    if nperseg % 2 == 0:
        power[-1] /= 2.0  # Nyquist bin has no mirror image
    freqs = np.arange(nperseg // 2 + 1) * (sample_rate_hz / nperseg)
    return PSDEstimate(freqs, power)
