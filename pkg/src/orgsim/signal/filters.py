"""Windowed-sinc FIR band-pass design and zero-delay application."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from orgsim.errors import InvalidArgument


@dataclass(frozen=True)
class FIRFilter:
    taps: np.ndarray
    low_hz: float
    high_hz: float
    sample_rate_hz: float

    @property
    def n_taps(self) -> int:
        return self.taps.size

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response evaluated directly from the taps."""
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        n = np.arange(self.taps.size)
        w = 2.0 * np.pi * freqs[:, None] / self.sample_rate_hz
        return np.exp(-1j * w * n) @ self.taps


def _hamming_half(n_taps: int) -> np.ndarray:
    m = (n_taps - 1) // 2
    k = np.arange(m + 1)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n_taps - 1))


def _lowpass_half(cutoff_hz: float, n_taps: int, sample_rate_hz: float) -> np.ndarray:
    # taps 0..centre; the other half is the mirror image
    m = (n_taps - 1) // 2
    fc = cutoff_hz / sample_rate_hz
    offsets = np.arange(m + 1) - m
    half = 2.0 * fc * np.sinc(2.0 * fc * offsets) * _hamming_half(n_taps)
    total = 2.0 * half[:-1].sum() + half[-1]
    return half / total  # unit gain at DC


def design_bandpass(low_hz: float, high_hz: float, n_taps: int = 129,
                    sample_rate_hz: float = 128.0) -> FIRFilter:
    """Hamming-windowed band-pass as the difference of two unit-DC low-passes.

    Normalizing each low-pass to unit DC gain before subtracting puts an
    exact zero at 0 Hz. Taps are built from one half and mirrored, so the
    symmetry is bitwise.
    """
    nyquist = sample_rate_hz / 2.0
    if not 0.0 < low_hz < high_hz < nyquist:
        raise InvalidArgument(f"need 0 < low < high < {nyquist} Hz, got {low_hz}..{high_hz}")
    if n_taps < 3 or n_taps % 2 == 0:
        raise InvalidArgument(f"n_taps must be odd and >= 3, got {n_taps}")
    half = _lowpass_half(high_hz, n_taps, sample_rate_hz) - _lowpass_half(low_hz, n_taps, sample_rate_hz)
    taps = np.concatenate([half, half[-2::-1]])
    return FIRFilter(taps, float(low_hz), float(high_hz), float(sample_rate_hz))


def apply_filter(f: FIRFilter, x) -> np.ndarray:
    """Convolve with reflect padding; output aligned with (and as long as) the input.

    ``x`` may be 2-D (channels x samples); each row is filtered independently.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return np.stack([apply_filter(f, row) for row in x])
    if x.size <= f.n_taps:
        raise InvalidArgument(f"signal of {x.size} samples must be longer than {f.n_taps} taps")
    pad = (f.n_taps - 1) // 2
    padded = np.pad(x, pad, mode="reflect")
    return np.convolve(padded, f.taps, mode="valid")
