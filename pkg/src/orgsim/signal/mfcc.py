"""Mel-frequency cepstral coefficients.

Per frame: Hann window, |FFT|^2, triangular HTK-mel filterbank, log with a
floor, orthonormal DCT-II truncated to ``n_mfcc`` coefficients.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from orgsim.errors import InvalidArgument
from orgsim.signal.spectral import hann, is_power_of_two, next_power_of_two, power_spectrum
from orgsim.signal.wav import AudioBuffer


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MFCCConfig:
    """Framing and filterbank settings.

    Zero-valued ``frame_len``/``hop``/``n_fft``/``fmax_hz`` are placeholders
    resolved against the sample rate by :meth:`resolve`: 25 ms frames, 10 ms
    hop, the next power of two, and Nyquist respectively.
    """

    frame_len: int = 0
    hop: int = 0
    n_fft: int = 0
    n_mels: int = 40
    n_mfcc: int = 20
    fmin_hz: float = 0.0
    fmax_hz: float = 0.0
    floor: float = 1e-10
    frame_ms: float = 25.0
    hop_ms: float = 10.0

    def resolve(self, sample_rate_hz: int) -> "MFCCConfig":
        frame_len = self.frame_len or int(round(self.frame_ms * 1e-3 * sample_rate_hz))
        hop = self.hop or int(round(self.hop_ms * 1e-3 * sample_rate_hz))
        n_fft = self.n_fft or next_power_of_two(frame_len)
        fmax = self.fmax_hz or sample_rate_hz / 2.0
        cfg = replace(self, frame_len=frame_len, hop=hop, n_fft=n_fft, fmax_hz=fmax)
        cfg.validate(sample_rate_hz)
        return cfg

    def validate(self, sample_rate_hz: int) -> None:
        if self.frame_len < 1 or self.hop < 1:
            raise InvalidArgument("frame_len and hop must be positive")
        if not is_power_of_two(self.n_fft) or self.frame_len > self.n_fft:
            raise InvalidArgument(
                f"n_fft={self.n_fft} must be a power of two >= frame_len={self.frame_len}")
        if not 0.0 <= self.fmin_hz < self.fmax_hz <= sample_rate_hz / 2.0:
            raise InvalidArgument(
                f"need 0 <= fmin < fmax <= Nyquist, got {self.fmin_hz}..{self.fmax_hz}")
        if self.n_mels < 1 or not 1 <= self.n_mfcc <= self.n_mels:
            raise InvalidArgument("need 1 <= n_mfcc <= n_mels")
        if self.floor <= 0:
            raise InvalidArgument("log floor must be positive")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MFCCMatrix:
    coeffs: np.ndarray  # frames x n_mfcc
    frame_len: int
    hop: int
    sample_rate_hz: int
    n_mfcc: int

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[0]

    def frame_time(self, k):
        """Time in seconds of the centre of frame ``k``."""
        return (np.asarray(k) * self.hop + self.frame_len / 2.0) / self.sample_rate_hz

    @property
    def frame_rate_hz(self) -> float:
        return self.sample_rate_hz / self.hop


def n_frames_for(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // hop


def mel_filterbank(sample_rate_hz: int, n_fft: int, n_mels: int,
                   fmin_hz: float, fmax_hz: float) -> np.ndarray:
    """Triangular filters (n_mels x n_fft//2+1) with peaks evenly spaced in mel.

    Weights are evaluated at each FFT bin's exact frequency; peaks are 1
    (no area normalization).
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * (sample_rate_hz / n_fft)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (mid - lo)
    falling = (hi - bins) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def dct_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II basis as an (n_out x n_in) matrix."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    basis = np.cos(np.pi * k * (2 * n + 1) / (2.0 * n_in))
    scale = np.full((n_out, 1), np.sqrt(2.0 / n_in))
    scale[0] = np.sqrt(1.0 / n_in)
    return basis * scale


def frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n = n_frames_for(samples.size, frame_len, hop)
    if n == 0:
        return np.zeros((0, frame_len))
    return np.lib.stride_tricks.sliding_window_view(samples, frame_len)[::hop][:n]


def log_mel_energies(audio: AudioBuffer, cfg: MFCCConfig | None = None) -> np.ndarray:
    """Floored log filterbank energies (frames x n_mels), the pre-DCT stage."""
    cfg = (cfg or MFCCConfig()).resolve(audio.sample_rate_hz)
    frames = frame_signal(audio.samples, cfg.frame_len, cfg.hop)
    if frames.shape[0] == 0:
        return np.zeros((0, cfg.n_mels))
    spec = power_spectrum(frames * hann(cfg.frame_len), cfg.n_fft)
    fb = mel_filterbank(audio.sample_rate_hz, cfg.n_fft, cfg.n_mels, cfg.fmin_hz, cfg.fmax_hz)
    return np.log(np.maximum(spec @ fb.T, cfg.floor))


def mfcc(audio: AudioBuffer, cfg: MFCCConfig | None = None) -> MFCCMatrix:
    cfg = (cfg or MFCCConfig()).resolve(audio.sample_rate_hz)
    logmel = log_mel_energies(audio, cfg)
    coeffs = logmel @ dct_matrix(cfg.n_mels, cfg.n_mfcc).T
    return MFCCMatrix(coeffs, cfg.frame_len, cfg.hop, audio.sample_rate_hz, cfg.n_mfcc)
