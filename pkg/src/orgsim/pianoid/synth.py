"""Synthetic piano audio and a learnable teacher EEG for desk-scale experiments.

The teacher maps each MFCC window to 47 channels through a fixed low-rank
linear map with an exponential temporal kernel, then adds a 10 Hz rhythm
(not predictable from audio) and Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from orgsim.errors import InvalidArgument
from orgsim.neural.model import N_CHANNELS
from orgsim.pianoid.dataset import DatasetStore, make_dataset
from orgsim.signal.eeg import EEGRecording, save_recording
from orgsim.signal.mfcc import MFCCConfig, MFCCMatrix, mfcc
from orgsim.signal.wav import AudioBuffer, read_wav, write_wav

MIN_DURATION_S = 10.0


@dataclass(frozen=True)
class TeacherConfig:
    rank: int = 4
    noise_sigma: float = 0.05
    osc_amp: float = 0.1
    osc_hz: float = 10.0
    tau_frames: float = 4.0
    audio_rate_hz: int = 8000

    def __post_init__(self):
        if self.rank < 1 or self.tau_frames <= 0 or self.noise_sigma < 0 or self.audio_rate_hz < 1000:
            raise InvalidArgument(f"bad teacher config {self}")


@dataclass(frozen=True)
class Teacher:
    cfg: TeacherConfig
    V: np.ndarray       # n_mfcc x rank
    U: np.ndarray       # channels x rank
    kernel: np.ndarray  # window_len, weights the newest frame most
    scale: np.ndarray   # per-coefficient divisor
    gain: np.ndarray    # per-channel
    bias: np.ndarray    # per-channel
    phase: np.ndarray   # per-channel phase of the rhythm

    def linear(self, windows) -> np.ndarray:
        """The purely linear part: windows (N, W, M) -> (N, 47)."""
        z = np.asarray(windows, dtype=np.float64) / self.scale
        proj = np.einsum("nwm,w,mr->nr", z, self.kernel, self.V)
        return (proj @ self.U.T) * self.gain

    def noiseless(self, windows) -> np.ndarray:
        return self.linear(windows) + self.bias

    def rhythm(self, times_s) -> np.ndarray:
        t = np.asarray(times_s, dtype=np.float64)
        return self.cfg.osc_amp * np.sin(2 * np.pi * self.cfg.osc_hz * t[:, None] + self.phase)


def make_teacher(features: MFCCMatrix, window_len: int, cfg: TeacherConfig, rng) -> Teacher:
    M = features.n_mfcc
    scale = features.coeffs.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    kernel = np.exp(-(window_len - 1 - np.arange(window_len)) / cfg.tau_frames)
    kernel /= kernel.sum()
    V = rng.standard_normal((M, cfg.rank)) / np.sqrt(M)
    U = rng.standard_normal((N_CHANNELS, cfg.rank))
    phase = rng.uniform(0, 2 * np.pi, N_CHANNELS)
    raw = Teacher(cfg, V, U, kernel, scale, np.ones(N_CHANNELS), np.zeros(N_CHANNELS), phase)
    lin = raw.linear(_windows(features, window_len))
    std = lin.std(axis=0)
    gain = 1.0 / np.where(std > 0, std, 1.0)
    return Teacher(cfg, V, U, kernel, scale, gain, -lin.mean(axis=0) * gain, phase)


def _windows(features: MFCCMatrix, window_len: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(features.coeffs, window_len, axis=0)
    return view.transpose(0, 2, 1)


def piano_audio(rng, duration_s: float, sample_rate_hz: int = 8000) -> AudioBuffer:
    """Overlapping decaying notes between A2 and A6 with two overtones."""
    n = int(round(duration_s * sample_rate_hz))
    x = np.zeros(n)
    onset = 0.0
    while onset < duration_s:
        for _ in range(int(rng.integers(1, 4))):
            key = int(rng.integers(45, 94))
            f0 = 440.0 * 2.0 ** ((key - 69) / 12.0)
            dur = rng.uniform(0.2, 0.8)
            amp = rng.uniform(0.2, 1.0)
            tau = rng.uniform(0.15, 0.6)
            phase = rng.uniform(0, 2 * np.pi)
            s = int(onset * sample_rate_hz)
            e = min(n, int((onset + dur) * sample_rate_hz))
            tt = np.arange(e - s) / sample_rate_hz
            env = amp * np.minimum(tt / 0.01, 1.0) * np.exp(-tt / tau)
            env *= np.clip((dur - tt) / 0.01, 0.0, 1.0)  # release taper
            for k, w in ((1, 1.0), (2, 0.5), (3, 0.25)):
                if k * f0 < sample_rate_hz / 2:
                    x[s:e] += w * env * np.sin(2 * np.pi * k * f0 * tt + k * phase)
        onset += rng.uniform(0.1, 0.5)
    x += 1e-3 * rng.standard_normal(n)
    x *= 0.8 / np.max(np.abs(x))
    return AudioBuffer(x, sample_rate_hz)


@dataclass(frozen=True)
class SynthResult:
    audio_path: Path
    eeg_path: Path
    store: DatasetStore
    teacher: Teacher
    features: MFCCMatrix
    eeg: EEGRecording


def synth_dataset(seed: int, duration_s: float, rate_hz: float = 128.0,
                  teacher_cfg: TeacherConfig | None = None, path=".",
                  mfcc_cfg: MFCCConfig | None = None, window_len: int = 16) -> SynthResult:
    """Write ``audio.wav``, ``eeg.porg`` and ``dataset.pods`` into directory ``path``.

    ``rate_hz`` is the EEG sampling rate; audio is generated at
    ``teacher_cfg.audio_rate_hz``.
    """
    if duration_s < MIN_DURATION_S:
        raise InvalidArgument(f"duration must be >= {MIN_DURATION_S} s, got {duration_s}")
    if rate_hz <= 0:
        raise InvalidArgument(f"rate_hz must be positive, got {rate_hz}")
    teacher_cfg = teacher_cfg or TeacherConfig()
    mfcc_cfg = mfcc_cfg or MFCCConfig()
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    audio_rng, teacher_rng, noise_rng = (np.random.default_rng(s)
                                         for s in np.random.SeedSequence(seed).spawn(3))

    audio_path = out / "audio.wav"
    write_wav(audio_path, piano_audio(audio_rng, duration_s, teacher_cfg.audio_rate_hz))
    audio = read_wav(audio_path)  # features come from what is on disk
    features = mfcc(audio, mfcc_cfg)
    if features.n_frames < window_len:
        raise InvalidArgument("audio too short for one feature window")
    teacher = make_teacher(features, window_len, teacher_cfg, teacher_rng)

    n_eeg = int(np.floor(audio.duration_s * rate_hz))
    times = np.arange(n_eeg) / rate_hz
    # frame whose centre is nearest each EEG sample ends that sample's window
    pos = (times * features.sample_rate_hz - features.frame_len / 2.0) / features.hop
    frame = np.floor(pos + 0.5).astype(np.int64)
    frame = np.clip(frame, window_len - 1, features.n_frames - 1)
    windows = _windows(features, window_len)[frame - window_len + 1]
    data = teacher.noiseless(windows) + teacher.rhythm(times)
    data += teacher_cfg.noise_sigma * noise_rng.standard_normal(data.shape)
    eeg = EEGRecording(data.T, rate_hz)
    eeg_path = out / "eeg.porg"
    save_recording(eeg, eeg_path)
    store = make_dataset(features, eeg, window_len, out / "dataset.pods")
    return SynthResult(audio_path, eeg_path, store, teacher, features, eeg)
