"""Audio as a simulation environment: MFCC windows indexed by timestep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from orgsim.errors import InvalidArgument, RangeError
from orgsim.signal.mfcc import MFCCConfig, MFCCMatrix, mfcc
from orgsim.signal.wav import AudioBuffer
from orgsim.simcore.environment import Environment


@dataclass(frozen=True)
class AudioEnvironment(Environment):
    """Timestep ``t`` exposes feature frames ``[t, t + window_len)``.

    The scalar field every cell samples is the first cepstral coefficient of
    the newest frame in the window (a loudness proxy); positions are inert.
    """

    audio: AudioBuffer | None = None
    mfcc_cfg: MFCCConfig | None = None
    window_len: int = 16
    features: MFCCMatrix | None = None
    kind = "Audio"

    @property
    def n_steps(self) -> int:
        return self.features.n_frames - self.window_len + 1

    def frame_cursor(self, t: int) -> int:
        self._check(t)
        return int(t)

    def _check(self, t):
        if not 0 <= t < self.n_steps:
            raise RangeError(f"timestep {t} outside [0, {self.n_steps})")

    def window(self, t: int) -> np.ndarray:
        self._check(t)
        return self.features.coeffs[t:t + self.window_len]

    def value(self, pos, t):
        self._check(t)
        return self.features.coeffs[t + self.window_len - 1, 0]


def build_audio_env(audio: AudioBuffer, mfcc_cfg: MFCCConfig | None = None,
                    window_len: int = 16) -> AudioEnvironment:
    mfcc_cfg = mfcc_cfg or MFCCConfig()
    if window_len < 1:
        raise InvalidArgument(f"window_len must be >= 1, got {window_len}")
    features = mfcc(audio, mfcc_cfg)
    if features.n_frames < window_len:
        raise InvalidArgument(f"audio yields {features.n_frames} frames, need at least {window_len}")
    return AudioEnvironment(audio=audio, mfcc_cfg=mfcc_cfg, window_len=window_len, features=features)
