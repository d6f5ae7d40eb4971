"""RIFF/WAVE reading (PCM-16 and IEEE float-32, mono or stereo)."""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from orgsim.errors import (
    InvalidArgument,
    WavMagicError,
    WavParseError,
    WavTruncatedError,
    WavUnsupportedError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidArgument("audio samples must be a 1-D vector")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidArgument(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgument("audio samples must be finite")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise InvalidArgument("audio samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def _chunks(data: bytes):
    pos = 12
    while pos < len(data):
        if pos + 8 > len(data):
            raise WavTruncatedError(f"chunk header at offset {pos} is truncated")
        tag, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        if body + size > len(data):
            raise WavTruncatedError(
                f"chunk {tag!r} declares {size} bytes but only {len(data) - body} remain")
        yield tag, data[body:body + size]
        pos = body + size + (size & 1)  # chunks are word aligned


def parse_wav(data: bytes) -> AudioBuffer:
    """Decode a WAV byte string into a mono :class:`AudioBuffer`.

    Stereo is averaged to mono. PCM-16 is scaled by 1/32768, so the
    representable range maps onto [-1, 1).
    """
    data = bytes(data)
    if len(data) < 12:
        raise WavTruncatedError("file shorter than the RIFF header")
    riff, _, wave_id = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise WavMagicError(f"not a RIFF/WAVE file (magic {riff!r}/{wave_id!r})")

    fmt = None
    pcm = None
    for tag, body in _chunks(data):
        if tag == b"fmt ":
            if len(body) < 16:
                raise WavTruncatedError("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise WavTruncatedError("extensible fmt chunk shorter than 40 bytes")
                sub_tag = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub_tag,) + fmt[1:]
        elif tag == b"data":
            pcm = body
    if fmt is None:
        raise WavParseError("missing fmt chunk")
    if pcm is None:
        raise WavParseError("missing data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise WavUnsupportedError(f"{channels} channels; only mono and stereo are supported")
    if rate == 0:
        raise WavUnsupportedError("sample rate of 0")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise WavUnsupportedError(f"format tag {tag:#06x} with {bits} bits per sample")
    if block_align != channels * dtype.itemsize:
        raise WavUnsupportedError(f"block align {block_align} inconsistent with format")

    n_frames = len(pcm) // block_align
    raw = np.frombuffer(pcm, dtype=dtype, count=n_frames * channels)
    samples = raw.astype(np.float64).reshape(n_frames, channels) * scale
    if dtype.kind == "f":
        if not np.all(np.isfinite(samples)):
            raise WavUnsupportedError("float data contains NaN or infinity")
        samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples.mean(axis=1), rate)


def read_wav(path) -> AudioBuffer:
    return parse_wav(Path(path).read_bytes())


def write_wav(path, audio: AudioBuffer) -> None:
    """Write mono PCM-16 (round to nearest, clipped to the int16 range)."""
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(audio.sample_rate_hz)
        fh.writeframes(pcm.tobytes())
