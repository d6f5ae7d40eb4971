"""Audio and EEG signal processing."""

from orgsim.signal.eeg import (
    EEGRecording,
    EpochSet,
    epoch,
    load_recording,
    pearson,
    save_recording,
    save_recording_matrix,
    zscore_channels,
)
from orgsim.signal.filters import FIRFilter, apply_filter, design_bandpass
from orgsim.signal.mfcc import (
    MFCCConfig,
    MFCCMatrix,
    dct_matrix,
    hz_to_mel,
    log_mel_energies,
    mel_filterbank,
    mel_to_hz,
    mfcc,
    n_frames_for,
)
from orgsim.signal.spectral import PSDEstimate, fft, ifft, power_spectrum, welch_psd
from orgsim.signal.wav import AudioBuffer, parse_wav, read_wav, write_wav

__all__ = [
    "AudioBuffer", "EEGRecording", "EpochSet", "FIRFilter", "MFCCConfig", "MFCCMatrix",
    "PSDEstimate", "apply_filter", "dct_matrix", "design_bandpass", "epoch", "fft",
    "hz_to_mel", "ifft", "load_recording", "log_mel_energies", "mel_filterbank", "mel_to_hz", "mfcc",
    "n_frames_for", "parse_wav", "pearson", "power_spectrum", "read_wav", "save_recording",
    "save_recording_matrix", "welch_psd", "write_wav", "zscore_channels",
]
