"""Simulated cortical organoids driven by audio: signal processing, ICA cleanup,
a BiLSTM audio-to-EEG regressor and a cell-level simulation framework."""

__version__ = "0.1.0"
