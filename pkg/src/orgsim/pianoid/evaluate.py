"""Prediction-versus-truth metrics for 47-channel EEG matrices."""

from __future__ import annotations

import numpy as np

from orgsim.errors import InvalidArgument, ShapeError, UndefinedCorrelationError
from orgsim.neural.model import mae, mse
from orgsim.signal.eeg import pearson
from orgsim.signal.spectral import welch_psd


def _default_nperseg(n: int) -> int:
    seg = 256
    while seg > 8 and n < 2 * seg:
        seg //= 2
    return seg


def evaluate(pred, truth, rate_hz: float, nperseg: int | None = None) -> dict:
    """Error metrics, per-channel correlation and PSDs of the channel-averaged signals.

    Channels where either series is constant get ``r = nan`` and are left out
    of ``mean_r``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ShapeError(f"pred {pred.shape} and truth {truth.shape} must be equal channels x time")
    T = pred.shape[1]
    nperseg = _default_nperseg(T) if nperseg is None else nperseg
    if T < 2 * nperseg:
        raise InvalidArgument(f"{T} timesteps is too short for nperseg={nperseg}")
    r = np.full(pred.shape[0], np.nan)
    for ch in range(pred.shape[0]):
        try:
            r[ch] = pearson(pred[ch], truth[ch])
        except UndefinedCorrelationError:
            pass
    defined = r[np.isfinite(r)]
    avg_pred = pred.mean(axis=0)
    avg_true = truth.mean(axis=0)
    return {
        "mse": mse(pred, truth),
        "mae": mae(pred, truth),
        "per_channel_r": r,
        "mean_r": float(defined.mean()) if defined.size else float("nan"),
        "pred_psd": welch_psd(avg_pred, rate_hz, nperseg),
        "true_psd": welch_psd(avg_true, rate_hz, nperseg),
        "avg_pred": avg_pred,
        "avg_true": avg_true,
    }
