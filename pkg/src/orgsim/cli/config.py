"""INI-style run configuration: typed defaults, strict keys, echo for provenance."""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from orgsim.errors import ConfigError

DEFAULTS = {
    "run": {"seed": 0},
    "synth": {
        "duration_s": 20.0, "rate_hz": 128.0, "rank": 4, "noise_sigma": 0.05, "osc_amp": 0.1,
        "osc_hz": 10.0, "tau_frames": 4.0, "audio_rate_hz": 8000,
    },
    "mfcc": {
        "frame_len": 0, "hop": 0, "n_fft": 0, "n_mels": 40, "n_mfcc": 20, "fmin_hz": 0.0,
        "fmax_hz": 0.0, "floor": 1e-10, "frame_ms": 25.0, "hop_ms": 10.0,
    },
    "filter": {"enabled": True, "low_hz": 1.0, "high_hz": 40.0, "n_taps": 129},
    "ica": {
        "enabled": True, "n_components": 0, "remove": "", "auto_kurtosis": False,
        "kurtosis_threshold": 5.0, "tol": 1e-6, "max_iter": 500,
    },
    "model": {
        "window_len": 16, "units": 64, "n_lstm_layers": 2, "dense_units": 64, "dropout": 0.2,
        "recurrent_dropout": 0.2, "l2": 1e-4,
    },
    "train": {
        "batch_size": 32, "max_epochs": 30, "early_stop_patience": 5, "lr_reduce_factor": 0.5,
        "lr_reduce_patience": 3, "min_lr": 1e-6, "min_delta": 0.0, "lr0": 1e-3, "decay_rate": 0.96,
        "decay_steps": 1000, "val_frac": 0.2,
    },
}

SEED_ENV = "ORGSIM_SEED"


def _parse(section: str, key: str, text: str):
    default = DEFAULTS[section][key]
    text = text.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {text!r} as {type(default).__name__}") from None
    return text


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def load_config(path=None, seed=None) -> dict:
    """Defaults overlaid with ``path``; seed precedence is flag, file, ``ORGSIM_SEED``, 0."""
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    file_seed = False
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                           inline_comment_prefixes=("#",), default_section="\x00")
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, text in parser.items(section):
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                cfg[section][key] = _parse(section, key, text)
                file_seed |= (section, key) == ("run", "seed")
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    elif not file_seed and os.environ.get(SEED_ENV, "").strip():
        cfg["run"]["seed"] = _parse("run", "seed", os.environ[SEED_ENV])
    return cfg


def render_config(cfg: dict) -> str:
    lines = []
    for section, vals in cfg.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in vals.items())
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: dict, path) -> Path:
    path = Path(path)
    path.write_text(render_config(cfg), encoding="utf-8")
    return path
