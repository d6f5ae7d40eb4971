"""Model and optimizer persistence in the PORG container (sections MODL and ADAM)."""

from __future__ import annotations

from orgsim import container
from orgsim.errors import FormatError
from orgsim.neural.model import BiLSTMModel, ModelConfig
from orgsim.neural.optim import AdamState, Schedule

_BUFFER_PREFIX = "buffer/"


def model_payload(model: BiLSTMModel) -> bytes:
    arrays = list(model.params.items())
    arrays += [(_BUFFER_PREFIX + k, v) for k, v in model.buffers.items()]
    return container.encode_payload(model.config.as_dict(), arrays)


def adam_payload(state: AdamState) -> bytes:
    cfg = {
        "t": state.t, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps,
        "lr0": state.schedule.lr0, "decay_rate": state.schedule.decay_rate,
        "decay_steps": state.schedule.decay_steps, "lr_scale": state.lr_scale,
        "min_lr": state.min_lr,
    }
    arrays = [(f"m/{k}", v) for k, v in state.m.items()] + [(f"v/{k}", v) for k, v in state.v.items()]
    return container.encode_payload(cfg, arrays)


def save_checkpoint(model: BiLSTMModel, state: AdamState | None, path) -> None:
    sections = [("MODL", model_payload(model))]
    if state is not None:
        sections.append(("ADAM", adam_payload(state)))
    container.write_container(path, sections)


def _model_from(payload: bytes) -> BiLSTMModel:
    cfg, arrays = container.decode_payload(payload)
    params = {k: v for k, v in arrays.items() if not k.startswith(_BUFFER_PREFIX)}
    buffers = {k[len(_BUFFER_PREFIX):]: v for k, v in arrays.items() if k.startswith(_BUFFER_PREFIX)}
    return BiLSTMModel(ModelConfig.from_dict(cfg), params, buffers or None)


def _adam_from(payload: bytes) -> AdamState:
    cfg, arrays = container.decode_payload(payload)
    return AdamState(
        m={k[2:]: v for k, v in arrays.items() if k.startswith("m/")},
        v={k[2:]: v for k, v in arrays.items() if k.startswith("v/")},
        t=cfg["t"], beta1=cfg["beta1"], beta2=cfg["beta2"], eps=cfg["eps"],
        schedule=Schedule(cfg["lr0"], cfg["decay_rate"], cfg["decay_steps"]),
        lr_scale=cfg["lr_scale"], min_lr=cfg["min_lr"],
    )


def load_checkpoint(path):
    """Return ``(model, state)``; ``state`` is None when no ADAM section is present."""
    model = state = None
    for tag, payload in container.read_container(path):
        if tag == "MODL":
            model = _model_from(payload)
        elif tag == "ADAM":
            state = _adam_from(payload)
    if model is None:
        raise FormatError(f"{path} has no MODL section")
    return model, state


def model_from_sections(sections) -> BiLSTMModel:
    for tag, payload in sections:
        if tag == "MODL":
            return _model_from(payload)
    raise FormatError("no MODL section")
