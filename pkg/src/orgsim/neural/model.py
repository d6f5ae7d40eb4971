"""Bidirectional LSTM regressor with hand-written backpropagation through time.

Layer stack: ``n_lstm_layers`` BiLSTM blocks (all but the last return full
sequences), one ReLU dense layer with an L2 penalty, and a linear output.
Gate order inside every ``W``/``U``/``b`` block is input, forget, cell, output.

The batched engine runs both directions at once: arrays carry a leading
axis of size 2 (0 = forward, 1 = backward), and the backward stream sees the
time-reversed sequence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from orgsim.errors import ConfigError, NumericError, ShapeError

N_CHANNELS = 47
DIRECTIONS = ("fwd", "bwd")


def sigmoid(z):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class ModelConfig:
    n_mfcc: int = 20
    window_len: int = 16
    units: int = 64
    n_lstm_layers: int = 2
    dense_units: int = 64
    n_outputs: int = N_CHANNELS
    dropout: float = 0.2
    recurrent_dropout: float = 0.2
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("n_mfcc", "window_len", "units", "n_lstm_layers", "dense_units", "n_outputs"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("dropout", "recurrent_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})

    def replace(self, **changes) -> "ModelConfig":
        return ModelConfig(**{**self.as_dict(), **changes})


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ModelConfig) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x4C53]))
    H = cfg.units
    params = {}
    in_dim = cfg.n_mfcc
    for layer in range(cfg.n_lstm_layers):
        for d in DIRECTIONS:
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0
            params[f"lstm{layer}.{d}.W"] = _glorot(rng, (4 * H, in_dim))
            params[f"lstm{layer}.{d}.U"] = _glorot(rng, (4 * H, H))
            params[f"lstm{layer}.{d}.b"] = b
        in_dim = 2 * H
    params["dense0.W"] = _glorot(rng, (cfg.dense_units, in_dim))
    params["dense0.b"] = np.zeros(cfg.dense_units)
    params["out.W"] = _glorot(rng, (cfg.n_outputs, cfg.dense_units))
    params["out.b"] = np.zeros(cfg.n_outputs)
    return params


class BiLSTMModel:
    """Parameters plus the non-trainable input standardization buffers."""

    def __init__(self, config: ModelConfig | None = None, params: dict | None = None,
                 buffers: dict | None = None):
        self.config = config or ModelConfig()
        self.params = init_params(self.config) if params is None else dict(params)
        self.buffers = buffers if buffers is not None else {
            "norm.mean": np.zeros(self.config.n_mfcc),
            "norm.std": np.ones(self.config.n_mfcc),
        }
        expected = init_params_shapes(self.config)
        for name, shape in expected.items():
            if name not in self.params:
                raise ConfigError(f"missing parameter block {name}")
            if self.params[name].shape != shape:
                raise ShapeError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    def copy(self) -> "BiLSTMModel":
        return BiLSTMModel(self.config, {k: v.copy() for k, v in self.params.items()},
                           {k: v.copy() for k, v in self.buffers.items()})

    def set_normalization(self, mean, std) -> None:
        mean = np.asarray(mean, dtype=np.float64).reshape(self.config.n_mfcc)
        std = np.asarray(std, dtype=np.float64).reshape(self.config.n_mfcc)
        if np.any(std <= 0) or not np.all(np.isfinite(mean)):
            raise NumericError("normalization std must be positive and stats finite")
        self.buffers = {"norm.mean": mean.copy(), "norm.std": std.copy()}

    def predict(self, windows, training: bool = False, rng=None, masks=None) -> np.ndarray:
        return _forward(self, _check_batch(self, windows), training, rng, masks)[0]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


def init_params_shapes(cfg: ModelConfig) -> dict:
    H = cfg.units
    shapes = {}
    in_dim = cfg.n_mfcc
    for layer in range(cfg.n_lstm_layers):
        for d in DIRECTIONS:
            shapes[f"lstm{layer}.{d}.W"] = (4 * H, in_dim)
            shapes[f"lstm{layer}.{d}.U"] = (4 * H, H)
            shapes[f"lstm{layer}.{d}.b"] = (4 * H,)
        in_dim = 2 * H
    shapes["dense0.W"] = (cfg.dense_units, in_dim)
    shapes["dense0.b"] = (cfg.dense_units,)
    shapes["out.W"] = (cfg.n_outputs, cfg.dense_units)
    shapes["out.b"] = (cfg.n_outputs,)
    return shapes


# -- reference single-sequence path -------------------------------------------------

def lstm_cell_forward(x_t, h_prev, c_prev, params):
    """One LSTM step for a single sample; ``params = (W, U, b)``."""
    W, U, b = (np.asarray(p, dtype=np.float64) for p in params)
    x_t, h_prev, c_prev = (np.asarray(v, dtype=np.float64) for v in (x_t, h_prev, c_prev))
    H = U.shape[1]
    if W.shape != (4 * H, x_t.shape[-1]) or U.shape != (4 * H, H) or b.shape != (4 * H,):
        raise ShapeError(f"inconsistent LSTM shapes W{W.shape} U{U.shape} b{b.shape} x{x_t.shape}")
    if h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(f"state shapes {h_prev.shape}/{c_prev.shape}, expected ({H},)")
    z = W @ x_t + U @ h_prev + b
    i, f, g, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sigmoid(z[3 * H:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def bilstm_forward(seq, fwd, bwd, return_sequences: bool = True):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ShapeError(f"sequence must be (window_len >= 1, input_dim), got {seq.shape}")
    H = np.asarray(fwd[1]).shape[1]

    def run(params, order):
        h, c = np.zeros(H), np.zeros(H)
        out = {}
        for t in order:
            h, c = lstm_cell_forward(seq[t], h, c, params)
            out[t] = h
        return out, h

    T = seq.shape[0]
    hf, last_f = run(fwd, range(T))
    hb, last_b = run(bwd, range(T - 1, -1, -1))
    if return_sequences:
        return np.stack([np.concatenate([hf[t], hb[t]]) for t in range(T)])
    return np.concatenate([last_f, last_b])


# -- batched engine -------------------------------------------------------------------

def _check_batch(model: BiLSTMModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    cfg = model.config
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (cfg.window_len, cfg.n_mfcc):
        raise ShapeError(f"windows must be (batch, {cfg.window_len}, {cfg.n_mfcc}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericError("input window contains non-finite values")
    return X


def draw_masks(cfg: ModelConfig, batch: int, rng) -> list:
    """Per-sequence inverted-dropout masks ``[(input, recurrent), ...]``, one pair per layer.

    Each mask has a leading direction axis and stays constant over time.
    """
    B = batch
    in_dims = [cfg.n_mfcc] + [2 * cfg.units] * (cfg.n_lstm_layers - 1)
    masks = []
    for in_dim in in_dims:
        mx = mh = None
        if cfg.dropout > 0:
            keep = 1.0 - cfg.dropout
            mx = (rng.random((2, B, in_dim)) < keep) / keep
        if cfg.recurrent_dropout > 0:
            keep = 1.0 - cfg.recurrent_dropout
            mh = (rng.random((2, B, cfg.units)) < keep) / keep
        masks.append((mx, mh))
    return masks


def _stack(model, layer, kind):
    return np.stack([model.params[f"lstm{layer}.{d}.{kind}"] for d in DIRECTIONS])


def _lstm_layer_forward(Xs, W, U, b, mx, mh):
    """Xs: (2, B, T, in) in processing order. Returns hidden states and a cache."""
    _, B, T, _ = Xs.shape
    H = U.shape[2]
    Xm = Xs * mx[:, :, None, :] if mx is not None else Xs
    Z = np.matmul(Xm.reshape(2, B * T, -1), W.transpose(0, 2, 1)).reshape(2, B, T, 4 * H)
    Z += b[:, None, None, :]
    Ut = U.transpose(0, 2, 1)
    gates = np.empty((2, B, T, 4 * H))
    cs = np.empty((2, B, T + 1, H))
    hs = np.empty((2, B, T, H))
    hm_prev = np.zeros((2, B, T, H))
    cs[:, :, 0] = 0.0
    h = np.zeros((2, B, H))
    for t in range(T):
        hm = h * mh if mh is not None else h
        hm_prev[:, :, t] = hm
        z = Z[:, :, t] + np.matmul(hm, Ut)
        gt = gates[:, :, t]
        gt[..., :2 * H] = sigmoid(z[..., :2 * H])
        gt[..., 2 * H:3 * H] = np.tanh(z[..., 2 * H:3 * H])
        gt[..., 3 * H:] = sigmoid(z[..., 3 * H:])
        c = gt[..., H:2 * H] * cs[:, :, t] + gt[..., :H] * gt[..., 2 * H:3 * H]
        cs[:, :, t + 1] = c
        h = gt[..., 3 * H:] * np.tanh(c)
        hs[:, :, t] = h
    return hs, (Xm, gates, cs, hm_prev, mx, mh)


def _lstm_layer_backward(dHs, W, U, cache):
    """dHs: (2, B, T, H) gradient w.r.t. hidden states in processing order."""
    Xm, gates, cs, hm_prev, mx, mh = cache
    _, B, T, H = dHs.shape
    dZ = np.empty((2, B, T, 4 * H))
    dh_next = np.zeros((2, B, H))
    dc_next = np.zeros((2, B, H))
    for t in range(T - 1, -1, -1):
        gt = gates[:, :, t]
        i, f, g, o = gt[..., :H], gt[..., H:2 * H], gt[..., 2 * H:3 * H], gt[..., 3 * H:]
        tc = np.tanh(cs[:, :, t + 1])
        dh = dHs[:, :, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[:, :, t]
        dz[..., :H] = dc * g * i * (1.0 - i)
        dz[..., H:2 * H] = dc * cs[:, :, t] * f * (1.0 - f)
        dz[..., 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[..., 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dhm = np.matmul(dz, U)
        dh_next = dhm * mh if mh is not None else dhm
    flatZ = dZ.reshape(2, B * T, 4 * H)
    dW = np.matmul(flatZ.transpose(0, 2, 1), Xm.reshape(2, B * T, -1))
    dU = np.matmul(flatZ.transpose(0, 2, 1), hm_prev.reshape(2, B * T, H))
    db = flatZ.sum(axis=1)
    dXs = np.matmul(flatZ, W).reshape(2, B, T, -1)
    if mx is not None:
        dXs *= mx[:, :, None, :]
    return dXs, dW, dU, db


def _forward(model: BiLSTMModel, X, training: bool, rng, masks=None):
    cfg = model.config
    Xn = (X - model.buffers["norm.mean"]) / model.buffers["norm.std"]
    if not training:
        masks = [(None, None)] * cfg.n_lstm_layers
    elif masks is not None:
        if len(masks) != cfg.n_lstm_layers:
            raise ShapeError(f"need {cfg.n_lstm_layers} mask pairs, got {len(masks)}")
    elif cfg.dropout > 0 or cfg.recurrent_dropout > 0:
        if rng is None:
            raise ConfigError("training with dropout needs an rng")
        masks = draw_masks(cfg, X.shape[0], rng)
    else:
        masks = [(None, None)] * cfg.n_lstm_layers
    caches = []
    seq = Xn
    for layer in range(cfg.n_lstm_layers):
        Xs = np.stack([seq, seq[:, ::-1]])
        hs, cache = _lstm_layer_forward(Xs, _stack(model, layer, "W"), _stack(model, layer, "U"),
                                        _stack(model, layer, "b"), *masks[layer])
        caches.append(cache)
        if layer < cfg.n_lstm_layers - 1:
            seq = np.concatenate([hs[0], hs[1][:, ::-1]], axis=-1)
        else:
            feat = np.concatenate([hs[0][:, -1], hs[1][:, -1]], axis=-1)
    z1 = feat @ model.params["dense0.W"].T + model.params["dense0.b"]
    a1 = np.maximum(z1, 0.0)
    y = a1 @ model.params["out.W"].T + model.params["out.b"]
    return y, (caches, feat, z1, a1)


def model_forward(model: BiLSTMModel, window, training: bool = False, rng=None) -> np.ndarray:
    """Predict the output vector for one ``window_len x n_mfcc`` window."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ShapeError(f"expected one 2-D window, got shape {window.shape}")
    return model.predict(window[None], training, rng)[0]


def mse(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mae(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def l2_penalty(model: BiLSTMModel) -> float:
    return float(model.config.l2 * np.sum(model.params["dense0.W"] ** 2))


def loss(model: BiLSTMModel, X, Y, training: bool = False, rng=None, masks=None) -> float:
    """MSE plus the dense-kernel L2 term."""
    pred = model.predict(X, training, rng, masks)
    return mse(pred, Y) + l2_penalty(model)


def backward(model: BiLSTMModel, X, Y, training: bool = False, rng=None, masks=None):
    """Return ``(loss, grads, pred)`` for one batch; loss includes the L2 term.

    With ``training`` set, dropout masks come from ``masks`` if given, else from ``rng``.
    """
    cfg = model.config
    X = _check_batch(model, X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (X.shape[0], cfg.n_outputs):
        raise ShapeError(f"targets must be ({X.shape[0]}, {cfg.n_outputs}), got {Y.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        value, grads, y = _backward(model, X, Y, training, rng, masks)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name}")
    return value, {name: grads[name] for name in model.params}, y


def _backward(model, X, Y, training, rng, masks):
    cfg = model.config
    y, (caches, feat, z1, a1) = _forward(model, X, training, rng, masks)
    P = model.params
    value = mse(y, Y) + l2_penalty(model)

    grads = {}
    dy = 2.0 * (y - Y) / y.size
    grads["out.W"] = dy.T @ a1
    grads["out.b"] = dy.sum(axis=0)
    dz1 = (dy @ P["out.W"]) * (z1 > 0)
    grads["dense0.W"] = dz1.T @ feat + 2.0 * cfg.l2 * P["dense0.W"]
    grads["dense0.b"] = dz1.sum(axis=0)
    dfeat = dz1 @ P["dense0.W"]

    H = cfg.units
    B, T = X.shape[0], cfg.window_len
    dHs = np.zeros((2, B, T, H))
    dHs[0, :, -1] = dfeat[:, :H]
    dHs[1, :, -1] = dfeat[:, H:]
    for layer in range(cfg.n_lstm_layers - 1, -1, -1):
        dXs, dW, dU, db = _lstm_layer_backward(dHs, _stack(model, layer, "W"),
                                               _stack(model, layer, "U"), caches[layer])
        for k, d in enumerate(DIRECTIONS):
            grads[f"lstm{layer}.{d}.W"] = dW[k]
            grads[f"lstm{layer}.{d}.U"] = dU[k]
            grads[f"lstm{layer}.{d}.b"] = db[k]
        if layer > 0:
            dseq = dXs[0] + dXs[1][:, ::-1]
            dHs = np.stack([dseq[..., :H], dseq[..., H:][:, ::-1]])
    return value, grads, y
