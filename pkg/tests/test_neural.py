import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bilstm_losses, fd_gradients, scalar_adam
from orgsim import container
from orgsim.errors import (
    ChecksumError,
    ConfigError,
    DataError,
    FormatError,
    MagicError,
    NumericError,
    ShapeError,
    TruncatedError,
    VersionError,
)
from orgsim.neural import (
    AdamState,
    BiLSTMModel,
    ModelConfig,
    Schedule,
    TrainConfig,
    adam_step,
    backward,
    bilstm_forward,
    draw_masks,
    grid_search,
    init_adam,
    l2_penalty,
    load_checkpoint,
    loss,
    lr_at,
    lstm_cell_forward,
    mae,
    model_forward,
    mse,
    save_checkpoint,
    train,
)
from orgsim.neural.model import sigmoid

TINY = dict(n_mfcc=2, window_len=4, units=3, dense_units=4)


def tiny(seed=0, **kw):
    return BiLSTMModel(ModelConfig(**{**TINY, **kw, "seed": seed}))


def linear_problem(n, cfg, seed=0):
    """Windows with a fixed linear target map; learnable by any reasonable model."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, cfg.window_len, cfg.n_mfcc))
    A = rng.normal(size=(cfg.window_len * cfg.n_mfcc, cfg.n_outputs)) / np.sqrt(cfg.window_len * cfg.n_mfcc)
    return X, X.reshape(n, -1) @ A


def as_batches(X, Y, size):
    return [(X[i:i + size], Y[i:i + size]) for i in range(0, len(X), size)]


class TestCell:
    def test_zero_weights(self):
        H, D = 4, 3
        h, c = lstm_cell_forward(np.ones(D), np.zeros(H), np.zeros(H),
                                 (np.zeros((4 * H, D)), np.zeros((4 * H, H)), np.zeros(4 * H)))
        assert np.all(h == 0) and np.all(c == 0)

    def test_scalar_hand_computation(self):
        W = np.array([[0.5], [-0.3], [0.8], [0.1]])
        U = np.array([[0.2], [0.4], [-0.6], [0.3]])
        b = np.array([0.1, 1.0, -0.2, 0.05])
        x, hp, cp = 0.7, -0.4, 0.9
        zi, zf, zg, zo = (W[k, 0] * x + U[k, 0] * hp + b[k] for k in range(4))
        i, f, o = (1 / (1 + np.exp(-z)) for z in (zi, zf, zo))
        g = np.tanh(zg)
        c_exp = f * cp + i * g
        h_exp = o * np.tanh(c_exp)
        h, c = lstm_cell_forward([x], [hp], [cp], (W, U, b))
        assert abs(h[0] - h_exp) <= 1e-12 and abs(c[0] - c_exp) <= 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_cell_growth_bounded(self, seed):
        rng = np.random.default_rng(seed)
        H, D = 5, 3
        params = (rng.normal(0, 3, (4 * H, D)), rng.normal(0, 3, (4 * H, H)), rng.normal(0, 3, 4 * H))
        c_prev = rng.normal(0, 5, H)
        _, c = lstm_cell_forward(rng.normal(size=D), rng.normal(size=H), c_prev, params)
        assert np.max(np.abs(c)) <= np.max(np.abs(c_prev)) + 1.0

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            lstm_cell_forward(np.ones(3), np.zeros(4), np.zeros(4),
                              (np.zeros((16, 2)), np.zeros((16, 4)), np.zeros(16)))

    def test_sigmoid_extremes(self):
        assert sigmoid(np.array([-1e4]))[0] == 0.0 and sigmoid(np.array([1e4]))[0] == 1.0


class TestBiLSTM:
    def _params(self, rng, D, H):
        return tuple(rng.normal(0, 0.5, s) for s in ((4 * H, D), (4 * H, H), (4 * H,)))

    def test_output_width(self):
        rng = np.random.default_rng(0)
        fwd, bwd = self._params(rng, 5, 64), self._params(rng, 5, 64)
        out = bilstm_forward(rng.normal(size=(7, 5)), fwd, bwd)
        assert out.shape == (7, 128)
        assert bilstm_forward(rng.normal(size=(7, 5)), fwd, bwd, return_sequences=False).shape == (128,)

    def test_time_reversal_swaps_halves(self):
        rng = np.random.default_rng(1)
        H = 4
        fwd, bwd = self._params(rng, 3, H), self._params(rng, 3, H)
        seq = rng.normal(size=(6, 3))
        a = bilstm_forward(seq, fwd, bwd)
        b = bilstm_forward(seq[::-1], bwd, fwd)
        np.testing.assert_allclose(a[:, :H], b[::-1, H:], rtol=0, atol=1e-15)
        np.testing.assert_allclose(a[:, H:], b[::-1, :H], rtol=0, atol=1e-15)

    def test_single_step(self):
        rng = np.random.default_rng(2)
        p = self._params(rng, 3, 4)
        out = bilstm_forward(rng.normal(size=(1, 3)), p, p)
        np.testing.assert_array_equal(out[0, :4], out[0, 4:])

    def test_empty_sequence(self):
        rng = np.random.default_rng(3)
        p = self._params(rng, 3, 2)
        with pytest.raises(ShapeError):
            bilstm_forward(np.zeros((0, 3)), p, p)

    @pytest.mark.parametrize("layers", [1, 2, 3])
    def test_batched_engine_matches_reference(self, layers):
        model = BiLSTMModel(ModelConfig(n_mfcc=3, window_len=5, units=4, n_lstm_layers=layers,
                                        dense_units=6, seed=layers))
        model.set_normalization(np.array([0.1, -0.2, 0.3]), np.array([1.5, 0.5, 2.0]))
        X = np.random.default_rng(4).normal(size=(3, 5, 3))
        P = model.params
        for b in range(3):
            seq = (X[b] - model.buffers["norm.mean"]) / model.buffers["norm.std"]
            for layer in range(layers):
                fwd = tuple(P[f"lstm{layer}.fwd.{k}"] for k in "WUb")
                bwd = tuple(P[f"lstm{layer}.bwd.{k}"] for k in "WUb")
                seq = bilstm_forward(seq, fwd, bwd, return_sequences=layer < layers - 1)
            a = np.maximum(P["dense0.W"] @ seq + P["dense0.b"], 0)
            expected = P["out.W"] @ a + P["out.b"]
            np.testing.assert_allclose(model_forward(model, X[b]), expected, rtol=0, atol=1e-13)


class TestModelForward:
    def test_deterministic_and_47_wide(self):
        model = BiLSTMModel(ModelConfig(units=8, dense_units=8))
        w = np.random.default_rng(0).normal(size=(16, 20))
        a, b = model_forward(model, w), model_forward(model, w)
        assert a.shape == (47,)
        np.testing.assert_array_equal(a, b)

    def test_no_dropout_training_equals_inference(self):
        model = tiny(dropout=0.0, recurrent_dropout=0.0)
        w = np.random.default_rng(1).normal(size=(4, 2))
        np.testing.assert_array_equal(model_forward(model, w, True, np.random.default_rng(0)),
                                      model_forward(model, w))

    def test_dropout_changes_training_output(self):
        model = tiny(dropout=0.5, recurrent_dropout=0.5)
        w = np.random.default_rng(1).normal(size=(4, 2))
        assert not np.array_equal(model_forward(model, w, True, np.random.default_rng(0)),
                                  model_forward(model, w))

    def test_non_finite_input(self):
        w = np.zeros((4, 2))
        w[1, 1] = np.nan
        with pytest.raises(NumericError):
            model_forward(tiny(), w)

    def test_wrong_shape(self):
        with pytest.raises(ShapeError):
            model_forward(tiny(), np.zeros((5, 2)))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ModelConfig(dropout=1.0)
        with pytest.raises(ConfigError):
            ModelConfig(units=0)


class TestLosses:
    def test_identity(self):
        y = np.random.default_rng(0).normal(size=(5, 47))
        assert mse(y, y) == 0 and mae(y, y) == 0

    def test_constant_offset(self):
        y = np.zeros((3, 4))
        assert mae(y + 0.5, y) == 0.5 and mse(y + 0.5, y) == 0.25

    def test_direct_sum_oracle(self):
        rng = np.random.default_rng(1)
        p, t = rng.normal(size=(6, 7)), rng.normal(size=(6, 7))
        sq = ab = 0.0
        for i in range(6):
            for j in range(7):
                sq += (p[i, j] - t[i, j]) ** 2
                ab += abs(p[i, j] - t[i, j])
        assert abs(mse(p, t) - sq / 42) <= 1e-12 and abs(mae(p, t) - ab / 42) <= 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.zeros(3), np.zeros(4))

    def test_l2_zero_is_plain_mse(self):
        model = tiny(l2=0.0)
        rng = np.random.default_rng(2)
        X, Y = rng.normal(size=(3, 4, 2)), rng.normal(size=(3, 47))
        assert abs(loss(model, X, Y) - mse(model.predict(X), Y)) <= 1e-12


class TestBackward:
    def test_zero_gradient_at_fit(self):
        model = tiny(l2=0.0)
        X = np.random.default_rng(0).normal(size=(2, 4, 2))
        _, grads, _ = backward(model, X, model.predict(X))
        assert max(np.max(np.abs(g)) for g in grads.values()) <= 1e-12

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("dropout", [0.0, 0.3])
    def test_finite_differences(self, seed, dropout):
        model = tiny(seed, dropout=dropout, recurrent_dropout=dropout, l2=0.05)
        rng = np.random.default_rng(seed)
        while True:
            X, Y = rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 47))
            masks = draw_masks(model.config, 2, rng)
            num, crossed = fd_gradients(model.params, X, Y, masks, model.config.l2, 2)
            if not crossed:
                break
        value, grads, _ = backward(model, X, Y, training=True, masks=masks)
        ref, _ = bilstm_losses({k: v[None] for k, v in model.params.items()}, X, Y, masks, 0.05, 2)
        assert abs(value - ref[0]) <= 1e-12
        for name, g in grads.items():
            rel = np.abs(g - num[name]) / np.maximum(np.maximum(np.abs(g), np.abs(num[name])), 1e-6)
            assert rel.max() <= 1e-4, name

    def test_l2_portion_linear_in_lambda(self):
        rng = np.random.default_rng(3)
        X, Y = rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 47))
        g = {lam: backward(tiny(1, l2=lam), X, Y)[1]["dense0.W"] for lam in (0.0, 0.1, 0.2)}
        np.testing.assert_allclose(g[0.2] - g[0.0], 2 * (g[0.1] - g[0.0]), rtol=0, atol=1e-14)
        W = tiny(1).params["dense0.W"]
        np.testing.assert_allclose(g[0.1] - g[0.0], 0.2 * W, rtol=0, atol=1e-14)

    def test_batch_order_invariance(self):
        model = tiny(2)
        rng = np.random.default_rng(4)
        X, Y = rng.normal(size=(6, 4, 2)), rng.normal(size=(6, 47))
        perm = rng.permutation(6)
        _, g1, _ = backward(model, X, Y)
        _, g2, _ = backward(model, X[perm], Y[perm])
        for name in g1:
            np.testing.assert_allclose(g1[name], g2[name], rtol=0, atol=1e-12)

    def test_non_finite_gradient_names_block(self):
        model = tiny(3)
        model.params["dense0.W"][:] = 1e200
        model.params["out.W"][:] = 1e200
        X = np.ones((2, 4, 2))
        with pytest.raises(NumericError, match="block"):
            backward(model, X, np.zeros((2, 47)))

    def test_target_shape(self):
        with pytest.raises(ShapeError):
            backward(tiny(), np.zeros((2, 4, 2)), np.zeros((2, 46)))


class TestAdam:
    def test_lr_at(self):
        s = Schedule(1e-3, 0.96, 1000)
        assert lr_at(s, 0) == 1e-3
        assert lr_at(s, 1000) == 1e-3 * 0.96
        lrs = [lr_at(s, k) for k in range(0, 5000, 37)]
        assert all(a > b for a, b in zip(lrs, lrs[1:]))
        assert lr_at(s, 500) == pytest.approx(1e-3 * 0.96 ** 0.5, rel=1e-15)

    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        new, st_ = adam_step(p, {"w": np.zeros(2)}, init_adam(p))
        np.testing.assert_array_equal(new["w"], p["w"])
        assert st_.t == 1

    def test_first_step_magnitude(self):
        p = {"w": np.array([0.5, 0.5])}
        new, _ = adam_step(p, {"w": np.array([3.0, -0.01])}, init_adam(p))
        step = np.abs(new["w"] - p["w"])
        np.testing.assert_allclose(step, 1e-3 * np.array([3.0, 0.01]) / (np.array([3.0, 0.01]) + 1e-8),
                                   rtol=1e-12)
        assert np.allclose(step, 1e-3, rtol=1e-5)

    def test_scalar_oracle(self):
        sched = Schedule(0.05, 0.5, 3)
        grads = [0.3, -1.2, 0.0, 2.5, 0.7, -0.1, 1e-3, 4.0, -2.0, 0.25]
        lr = lambda k: 0.05 * 0.5 ** (k / 3)  # noqa: E731
        p = {"x": np.array(1.5)}
        state = init_adam(p, sched)
        for k, g in enumerate(grads):
            p, state = adam_step(p, {"x": np.array(g)}, state)
            assert abs(float(p["x"]) - scalar_adam(1.5, grads[:k + 1], lr)) <= 1e-12
        assert state.t == 10

    def test_inputs_not_mutated(self):
        p = {"w": np.ones(3)}
        state = init_adam(p)
        adam_step(p, {"w": np.ones(3)}, state)
        np.testing.assert_array_equal(p["w"], 1.0)
        np.testing.assert_array_equal(state.m["w"], 0.0)

    def test_shape_mismatch(self):
        p = {"w": np.ones(3)}
        with pytest.raises(ShapeError):
            adam_step(p, {"w": np.ones(4)}, init_adam(p))
        with pytest.raises(ShapeError):
            adam_step(p, {"v": np.ones(3)}, init_adam(p))

    def test_min_lr_floor_after_reduction(self):
        state = AdamState(schedule=Schedule(1e-3), min_lr=1e-4)
        assert state.current_lr() == 1e-3
        assert state.reduced(0.01).current_lr() == 1e-4


def _tiny_problem(seed=0, n=64):
    cfg = ModelConfig(**TINY, n_outputs=47, dropout=0.0, recurrent_dropout=0.0, l2=0.0, seed=seed)
    X, Y = linear_problem(n, cfg, seed)
    return cfg, as_batches(X[:48], Y[:48], 16), as_batches(X[48:], Y[48:], 16)


class TestTrain:
    def test_loss_decreases(self):
        cfg, tr, va = _tiny_problem()
        _, hist = train(BiLSTMModel(cfg), tr, va, TrainConfig(max_epochs=10, lr0=1e-2))
        assert hist.train_loss[-1] < hist.train_loss[0]
        assert len(hist) == 10 and len(hist.lr) == 10

    @pytest.mark.parametrize("patience", [1, 2, 4])
    def test_frozen_plateau_stops_after_patience(self, patience):
        cfg, tr, va = _tiny_problem()
        _, hist = train(BiLSTMModel(cfg), tr, va,
                        TrainConfig(max_epochs=30, lr0=0.0, early_stop_patience=patience,
                                    lr_reduce_patience=patience + 1))
        assert len(hist) == 1 + patience and hist.stopped_early
        assert hist.best_epoch == 1

    def test_best_weights_restored(self):
        cfg, tr, va = _tiny_problem(1)
        best, hist = train(BiLSTMModel(cfg), tr, va, TrainConfig(max_epochs=12, lr0=0.05))
        X = np.concatenate([b[0] for b in va])
        Y = np.concatenate([b[1] for b in va])
        assert mse(best.predict(X), Y) == pytest.approx(min(hist.val_loss), rel=1e-12)
        assert hist.val_loss[hist.best_epoch - 1] == min(hist.val_loss)

    def test_lr_reduced_on_plateau(self):
        cfg, tr, va = _tiny_problem()
        _, hist = train(BiLSTMModel(cfg), tr, va,
                        TrainConfig(max_epochs=8, lr0=1e-9, decay_rate=1.0, min_delta=1e9,
                                    lr_reduce_patience=2, early_stop_patience=7, min_lr=0.0))
        # epoch 1 improves on +inf; later epochs never beat it by min_delta, so every
        # second stale epoch halves the rate used from the following epoch on
        expected = [1e-9, 1e-9, 1e-9, 5e-10, 5e-10, 2.5e-10, 2.5e-10, 1.25e-10]
        assert hist.lr == pytest.approx(expected, rel=1e-12, abs=0)

    def test_input_model_untouched(self):
        cfg, tr, va = _tiny_problem()
        model = BiLSTMModel(cfg)
        before = {k: v.copy() for k, v in model.params.items()}
        train(model, tr, va, TrainConfig(max_epochs=2))
        for k in before:
            np.testing.assert_array_equal(model.params[k], before[k])

    def test_checkpoint_written_on_improvement(self, tmp_path):
        cfg, tr, va = _tiny_problem()
        path = tmp_path / "ck.porg"
        best, _ = train(BiLSTMModel(cfg), tr, va, TrainConfig(max_epochs=3, checkpoint_path=str(path)))
        loaded, state = load_checkpoint(path)
        for k in best.params:
            np.testing.assert_array_equal(loaded.params[k], best.params[k])
        assert state is not None and state.t > 0

    def test_mismatched_batch(self):
        cfg, tr, va = _tiny_problem()
        bad = [(np.zeros((2, 4, 3)), np.zeros((2, 47)))]
        with pytest.raises(DataError):
            train(BiLSTMModel(cfg), bad, va, TrainConfig(max_epochs=1))
        with pytest.raises(DataError):
            train(BiLSTMModel(cfg), [(np.zeros((2, 4, 2)), np.zeros((3, 47)))], va, TrainConfig(max_epochs=1))

    def test_empty_generator(self):
        cfg, tr, va = _tiny_problem()
        with pytest.raises(DataError):
            train(BiLSTMModel(cfg), [], va, TrainConfig(max_epochs=1))

    def test_reproducible(self):
        cfg, tr, va = _tiny_problem()
        cfg = cfg.replace(dropout=0.2, recurrent_dropout=0.2)
        a, ha = train(BiLSTMModel(cfg), tr, va, TrainConfig(max_epochs=3, seed=5))
        b, hb = train(BiLSTMModel(cfg), tr, va, TrainConfig(max_epochs=3, seed=5))
        assert ha.val_loss == hb.val_loss
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_reduce_factor=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(early_stop_patience=0)


class TestGridSearch:
    def test_singleton(self):
        cfg, tr, va = _tiny_problem()
        best, losses = grid_search([{"lr0": 1e-3}], 1, (tr, va), cfg)
        assert best == {"lr0": 1e-3} and len(losses) == 1

    def test_divergent_lr_loses(self):
        cfg, tr, va = _tiny_problem(2)
        best, losses = grid_search([{"lr0": 1e1}, {"lr0": 1e-3}], 3, (tr, va), cfg)
        assert best == {"lr0": 1e-3} and len(losses) == 2
        assert losses[1] < losses[0]

    def test_tie_goes_to_first(self):
        cfg, tr, va = _tiny_problem()
        best, losses = grid_search([{"lr0": 1e-3, "seed": 1}, {"lr0": 1e-3, "seed": 1}], 1, (tr, va), cfg)
        assert losses[0] == losses[1] and best == {"lr0": 1e-3, "seed": 1}

    def test_error_carries_index(self):
        cfg, tr, va = _tiny_problem()
        with pytest.raises(ConfigError, match="grid config 1"):
            grid_search([{"lr0": 1e-3}, {"no_such_knob": 1}], 1, (tr, va), cfg)

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            grid_search([], 1, ([], []))


class TestCheckpoint:
    def _trained(self, tmp_path):
        cfg, tr, va = _tiny_problem()
        model = BiLSTMModel(cfg.replace(dropout=0.1))
        model.set_normalization(np.array([0.5, -1.0]), np.array([2.0, 0.25]))
        best, hist = train(model, tr, va, TrainConfig(max_epochs=2))
        path = tmp_path / "model.porg"
        save_checkpoint(best, hist.state, path)
        return best, hist.state, path

    def test_round_trip_bitwise(self, tmp_path):
        model, state, path = self._trained(tmp_path)
        loaded, lstate = load_checkpoint(path)
        assert loaded.config == model.config
        for k in model.params:
            assert loaded.params[k].tobytes() == model.params[k].tobytes()
        X = np.random.default_rng(0).normal(size=(5, 4, 2))
        assert loaded.predict(X).tobytes() == model.predict(X).tobytes()
        assert lstate.t == state.t and lstate.schedule == state.schedule
        for k in state.m:
            assert lstate.m[k].tobytes() == state.m[k].tobytes()
            assert lstate.v[k].tobytes() == state.v[k].tobytes()
        np.testing.assert_array_equal(loaded.buffers["norm.std"], [2.0, 0.25])

    def test_without_optimizer_state(self, tmp_path):
        save_checkpoint(tiny(), None, tmp_path / "m.porg")
        assert load_checkpoint(tmp_path / "m.porg")[1] is None

    def test_bad_magic(self, tmp_path):
        _, _, path = self._trained(tmp_path)
        data = bytearray(path.read_bytes())
        data[0:4] = b"XORG"
        path.write_bytes(bytes(data))
        with pytest.raises(MagicError):
            load_checkpoint(path)

    def test_flipped_byte(self, tmp_path):
        _, _, path = self._trained(tmp_path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        _, _, path = self._trained(tmp_path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(TruncatedError):
            load_checkpoint(path)

    def test_version(self, tmp_path):
        _, _, path = self._trained(tmp_path)
        body = bytearray(path.read_bytes()[:-4])
        body[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))
        with pytest.raises(VersionError):
            load_checkpoint(path)

    def test_unknown_sections_ignored(self, tmp_path):
        model = tiny()
        from orgsim.neural.checkpoint import model_payload
        path = tmp_path / "mixed.porg"
        container.write_container(path, [("ICA0", b"opaque"), ("MODL", model_payload(model))])
        loaded, state = load_checkpoint(path)
        assert state is None and loaded.config == model.config

    def test_missing_model_section(self, tmp_path):
        path = tmp_path / "empty.porg"
        container.write_container(path, [])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_32_bit_arrays_rejected(self):
        with pytest.raises(FormatError):
            container.encode_arrays({"w": np.zeros(3, dtype=np.float32)})

    def test_l2_penalty_recorded(self, tmp_path):
        model = tiny(l2=0.25)
        save_checkpoint(model, None, tmp_path / "m.porg")
        loaded, _ = load_checkpoint(tmp_path / "m.porg")
        assert loaded.config.l2 == 0.25 and l2_penalty(loaded) == l2_penalty(model)
