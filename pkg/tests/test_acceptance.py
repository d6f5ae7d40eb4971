"""The thirteen acceptance checks, each reporting one PASS/FAIL line."""

import time

import numpy as np
import pytest

from oracles import bilstm_losses, fd_gradients, mfcc_oracle, naive_dft, pearson_oracle, scalar_adam
from orgsim.errors import ChecksumError, ConvergenceError, MagicError
from orgsim.ica import fastica, jacobi_eigh
from orgsim.neural import (
    BiLSTMModel,
    ModelConfig,
    Schedule,
    TrainConfig,
    adam_step,
    backward,
    draw_masks,
    init_adam,
    load_checkpoint,
    lr_at,
    model_forward,
    save_checkpoint,
    train,
)
from orgsim.pianoid import (
    BatchGenerator,
    build_audio_env,
    build_pianoid,
    evaluate,
    run_simulation,
    split_indices,
    synth_dataset,
)
from orgsim.signal import AudioBuffer, MFCCConfig, design_bandpass, fft, mfcc, pearson, read_wav, welch_psd
from orgsim.simcore import (
    BehaviorModule,
    Box,
    GradientEnvironment,
    Parallel,
    Priority,
    Sequential,
    Stochastic,
    StochasticEnvironment,
    create_organoid,
    run,
    step,
)


def test_01_fft_matches_naive_dft(criterion):
    rng = np.random.default_rng(1)
    err = elapsed = 0.0
    for _ in range(100):
        x = rng.normal(size=256) + 1j * rng.normal(size=256)
        start = time.perf_counter()
        got = fft(x)
        elapsed += time.perf_counter() - start
        err = max(err, float(np.max(np.abs(got - naive_dft(x)))))
    criterion(1, err <= 1e-9 and elapsed < 1.0, f"FFT max abs err {err:.2e} (<= 1e-9), {elapsed:.2f} s (< 1 s)")


def test_02_mfcc_matches_oracle(criterion):
    rng = np.random.default_rng(2)
    sr = 8000
    cfg = MFCCConfig().resolve(sr)
    err = elapsed = 0.0
    for _ in range(10):
        x = rng.uniform(-1, 1, sr) * np.linspace(0.1, 1.0, sr)
        start = time.perf_counter()
        got = mfcc(AudioBuffer(x, sr)).coeffs
        elapsed += time.perf_counter() - start
        want = mfcc_oracle(x, sr, cfg.frame_len, cfg.hop, cfg.n_fft, cfg.n_mels, cfg.n_mfcc,
                           cfg.fmin_hz, cfg.fmax_hz, cfg.floor)
        err = max(err, float(np.max(np.abs(got - want))))
    criterion(2, err <= 1e-6 and elapsed < 5.0, f"MFCC max abs err {err:.2e} (<= 1e-6), {elapsed:.2f} s (< 5 s)")


def test_03_fir_design(criterion):
    start = time.perf_counter()
    f = design_bandpass(1.0, 40.0, 129, 128.0)
    h0, h20 = abs(f.response(0.0)[0]), abs(f.response(20.0)[0])
    symmetric = bool(np.array_equal(f.taps, f.taps[::-1]))
    elapsed = time.perf_counter() - start
    ok = h0 <= 0.01 and 0.95 <= h20 <= 1.05 and symmetric and elapsed < 1.0
    criterion(3, ok, f"|H(0)| {h0:.2e}, |H(20)| {h20:.4f}, symmetric {symmetric}, {elapsed:.3f} s")


def test_04_jacobi_eigensolver(criterion):
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    resid = ortho = 0.0
    for _ in range(50):
        b = rng.normal(size=(8, 8))
        a = (b + b.T) / 2
        w, v = jacobi_eigh(a)
        resid = max(resid, float(np.max(np.linalg.norm(a @ v - v * w, axis=0))))
        ortho = max(ortho, float(np.max(np.abs(v.T @ v - np.eye(8)))))
    elapsed = time.perf_counter() - start
    ok = resid <= 1e-10 and ortho <= 1e-10 and elapsed < 1.0
    criterion(4, ok, f"max residual {resid:.2e}, max |VtV - I| {ortho:.2e}, {elapsed:.2f} s")


def test_05_fastica_planted_mixture(criterion):
    t = np.linspace(0, 2, 2000)
    sources = np.vstack([np.sin(2 * np.pi * 5 * t), np.sign(np.sin(2 * np.pi * 9 * t))])
    start = time.perf_counter()
    converged, worst = 0, 1.0
    for seed in range(20):
        mixing = np.random.default_rng(seed).uniform(0.2, 1.0, (2, 2)) + np.eye(2)
        x = mixing @ sources
        try:
            model = fastica(x, seed=seed)
        except ConvergenceError:
            continue
        converged += 1
        rec = model.sources(x)
        worst = min(worst, min(max(abs(pearson(r, s)) for r in rec) for s in sources))
    elapsed = time.perf_counter() - start
    ok = converged >= 18 and worst >= 0.95 and elapsed < 10.0
    criterion(5, ok, f"{converged}/20 converged, worst per-source |r| {worst:.4f}, {elapsed:.2f} s")


def test_06_bptt_gradient_check(criterion):
    start = time.perf_counter()
    worst = 0.0
    redraws = 0
    for seed in range(100):
        drop = 0.2 if seed % 2 else 0.0
        model = BiLSTMModel(ModelConfig(n_mfcc=2, window_len=4, units=3, dense_units=4, dropout=drop,
                                        recurrent_dropout=drop, l2=0.05, seed=seed))
        rng = np.random.default_rng(seed)
        while True:
            X, Y = rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 47))
            masks = draw_masks(model.config, 2, rng)
            num, crossed = fd_gradients(model.params, X, Y, masks, 0.05, 2)
            if not crossed:
                break
            redraws += 1
        value, grads, _ = backward(model, X, Y, training=True, masks=masks)
        ref, _ = bilstm_losses({k: v[None] for k, v in model.params.items()}, X, Y, masks, 0.05, 2)
        assert abs(value - ref[0]) <= 1e-12
        for name, g in grads.items():
            rel = np.abs(g - num[name]) / np.maximum(np.maximum(np.abs(g), np.abs(num[name])), 1e-6)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    criterion(6, worst <= 1e-4 and elapsed < 60.0,
              f"100 models, max rel err {worst:.2e} (<= 1e-4), {redraws} kink redraws, {elapsed:.1f} s")


def test_07_adam_and_schedule(criterion):
    sched = Schedule(0.01, 0.9, 4)
    grads = [0.5, -1.5, 0.25, 3.0, 0.0, -0.75, 2.0, 1e-4, -3.0, 0.6]
    p = {"x": np.array(-0.4)}
    state = init_adam(p, sched)
    err = 0.0
    for k, g in enumerate(grads):
        p, state = adam_step(p, {"x": np.array(g)}, state)
        ref = scalar_adam(-0.4, grads[:k + 1], lambda s: 0.01 * 0.9 ** (s / 4))
        err = max(err, abs(float(p["x"]) - ref))
    exact = all(lr_at(Schedule(lr0, rate, n), n) == lr0 * rate
                for lr0, rate, n in [(1e-3, 0.96, 1000), (0.01, 0.9, 4), (0.3, 0.5, 7)])
    criterion(7, err <= 1e-12 and exact, f"max |adam - scalar oracle| {err:.2e} over 10 steps, "
              f"lr_at(decay_steps) exact {exact}")


@pytest.mark.slow
def test_08_toy_training(criterion, tmp_path):
    start = time.perf_counter()
    res = synth_dataset(1, 120.0, path=tmp_path)
    store = res.store
    tr, va = split_indices(len(store))
    model = BiLSTMModel(ModelConfig(dropout=0.0, recurrent_dropout=0.0))
    model.set_normalization(*store.feature_stats(tr))
    cfg = TrainConfig(max_epochs=30)
    best, hist = train(model, BatchGenerator(store, cfg.batch_size, 0, tr),
                       BatchGenerator(store, 256, 0, va, shuffle=False), cfg)
    X, Y = store.read(va)
    P = best.predict(X)
    r = float(np.mean([pearson(P[:, c], Y[:, c]) for c in range(Y.shape[1])]))
    elapsed = time.perf_counter() - start
    first, final = hist.val_loss[0], hist.val_loss[-1]
    ok = final <= 0.5 * first and r >= 0.5 and elapsed < 600.0
    criterion(8, ok, f"val MSE epoch 1 {first:.4f} -> final {final:.4f} (ratio {final / first:.3f}, <= 0.5), "
              f"held-out mean r {r:.3f} (>= 0.5), {len(hist)} epochs, {elapsed:.0f} s")


def test_09_checkpoint_round_trip(criterion, tmp_path):
    model = BiLSTMModel(ModelConfig(units=8, dense_units=8, seed=9))
    rng = np.random.default_rng(9)
    model.set_normalization(rng.normal(size=20), rng.uniform(0.5, 2.0, 20))
    p = dict(model.params)
    p, state = adam_step(p, {k: rng.normal(size=v.shape) for k, v in p.items()}, init_adam(p))
    model.params = p
    path = tmp_path / "model.porg"
    save_checkpoint(model, state, path)
    back, back_state = load_checkpoint(path)
    X = rng.normal(size=(5, 16, 20))
    identical = bool(np.array_equal(back.predict(X), model.predict(X))) and back_state.t == state.t

    raw = bytearray(path.read_bytes())
    errors = {}
    for name, offset, exc in (("magic", 0, MagicError), ("crc", len(raw) // 2, ChecksumError)):
        bad = bytearray(raw)
        bad[offset] ^= 0xFF
        (tmp_path / name).write_bytes(bytes(bad))
        try:
            load_checkpoint(tmp_path / name)
            errors[name] = "accepted"
        except exc:
            errors[name] = exc.__name__
        except Exception as other:  # noqa: BLE001
            errors[name] = f"wrong {type(other).__name__}"
    ok = identical and errors == {"magic": "MagicError", "crc": "ChecksumError"}
    criterion(9, ok, f"bit-identical forward {identical}, corrupted magic -> {errors['magic']}, "
              f"corrupted payload -> {errors['crc']}")


def test_10_pianoid_end_to_end(criterion, tmp_path):
    res = synth_dataset(10, 20.0, path=tmp_path)
    save_checkpoint(BiLSTMModel(ModelConfig(seed=10)), None, tmp_path / "model.porg")
    start = time.perf_counter()

    def simulate():
        model, _ = load_checkpoint(tmp_path / "model.porg")
        env = build_audio_env(read_wav(res.audio_path), MFCCConfig(), model.config.window_len)
        windows = []

        def counting(window):
            windows.append(window)
            return model_forward(model, window)

        org = build_pianoid(model, env, seed=3, predict=counting)
        return run_simulation(org), windows, env, model

    mat, windows, env, model = simulate()
    mat2, _, _, _ = simulate()
    elapsed = time.perf_counter() - start
    T = env.features.n_frames - env.window_len + 1
    one_each = len(windows) == T and all(np.array_equal(w, env.window(t)) for t, w in enumerate(windows))
    routed = bool(np.array_equal(mat[:, 5], model_forward(model, env.window(5))))
    identical = bool(np.array_equal(mat, mat2))
    ok = mat.shape == (47, T) and one_each and routed and identical and elapsed < 60.0
    criterion(10, ok, f"matrix {mat.shape} (T = {T}), {len(windows)} inferences for {T} steps, "
              f"runs bit-identical {identical}, {elapsed:.1f} s for two runs")


class _Tracer(BehaviorModule):
    def __init__(self):
        self.calls = []

    def update(self, cell, sample, t, rng, peers):
        self.calls.append((t, cell.id))
        return cell.state + sample + 1.0


class _Coupled(BehaviorModule):
    def update(self, cell, sample, t, rng, peers):
        ids = sorted(peers.ids())
        nxt = ids[(ids.index(cell.id) + 1) % len(ids)]
        return 0.5 * cell.state + 0.25 * peers.state(nxt) + sample + rng.normal()


def test_11_scheduler_suite(criterion):
    start = time.perf_counter()
    env = GradientEnvironment(Box((-1, -1, -1), (1, 1, 1)))
    once = True
    for policy in (Sequential(), Stochastic(seed=3), Priority(lambda c: c.position.x), Parallel(workers=4)):
        tracer = _Tracer()
        org = create_organoid(env, 20, 1, tracer, seed=1)
        for t in range(5):
            step(org, policy, t)
            once &= sorted(cid for tt, cid in tracer.calls if tt == t) == list(range(20))

    def coupled(policy, env_seed=2):
        org = create_organoid(StochasticEnvironment(seed=env_seed), 16, 1, _Coupled(), seed=6)
        return run(org, policy, 8).states

    base = coupled(Parallel(workers=1))
    parallel_same = all(np.array_equal(base, coupled(Parallel(workers=w))) for w in (2, 3, 8))
    stochastic_det = bool(np.array_equal(coupled(Stochastic(seed=9)), coupled(Stochastic(seed=9))))
    elapsed = time.perf_counter() - start
    ok = once and parallel_same and stochastic_det and elapsed < 5.0
    criterion(11, ok, f"each cell once per step {once}, parallel worker-independent {parallel_same}, "
              f"stochastic deterministic {stochastic_det}, {elapsed:.2f} s")


def test_12_welch_psd(criterion):
    start = time.perf_counter()
    fs = 128.0
    t = np.arange(4096) / fs
    tone = welch_psd(np.sin(2 * np.pi * 10.0 * t), fs, 256)
    peak = float(tone.freqs_hz[np.argmax(tone.power)])
    noise = np.random.default_rng(12).normal(size=16384)
    psd = welch_psd(noise, fs, 256)
    integrated = float(np.sum(psd.power) * (psd.freqs_hz[1] - psd.freqs_hz[0]))
    rel = abs(integrated - np.var(noise)) / np.var(noise)
    elapsed = time.perf_counter() - start
    ok = peak == 10.0 and rel <= 0.10 and elapsed < 1.0
    criterion(12, ok, f"sinusoid peak at {peak} Hz, white-noise power off by {100 * rel:.2f}% (<= 10%), "
              f"{elapsed:.3f} s")


def test_13_evaluate_identity_and_formulas(criterion):
    rng = np.random.default_rng(13)
    truth = rng.normal(size=(47, 512))
    same = evaluate(truth, truth, 100.0)
    identity = same["mse"] == 0.0 and abs(same["mean_r"] - 1.0) <= 1e-12
    pred = truth + 0.7 * rng.normal(size=truth.shape)
    got = evaluate(pred, truth, 100.0)
    diff = pred - truth
    r = [pearson_oracle(pred[c].tolist(), truth[c].tolist()) for c in range(47)]
    err = max(abs(got["mse"] - float(np.sum(diff ** 2) / diff.size)),
              abs(got["mae"] - float(np.sum(np.abs(diff)) / diff.size)),
              float(np.max(np.abs(got["per_channel_r"] - r))),
              abs(got["mean_r"] - sum(r) / len(r)))
    criterion(13, identity and err <= 1e-10,
              f"identity mse {same['mse']}, mean_r {same['mean_r']!r}; max deviation from direct formulas {err:.2e}")
