"""``orgsim`` entry point: synth, preprocess, features, train, simulate, evaluate, plot."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from orgsim import container
from orgsim.cli.config import load_config, write_config
from orgsim.cli.emit import PlotSpec, Series, emit_csv, emit_plot
from orgsim.errors import ConfigError, ConvergenceError, InvalidArgument, OrgsimError
from orgsim.ica import fastica, remove_components, save_ica, select_by_kurtosis
from orgsim.neural import BiLSTMModel, ModelConfig, TrainConfig, load_checkpoint, save_checkpoint, train
from orgsim.pianoid import (
    BatchGenerator,
    DatasetStore,
    TeacherConfig,
    build_audio_env,
    build_pianoid,
    evaluate,
    make_dataset,
    run_simulation,
    split_indices,
    synth_dataset,
)
from orgsim.signal import MFCCConfig, apply_filter, design_bandpass, load_recording, mfcc, read_wav, save_recording


def _mfcc_config(cfg) -> MFCCConfig:
    return MFCCConfig(**cfg["mfcc"])


def _model_config(cfg, n_mfcc: int, window_len: int) -> ModelConfig:
    m = cfg["model"]
    if m["window_len"] != window_len:
        raise ConfigError(f"[model] window_len = {m['window_len']} but the data holds {window_len}-frame windows")
    return ModelConfig(n_mfcc=n_mfcc, window_len=window_len, units=m["units"], n_lstm_layers=m["n_lstm_layers"],
                       dense_units=m["dense_units"], dropout=m["dropout"],
                       recurrent_dropout=m["recurrent_dropout"], l2=m["l2"], seed=cfg["run"]["seed"])


def _train_config(cfg) -> TrainConfig:
    t = {k: v for k, v in cfg["train"].items() if k != "val_frac"}
    return TrainConfig(**t, seed=cfg["run"]["seed"])


def _first_existing(out: Path, *names) -> Path:
    for name in names:
        if (out / name).exists():
            return out / name
    raise InvalidArgument(f"none of {', '.join(names)} found in {out}")


def _pairs_file(args, out: Path) -> Path:
    return Path(args.data) if args.data else _first_existing(out, "features.pods", "dataset.pods")


def _frame_rate(audio_path: Path, cfg) -> float:
    audio = read_wav(audio_path)
    return audio.sample_rate_hz / _mfcc_config(cfg).resolve(audio.sample_rate_hz).hop


# -- subcommands: each returns the files it will write and a callable doing the work --

def cmd_synth(args, cfg, out):
    s = cfg["synth"]
    teacher = TeacherConfig(rank=s["rank"], noise_sigma=s["noise_sigma"], osc_amp=s["osc_amp"],
                            osc_hz=s["osc_hz"], tau_frames=s["tau_frames"], audio_rate_hz=s["audio_rate_hz"])

    def run():
        synth_dataset(cfg["run"]["seed"], s["duration_s"], s["rate_hz"], teacher, out,
                      _mfcc_config(cfg), cfg["model"]["window_len"])
    return ["audio.wav", "eeg.porg", "dataset.pods"], run


def _remove_list(cfg) -> list:
    text = cfg["ica"]["remove"].strip()
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[ica] remove must list component indices, got {text!r}") from None


def cmd_preprocess(args, cfg, out):
    src = Path(args.eeg) if args.eeg else out / "eeg.porg"
    f, ica = cfg["filter"], cfg["ica"]
    manual = _remove_list(cfg)

    def run():
        rec = load_recording(src, args.eeg_rate)
        if f["enabled"]:
            fir = design_bandpass(f["low_hz"], f["high_hz"], f["n_taps"], rec.sample_rate_hz)
            rec = rec.with_data(apply_filter(fir, rec.data))
        if ica["enabled"]:
            k = ica["n_components"] or None
            failure = None
            try:
                model = fastica(rec.data, k, ica["tol"], ica["max_iter"], cfg["run"]["seed"])
            except ConvergenceError as exc:
                model, failure = exc.model, exc
            remove = sorted(set(manual) | (set(select_by_kurtosis(model, rec.data, ica["kurtosis_threshold"]))
                                           if ica["auto_kurtosis"] else set()))
            if failure is not None:
                if remove:
                    raise ConvergenceError(f"{failure}; refusing to remove components {remove}",
                                           failure.delta, model)
                print(f"orgsim: warning: {failure}; no components removed", file=sys.stderr)
            if remove:
                rec = remove_components(rec, model, remove)
            save_ica(model, out / "ica.porg")
        save_recording(rec, out / "eeg_clean.porg")
    return ["eeg_clean.porg"] + (["ica.porg"] if ica["enabled"] else []), run


def cmd_features(args, cfg, out):
    audio_path = Path(args.audio) if args.audio else out / "audio.wav"

    def run():
        eeg_path = Path(args.eeg) if args.eeg else _first_existing(out, "eeg_clean.porg", "eeg.porg")
        feats = mfcc(read_wav(audio_path), _mfcc_config(cfg))
        rec = load_recording(eeg_path, args.eeg_rate)
        make_dataset(feats, rec, cfg["model"]["window_len"], out / "features.pods")
    return ["features.pods"], run


def cmd_train(args, cfg, out):
    tcfg = _train_config(cfg)

    def run():
        store = DatasetStore(_pairs_file(args, out))
        tr, va = split_indices(len(store), cfg["train"]["val_frac"])
        model = BiLSTMModel(_model_config(cfg, store.n_mfcc, store.window_len))
        model.set_normalization(*store.feature_stats(tr))
        seed = cfg["run"]["seed"]
        best, hist = train(model,
                           BatchGenerator(store, tcfg.batch_size, seed, tr),
                           BatchGenerator(store, 256, seed, va, shuffle=False), tcfg)
        save_checkpoint(best, hist.state, out / "model.porg")
        emit_csv(out / "history.csv", hist.HEADER, hist.rows())
        print(f"trained {len(hist)} epochs, best val loss {hist.best_val_loss:.6g} at epoch {hist.best_epoch}")
    return ["model.porg", "history.csv"], run


def cmd_simulate(args, cfg, out):
    audio_path = Path(args.audio) if args.audio else out / "audio.wav"
    model_path = Path(args.model) if args.model else out / "model.porg"

    def run():
        model, _ = load_checkpoint(model_path)
        env = build_audio_env(read_wav(audio_path), _mfcc_config(cfg), model.config.window_len)
        mat = run_simulation(build_pianoid(model, env, cfg["run"]["seed"]))
        T = mat.shape[1]
        rows = zip(np.repeat(np.arange(mat.shape[0]), T), np.tile(np.arange(T), mat.shape[0]), mat.ravel())
        emit_csv(out / "simulation.csv", ["channel", "timestep", "value"],
                 ((int(c), int(t), float(v)) for c, t, v in rows))
        container.write_matrix(out / "simulation.pods", mat.T)
    return ["simulation.csv", "simulation.pods"], run


def _read_history(path: Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgument(f"{path} holds no epochs")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def cmd_evaluate(args, cfg, out):
    audio_path = Path(args.audio) if args.audio else out / "audio.wav"
    sim_path = Path(args.simulation) if args.simulation else out / "simulation.pods"
    hist_path = Path(args.history) if args.history else out / "history.csv"

    def run():
        pred = container.read_matrix(sim_path).T
        store = DatasetStore(_pairs_file(args, out))
        if pred.shape[1] != len(store):
            raise InvalidArgument(f"simulation has {pred.shape[1]} steps, dataset has {len(store)} pairs")
        truth = store.read(np.arange(len(store)))[1].T
        rate = _frame_rate(audio_path, cfg)
        res = evaluate(pred, truth, rate)
        _, va = split_indices(len(store), cfg["train"]["val_frac"])
        held = evaluate(pred[:, va], truth[:, va], rate) if va.size >= 16 else None
        metrics = [("mse", res["mse"]), ("mae", res["mae"]), ("mean_r", res["mean_r"])]
        if held is not None:
            metrics += [("val_mse", held["mse"]), ("val_mae", held["mae"]), ("val_mean_r", held["mean_r"])]
        metrics.append(("n_steps", pred.shape[1]))
        emit_csv(out / "metrics.csv", ["metric", "value"], metrics)
        emit_csv(out / "correlations.csv", ["channel", "r"], enumerate(res["per_channel_r"].tolist()))
        for name in ("pred", "true"):
            psd = res[f"{name}_psd"]
            emit_csv(out / f"psd_{name}.csv", ["freq_hz", "power"], zip(psd.freqs_hz.tolist(), psd.power.tolist()))

        hist = _read_history(hist_path)
        ep = hist["epoch"]
        emit_plot(PlotSpec((Series("train", ep, hist["train_loss"]), Series("validation", ep, hist["val_loss"])),
                           out / "loss.svg", "Training and validation loss", "epoch", "loss"))
        emit_plot(PlotSpec((Series("train", ep, hist["train_mae"]), Series("validation", ep, hist["val_mae"])),
                           out / "mae.svg", "Training and validation MAE", "epoch", "MAE"))
        emit_plot(PlotSpec((Series("predicted", res["pred_psd"].freqs_hz, res["pred_psd"].power),
                            Series("true", res["true_psd"].freqs_hz, res["true_psd"].power)),
                           out / "psd.svg", "PSD of the channel-averaged signal", "frequency (Hz)", "power"))
        t = np.arange(pred.shape[1]) / rate
        emit_plot(PlotSpec((Series("predicted", t, res["avg_pred"]), Series("true", t, res["avg_true"])),
                           out / "average.svg", "Channel-averaged EEG", "time (s)", "amplitude"))
        print(f"mse {res['mse']:.6g}  mae {res['mae']:.6g}  mean r {res['mean_r']:.4f}")
    return ["metrics.csv", "correlations.csv", "psd_pred.csv", "psd_true.csv",
            "loss.svg", "mae.svg", "psd.svg", "average.svg"], run


def cmd_plot(args, cfg, out):
    name = args.output if args.output.endswith(".svg") else args.output + ".svg"

    def run():
        with open(args.csv, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        cols = rows[0].keys() if rows else []
        for c in [args.x, *args.y]:
            if c not in cols:
                raise InvalidArgument(f"column {c!r} not in {args.csv}")
        try:
            x = np.array([float(r[args.x]) for r in rows])
            series = tuple(Series(c, x, np.array([float(r[c]) for r in rows])) for c in args.y)
        except ValueError as exc:
            raise InvalidArgument(f"{args.csv}: non-numeric value ({exc})") from None
        emit_plot(PlotSpec(series, out / name, args.title or "", args.xlabel or args.x, args.ylabel or ""))
    return [name], run


COMMANDS = {
    "synth": (cmd_synth, "generate piano audio, teacher EEG and the paired dataset"),
    "preprocess": (cmd_preprocess, "band-pass filter and ICA-clean an EEG recording"),
    "features": (cmd_features, "pair MFCC windows with EEG samples"),
    "train": (cmd_train, "fit the Bi-LSTM on a pairs file"),
    "simulate": (cmd_simulate, "drive the 47-cell organoid with audio"),
    "evaluate": (cmd_evaluate, "score a simulation and draw the figures"),
    "plot": (cmd_plot, "line chart of CSV columns"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="INI config file")
    common.add_argument("--seed", metavar="N", type=int, default=argparse.SUPPRESS,
                        help="random seed (falls back to ORGSIM_SEED)")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--force", action="store_true", default=argparse.SUPPRESS,
                        help="overwrite existing outputs")
    parser = argparse.ArgumentParser(prog="orgsim", parents=[common],
                                     description="Organoid-learning simulation pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs = {name: sub.add_parser(name, parents=[common], help=text, description=text)
            for name, (_, text) in COMMANDS.items()}
    subs["preprocess"].add_argument("--eeg", help="input recording (default OUT/eeg.porg)")
    subs["features"].add_argument("--audio", help="WAV input (default OUT/audio.wav)")
    subs["features"].add_argument("--eeg", help="recording (default OUT/eeg_clean.porg, else OUT/eeg.porg)")
    for name in ("preprocess", "features"):
        subs[name].add_argument("--eeg-rate", type=float, metavar="HZ",
                                help="sample rate of a PODS matrix recording (samples x channels)")
    for name in ("train", "evaluate"):
        subs[name].add_argument("--data", help="pairs file (default OUT/features.pods, else OUT/dataset.pods)")
    for name in ("simulate", "evaluate"):
        subs[name].add_argument("--audio", help="WAV input (default OUT/audio.wav)")
    subs["simulate"].add_argument("--model", help="checkpoint (default OUT/model.porg)")
    subs["evaluate"].add_argument("--simulation", help="matrix file (default OUT/simulation.pods)")
    subs["evaluate"].add_argument("--history", help="training history (default OUT/history.csv)")
    p = subs["plot"]
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--x", required=True, help="x column")
    p.add_argument("--y", required=True, nargs="+", help="y column(s)")
    p.add_argument("--output", default="plot.svg", help="SVG name inside OUT")
    p.add_argument("--title")
    p.add_argument("--xlabel")
    p.add_argument("--ylabel")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("orgsim: error: a subcommand is required", file=sys.stderr)
        return 2
    out = Path(getattr(args, "out", "."))
    try:
        cfg = load_config(getattr(args, "config", None), getattr(args, "seed", None))
        outputs, run = COMMANDS[args.command][0](args, cfg, out)
    except OrgsimError as exc:  # bad configuration values
        parser.print_usage(sys.stderr)
        print(f"orgsim: error: {exc}", file=sys.stderr)
        return 2
    echo = f"config_{args.command}.ini"
    targets = [out / name for name in [*outputs, echo]]
    existing = [str(p) for p in targets if p.exists()]
    if existing and not getattr(args, "force", False):
        print(f"orgsim: error: refusing to overwrite {', '.join(existing)} (use --force)", file=sys.stderr)
        return 1
    try:
        out.mkdir(parents=True, exist_ok=True)
        run()
        write_config(cfg, out / echo)
    except (OrgsimError, OSError) as exc:
        print(f"orgsim: error: {exc}", file=sys.stderr)
        return 1
    return 0
