"""Command-line interface: mix, separate, eval, synth, inspect.

Every command is a reproducible batch job: inputs, flags, and seed fully
determine the outputs, and the effective configuration is echoed into a
manifest next to them. Exit codes: 0 success, 1 runtime/data error,
2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dumps
from .audio_io import Waveform, load_audio, save_audio
from .config import RunConfig, build_config
from .evaluation import achieved_snr_db, evaluate_pair, mix_at_snr
from .nmf import SHARED
from .separation import mfa, pca_scatter, separate
from .spectral import stft
from .synthetic import SourceSpec, generate

_CONFIG_FLAGS = ("frame_len", "hop", "band_hi", "method", "mask_mode",
                 "mask_base", "high_band", "epochs", "lr", "batch",
                 "nmf_rank", "nmf_iters", "lambda_sparsity", "seed")


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--method", choices=("pc-dae-c", "pc-dae-f", "dc-dae",
                                          "pc-nmf", "dc-nmf"))
    sub.add_argument("--frame-len", type=int, dest="frame_len")
    sub.add_argument("--hop", type=int)
    sub.add_argument("--band-hi", type=int, dest="band_hi")
    sub.add_argument("--mask-mode", choices=("mask", "direct"), dest="mask_mode")
    sub.add_argument("--mask-base", choices=("mixture", "reconstruction"),
                     dest="mask_base")
    sub.add_argument("--high-band", choices=("zero", "mixture"), dest="high_band")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch", type=int)
    sub.add_argument("--nmf-rank", type=int, dest="nmf_rank")
    sub.add_argument("--nmf-iters", type=int, dest="nmf_iters")
    sub.add_argument("--lambda", type=float, dest="lambda_sparsity")


def _resolve_config(args) -> RunConfig:
    overrides = {key: getattr(args, key, None) for key in _CONFIG_FLAGS}
    return build_config(getattr(args, "config", None), overrides)


def _write_manifest(path: Path, cfg: RunConfig, extra: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in extra.items():
            fh.write(f"{key} = {value}\n")
        for line in cfg.lines():
            fh.write(line + "\n")


def _prepare_out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mix(args, cfg: RunConfig) -> int:
    out = _prepare_out_dir(args)
    target = load_audio(args.target)
    noise = load_audio(args.noise)
    mixture, ref_target, ref_noise = mix_at_snr(target, noise, args.snr)
    save_audio(mixture, out / "mix.wav")
    save_audio(ref_target, out / "ref_target.wav")
    save_audio(ref_noise, out / "ref_noise.wav")
    _write_manifest(out / "manifest.txt", cfg, {
        "command": "mix",
        "target": args.target,
        "noise": args.noise,
        "requested_snr_db": f"{args.snr:.2f}",
        "achieved_snr_db": f"{achieved_snr_db(ref_target, ref_noise):.6f}",
    })
    return 0


def cmd_separate(args, cfg: RunConfig) -> int:
    out = _prepare_out_dir(args)
    written: list = []

    def emit(name: str):
        path = out / name
        written.append(path)
        return path

    try:
        mixture = load_audio(args.input)
        result = separate(mixture, cfg, keep_intermediates=args.dump)
        save_audio(result.heart, emit("heart.wav"))
        save_audio(result.lung, emit("lung.wav"))
        n0, n1, n_shared = result.assignment.cluster_sizes()
        heart_c = result.assignment.cluster_of("heart")
        sizes = {"heart": (n0, n1)[heart_c], "lung": (n0, n1)[1 - heart_c]}
        centroids = result.assignment.centroid_hz
        with open(emit("result.csv"), "w", encoding="utf-8") as fh:
            fh.write("method,seed,n_heart,n_lung,n_shared,"
                     "heart_centroid_hz,lung_centroid_hz\n")
            fh.write(f"{result.method},{cfg.seed},{sizes['heart']},"
                     f"{sizes['lung']},{n_shared},"
                     f"{centroids[heart_c]:.6g},{centroids[1 - heart_c]:.6g}\n")
        _write_manifest(emit("manifest.txt"), cfg, {
            "command": "separate",
            "input": args.input,
            "output_samples": len(result.heart),
        })
        if args.dump:
            _dump_intermediates(result, out, emit)
        return 0
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise


def _dump_intermediates(result, out: Path, emit) -> None:
    inter = result.intermediates or {}
    traj = inter.get("trajectories")
    if traj is not None:
        dumps.save_matrix_csv(
            emit("trajectories.csv"), traj.matrix.T,
            header=[f"unit_{j:04d}" for j in range(traj.n_units)])
        pcm = inter.get("mod_spectra") or mfa(traj)
        table = np.column_stack([pcm.freqs_hz, pcm.matrix.T])
        dumps.save_matrix_csv(
            emit("mfa.csv"), table,
            header=["freq_hz"] + [f"unit_{j:04d}" for j in range(traj.n_units)])
    dumps.save_labels_csv(emit("labels.csv"), result.assignment)
    if result.masks is not None:
        dumps.save_matrix_csv(emit("mask_heart.csv"), result.masks[0])
        dumps.save_matrix_csv(emit("mask_lung.csv"), result.masks[1])
        dumps.save_pgm(emit("mask_heart.pgm"), dumps.mask_image(result.masks[0]))
        dumps.save_pgm(emit("mask_lung.pgm"), dumps.mask_image(result.masks[1]))
    band = inter.get("band")
    if band is not None:
        for name, wave in (("heart", result.heart), ("lung", result.lung)):
            spec = stft(wave, band.frame_len, band.hop)
            dumps.save_pgm(emit(f"spectrogram_{name}.pgm"),
                           dumps.spectrogram_db_image(spec))


def cmd_eval(args, cfg: RunConfig) -> int:
    out = _prepare_out_dir(args)
    waves = [load_audio(p) for p in (args.est_heart, args.est_lung,
                                     args.ref_heart, args.ref_lung)]
    lengths = {len(w) for w in waves}
    if len(lengths) > 1:
        if not args.trim_to_shortest:
            raise ValueError(
                f"signal lengths differ ({sorted(lengths)}); "
                "pass --trim-to-shortest to crop")
        n = min(lengths)
        waves = [Waveform(w.samples[:n], w.sample_rate) for w in waves]
    est_h, est_l, ref_h, ref_l = waves
    scores_h, scores_l, swapped = evaluate_pair(est_h, est_l, ref_h, ref_l)
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        fh.write("source,sdr_db,sir_db,sar_db\n")
        fh.write(f"heart,{scores_h.sdr:.4f},{scores_h.sir:.4f},{scores_h.sar:.4f}\n")
        fh.write(f"lung,{scores_l.sdr:.4f},{scores_l.sir:.4f},{scores_l.sar:.4f}\n")
    report = {
        "command": "eval",
        "heart_sdr_db": f"{scores_h.sdr:.4f}",
        "heart_sir_db": f"{scores_h.sir:.4f}",
        "heart_sar_db": f"{scores_h.sar:.4f}",
        "lung_sdr_db": f"{scores_l.sdr:.4f}",
        "lung_sir_db": f"{scores_l.sir:.4f}",
        "lung_sar_db": f"{scores_l.sar:.4f}",
        "estimates_swapped": str(swapped).lower(),
    }
    _write_manifest(out / "report.txt", cfg, report)
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    out = _prepare_out_dir(args)
    heart = SourceSpec("impulse_train_tone", rate_hz=args.heart_rate,
                       duration_s=args.duration, seed=args.synth_seed,
                       carrier_hz=args.carrier, decay_s=args.decay)
    lung = SourceSpec("am_noise", rate_hz=args.lung_rate,
                      duration_s=args.duration, seed=args.synth_seed + 1,
                      band_lo_hz=args.band_lo, band_hi_hz=args.band_hi_hz)
    save_audio(generate(heart), out / "heart.wav")
    save_audio(generate(lung), out / "lung.wav")
    _write_manifest(out / "manifest.txt", cfg, {
        "command": "synth",
        "heart_kind": heart.kind,
        "heart_rate_hz": heart.rate_hz,
        "heart_carrier_hz": heart.carrier_hz,
        "heart_decay_s": heart.decay_s,
        "heart_seed": heart.seed,
        "lung_kind": lung.kind,
        "lung_rate_hz": lung.rate_hz,
        "lung_band_lo_hz": lung.band_lo_hz,
        "lung_band_hi_hz": lung.band_hi_hz,
        "lung_seed": lung.seed,
        "duration_s": args.duration,
    })
    return 0


def cmd_inspect(args, cfg: RunConfig) -> int:
    out = _prepare_out_dir(args)
    mixture = load_audio(args.input)
    result = separate(mixture, cfg, keep_intermediates=True)
    inter = result.intermediates
    traj = inter["trajectories"]
    pcm = inter["mod_spectra"]
    dumps.save_matrix_csv(
        out / "trajectories.csv", traj.matrix.T,
        header=[f"unit_{j:04d}" for j in range(traj.n_units)])
    table = np.column_stack([pcm.freqs_hz, pcm.matrix.T])
    dumps.save_matrix_csv(
        out / "mfa.csv", table,
        header=["freq_hz"] + [f"unit_{j:04d}" for j in range(traj.n_units)])
    informative = result.assignment.labels != SHARED
    coords = pca_scatter(traj.matrix[informative])
    roles = np.asarray(result.assignment.role_names(), dtype=object)[informative]
    with open(out / "pca.csv", "w", encoding="utf-8") as fh:
        fh.write("coord1,coord2,label\n")
        for (c1, c2), role in zip(coords, roles):
            fh.write(f"{c1:.10g},{c2:.10g},{role}\n")
    dumps.save_labels_csv(out / "labels.csv", result.assignment)
    band = inter["band"]
    dumps.save_pgm(out / "spectrogram_mixture.pgm",
                   dumps.spectrogram_db_image(stft(mixture, band.frame_len,
                                                   band.hop)))
    for name, wave in (("heart", result.heart), ("lung", result.lung)):
        dumps.save_pgm(out / f"spectrogram_{name}.pgm",
                       dumps.spectrogram_db_image(stft(wave, band.frame_len,
                                                       band.hop)))
    _write_manifest(out / "manifest.txt", cfg, {
        "command": "inspect",
        "input": args.input,
        "informative_units": int(informative.sum()),
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulmosep",
        description="Blind separation of mixed heart and lung sounds")
    commands = parser.add_subparsers(dest="command", required=True)

    mix = commands.add_parser("mix", help="mix two sources at a target SNR")
    mix.add_argument("--target", required=True)
    mix.add_argument("--noise", required=True)
    mix.add_argument("--snr", type=float, required=True)
    mix.add_argument("--out-dir", required=True)
    _add_config_flags(mix)
    mix.set_defaults(func=cmd_mix)

    sep = commands.add_parser("separate", help="separate a mixture into two sources")
    sep.add_argument("--input", required=True)
    sep.add_argument("--out-dir", required=True)
    sep.add_argument("--dump", action="store_true",
                     help="also write trajectories, spectra, labels, and masks")
    _add_config_flags(sep)
    sep.set_defaults(func=cmd_separate)

    ev = commands.add_parser("eval", help="score estimates against references")
    ev.add_argument("--est-heart", required=True)
    ev.add_argument("--est-lung", required=True)
    ev.add_argument("--ref-heart", required=True)
    ev.add_argument("--ref-lung", required=True)
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--trim-to-shortest", action="store_true")
    _add_config_flags(ev)
    ev.set_defaults(func=cmd_eval)

    syn = commands.add_parser("synth", help="generate surrogate heart/lung sources")
    syn.add_argument("--out-dir", required=True)
    syn.add_argument("--duration", type=float, default=30.0)
    syn.add_argument("--seed", type=int, default=0, dest="synth_seed")
    syn.add_argument("--heart-rate", type=float, default=1.2)
    syn.add_argument("--carrier", type=float, default=90.0)
    syn.add_argument("--decay", type=float, default=0.04)
    syn.add_argument("--lung-rate", type=float, default=0.25)
    syn.add_argument("--band-lo", type=float, default=150.0)
    syn.add_argument("--band-hi", type=float, default=900.0, dest="band_hi_hz")
    syn.set_defaults(func=cmd_synth)

    ins = commands.add_parser("inspect", help="dump latent trajectories, spectra, and PCA")
    ins.add_argument("--input", required=True)
    ins.add_argument("--out-dir", required=True)
    _add_config_flags(ins)
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args, cfg)
    except Exception as exc:  # runtime/data errors -> exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
