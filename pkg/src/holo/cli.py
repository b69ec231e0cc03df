"""``holo`` command-line interface.

Subcommands: simulate, reconstruct, baseline, eval, sweep-noise, transfer, pca.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import backprop_only, gerchberg_saxton
from .config import load_config
from .evalx.experiments import run_noise_sweep, run_transfer_experiment
from .evalx.metrics import match_grid, psnr, ssim
from .evalx.pca import checkpoint_dirs, load_trajectory, pca_weight_trajectories, write_pca_csv, write_pca_svg
from .exceptions import ConfigurationError, HoloError
from .fileio import (
    atomic_write_bytes,
    read_hcf,
    read_hologram,
    read_image,
    write_amplitude,
    write_hcf,
    write_hologram,
    write_mask,
    write_phase,
)
from .nets import persist_params
from .optics import TARGET_PATTERNS, TargetSpec, add_noise, form_hologram, synthesize_target
from .trainer import reconstruct

log = logging.getLogger("holo")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

_TARGET_ALIASES = {"usaf": "usaf_bars", "cell": "cells"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config(args):
    cfg = load_config(args.config)
    for section, key, attr in (
        ("train", "iterations", "iterations"),
        ("train", "seed", "seed"),
        ("noise", "sigma", "sigma"),
        ("noise", "seed", "noise_seed"),
        ("optics", "sqrt_input", "sqrt_input"),
    ):
        cfg.override(section, key, getattr(args, attr, None))
    size = getattr(args, "size", None)
    if size is not None:
        cfg.override("optics", "height", size).override("optics", "width", size)
    if getattr(args, "no_gan", False):
        cfg.override("train", "use_gan", False)
    if getattr(args, "no_mask", False):
        cfg.override("train", "use_mask", False)
    if getattr(args, "init", None):
        cfg.override("train", "init_checkpoint", str(args.init))
    if getattr(args, "init_disc", None):
        cfg.override("train", "init_discriminator_checkpoint", str(args.init_disc))
    return cfg.apply_env()


def _write_json(path, obj):
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _target_spec(args, cfg, seed_offset=0):
    name = _TARGET_ALIASES.get(args.target, args.target)
    if name not in TARGET_PATTERNS and not Path(name).suffix:
        raise UsageError(f"unknown target {args.target!r}; choose from usaf, {', '.join(TARGET_PATTERNS)} or an image path")
    o = cfg["optics"]
    return TargetSpec(
        pattern=name,
        height=o["height"],
        width=o["width"],
        phase=args.phase,
        attenuation=args.attenuation,
        radius=args.radius,
        text=args.text,
        seed=args.sample_seed + seed_offset,
    )


def _read_input(path):
    p = Path(path)
    if not p.exists():
        raise HoloError(f"input not found: {p}")
    return read_hologram(p)


def cmd_simulate(args):
    cfg = _config(args)
    target = synthesize_target(_target_spec(args, cfg))
    optics = cfg.optics()
    h = form_hologram(target, optics)
    sigma, seed = cfg["noise"]["sigma"], cfg["noise"]["seed"]
    if sigma > 0:
        h = add_noise(h, sigma, seed)
    write_hologram(args.out, h)
    if args.truth:
        write_hcf(args.truth, target.field())
        truth = Path(args.truth)
        write_mask(truth.with_name(truth.stem + "_mask.png"), target.truth_mask)
    echo = {"command": "simulate", "target": vars(_target_spec(args, cfg)), "config": cfg.echo()}
    print(json.dumps(echo, sort_keys=True, default=str))
    return EXIT_OK


def _progress(every):
    def cb(state):
        if every and state.interval % every == 0:
            rec = state.history[-1]
            log.info("interval %d  L_G %.4g  L_Auto %.4g", rec["interval"], rec["L_G"], rec["L_Auto"])

    return cb


def cmd_reconstruct(args):
    cfg = _config(args)
    h = _read_input(args.input)
    out = _out_dir(args)
    optics = cfg.optics(h.shape)
    train = cfg.train(checkpoint_dir=str(out / "checkpoints"))
    (out / "checkpoints").mkdir(exist_ok=True)
    _write_json(out / "config.json", {"command": "reconstruct", "input": str(args.input), "config": cfg.echo()})
    result = reconstruct(h, optics, train, callback=_progress(args.log_every))

    write_amplitude(out / "amplitude.png", result.amplitude)
    write_phase(out / "phase.png", result.phase)
    write_hcf(out / "object_wave.hcf", result.object_wave)
    write_mask(out / "mask.png", result.final_mask)
    lines = [json.dumps({k: rec[k] for k in _HISTORY_KEYS}) for rec in result.loss_history]
    atomic_write_bytes(out / "history.jsonl", ("\n".join(lines) + "\n" if lines else "").encode())
    persist_params(result.generator_params, out / "final" / "generator")
    if result.discriminator_params is not None:
        persist_params(result.discriminator_params, out / "final" / "discriminator")
    if args.truth:
        truth = np.abs(read_hcf(args.truth))
        p, s = psnr(match_grid(result.amplitude, truth.shape), truth), ssim(match_grid(result.amplitude, truth.shape), truth)
        _write_json(out / "metrics.json", {"psnr_db": p, "ssim": s})
        print(json.dumps({"psnr_db": p, "ssim": s}))
    return EXIT_OK


_HISTORY_KEYS = ("interval", "L_G", "L_D", "L_Auto", "L_B", "mask_accepted", "temperature")


def cmd_baseline(args):
    cfg = _config(args)
    h = _read_input(args.input)
    out = _out_dir(args)
    optics = cfg.optics(h.shape)
    info = {"command": "baseline", "method": args.method, "input": str(args.input), "config": cfg.echo()}
    if args.method == "backprop":
        obj = backprop_only(h, optics)
    else:
        obj, hist = gerchberg_saxton(h, optics, iters=args.iters, return_history=True)
        info["iters"] = args.iters
        _write_json(out / "residuals.json", [float(v) for v in hist])
    _write_json(out / "config.json", info)
    write_amplitude(out / "amplitude.png", np.abs(obj))
    write_phase(out / "phase.png", np.angle(obj))
    write_hcf(out / "object_wave.hcf", obj)
    return EXIT_OK


def _load_amplitude(path):
    p = Path(path)
    if not p.exists():
        raise HoloError(f"file not found: {p}")
    if p.suffix.lower() == ".hcf":
        return np.abs(read_hcf(p))
    return read_image(p)


def cmd_eval(args):
    a, b = _load_amplitude(args.a), _load_amplitude(args.b)
    if a.shape != b.shape and a.size > b.size:
        a = match_grid(a, b.shape)
    elif a.shape != b.shape:
        b = match_grid(b, a.shape)
    res = {"a": str(args.a), "b": str(args.b), "psnr_db": psnr(a, b), "ssim": ssim(a, b)}
    print(json.dumps(res, sort_keys=True))
    if args.out_dir:
        _write_json(_out_dir(args) / "eval.json", res)
    return EXIT_OK


def _harness_setup(args):
    cfg = _config(args)
    out = _out_dir(args)
    return cfg, out, cfg.optics(), cfg.train()


def cmd_sweep_noise(args):
    cfg, out, optics, train = _harness_setup(args)
    target = synthesize_target(_target_spec(args, cfg))
    report = run_noise_sweep(target, optics, train, args.sigmas, noise_seed=cfg["noise"]["seed"], method=args.method, jobs=args.jobs)
    report.config["run_config"] = cfg.echo()
    report.config["target"] = vars(_target_spec(args, cfg))
    report.save(out, "noise_sweep")
    sys.stdout.write(report.to_table())
    return EXIT_OK


def cmd_transfer(args):
    cfg, out, optics, train = _harness_setup(args)
    specs = [_target_spec(args, cfg, seed_offset=i) for i in range(4)]
    samples = [synthesize_target(s) for s in specs]
    report = run_transfer_experiment(
        samples,
        optics,
        train,
        retrain_iterations=args.retrain_iterations,
        sigma=cfg["noise"]["sigma"],
        noise_seed=cfg["noise"]["seed"],
        checkpoint_root=out / "checkpoints",
        jobs=args.jobs,
    )
    report.config["run_config"] = cfg.echo()
    report.config["targets"] = [vars(s) for s in specs]
    report.save(out, "transfer")
    sys.stdout.write(report.to_table())
    return EXIT_OK


def cmd_pca(args):
    labels = args.labels or [Path(r).name for r in args.runs]
    if len(labels) != len(args.runs):
        raise UsageError("--labels must name every run")
    runs = []
    for r in args.runs:
        dirs = checkpoint_dirs(r) if Path(r).is_dir() else []
        if not dirs:
            raise HoloError(f"no checkpoints found under {r}")
        runs.append(load_trajectory(dirs))
    proj = pca_weight_trajectories(runs, labels)
    out = _out_dir(args)
    write_pca_csv(proj, out / "pca.csv")
    write_pca_svg(proj, out / "pca.svg")
    _write_json(
        out / "pca.json",
        {
            "command": "pca",
            "runs": [str(r) for r in args.runs],
            "labels": labels,
            "explained_variance": [float(v) for v in proj.explained_variance],
        },
    )
    print(f"wrote {len(proj.labels)} points to {out / 'pca.csv'}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="JSON run config (see holo.config for sections and defaults)")
    p.add_argument("--seed", type=int, help="training seed (HOLO_SEED overrides)")
    p.add_argument("--iterations", type=int, help="number of training intervals")
    p.add_argument("--sqrt-input", action="store_true", default=None, help="back-propagate sqrt(H) instead of H")


def _add_target(p):
    p.add_argument("--target", default="usaf", help="usaf, disc, text, cells, dendrite or a bitmap path")
    p.add_argument("--size", type=int, help="grid size in pixels (square)")
    p.add_argument("--phase", type=float, default=float(np.pi / 2), help="phase shift inside the object [rad]")
    p.add_argument("--attenuation", type=float, default=1.0, help="amplitude inside the object")
    p.add_argument("--radius", type=float, help="disc radius in pixels")
    p.add_argument("--text", default="DH", help="string for the text target")
    p.add_argument("--sample-seed", type=int, default=0, help="seed for randomized targets")
    p.add_argument("--sigma", type=float, help="noise std on the 0-255 scale")
    p.add_argument("--noise-seed", type=int, help="noise seed")


def build_parser():
    parser = _Parser(prog="holo", description="Digital in-line holography reconstruction toolkit")
    parser.add_argument("--version", action="version", version=f"holo {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize a target and its hologram")
    _add_common(p)
    _add_target(p)
    p.add_argument("--out", required=True, help="hologram PNG")
    p.add_argument("--truth", help="write the true object field (.hcf) and <stem>_mask.png")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="one-shot reconstruction of a hologram")
    _add_common(p)
    p.add_argument("--input", required=True, help="hologram image")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--init", help="generator checkpoint directory to warm-start from")
    p.add_argument("--init-disc", help="discriminator checkpoint directory to warm-start from")
    p.add_argument("--no-mask", action="store_true", help="disable adaptive masking and the background loss")
    p.add_argument("--no-gan", action="store_true", help="drop the discriminator (plain autoencoder objective)")
    p.add_argument("--truth", help="true object field (.hcf); writes metrics.json")
    p.add_argument("--log-every", type=int, default=100, help="progress log cadence in intervals")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("baseline", help="back-propagation or Gerchberg-Saxton reconstruction")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--method", choices=("backprop", "gs"), default="gs")
    p.add_argument("--iters", type=int, default=100)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="PSNR and SSIM between two amplitude images")
    p.add_argument("--a", required=True, help="image or .hcf (amplitude is used)")
    p.add_argument("--b", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-noise", help="noise robustness sweep on a simulated target")
    _add_common(p)
    _add_target(p)
    p.add_argument("--sigmas", type=_floats, default=[0.0, 5.0, 10.0, 15.0])
    p.add_argument("--method", choices=("gan", "ae", "gan-nomask", "ae-nomask", "backprop", "gs"), default="gan")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep_noise)

    p = sub.add_parser("transfer", help="transfer-learning scenarios on four same-type samples")
    _add_common(p)
    _add_target(p)
    p.add_argument("--retrain-iterations", type=int, default=500)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("pca", help="PCA of generator weight trajectories")
    p.add_argument("--runs", nargs="+", required=True, help="directories holding periodic checkpoints")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pca)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (UsageError, ConfigurationError) as exc:
        print(f"holo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HoloError, ValueError, OSError) as exc:
        print(f"holo: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
