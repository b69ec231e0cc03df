"""Experiment harnesses: simulated comparison, noise sweep, transfer learning.

Every harness returns a :class:`MetricReport` whose ``config`` field echoes
the optics, training settings and harness arguments, so a report is enough
to rerun the experiment on the same build.
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..baselines import backprop_only, gerchberg_saxton
from ..fileio import atomic_write_bytes
from ..optics import add_noise, form_hologram
from ..trainer import apply_generator, reconstruct
from .metrics import match_grid, psnr, ssim

__all__ = [
    "MetricReport",
    "score_amplitude",
    "config_echo",
    "run_simulated_comparison",
    "run_noise_sweep",
    "run_transfer_experiment",
]

_COLUMNS = ("method", "sample", "sigma", "iterations", "psnr_db", "ssim", "wall_time_s", "seed")


@dataclass
class MetricReport:
    scenario: str
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, **rec):
        self.records.append({k: rec.get(k) for k in _COLUMNS})

    def select(self, **match):
        return [r for r in self.records if all(r.get(k) == v for k, v in match.items())]

    def value(self, key="psnr_db", **match):
        rows = self.select(**match)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} records match {match}")
        return rows[0][key]

    def to_dict(self):
        return {"scenario": self.scenario, "config": self.config, "records": self.records}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self):
        cols = [c for c in _COLUMNS if any(r.get(c) is not None for r in self.records)]
        rows = [[_fmt(r.get(c)) for c in cols] for r in self.records]
        widths = [max([len(c)] + [len(row[i]) for row in rows]) for i, c in enumerate(cols)]
        lines = [f"# {self.scenario}", "  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
        return "\n".join(lines) + "\n"

    def save(self, out_dir, stem="report"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_bytes(out / f"{stem}.json", self.to_json().encode())
        atomic_write_bytes(out / f"{stem}.txt", self.to_table().encode())
        return out / f"{stem}.json", out / f"{stem}.txt"


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def config_echo(optics, cfg, **extra):
    return {"optics": asdict(optics), "train": _plain(asdict(cfg)), **_plain(extra)}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def score_amplitude(object_wave, truth_amplitude):
    """PSNR and SSIM of ``|object_wave|`` against the truth amplitude.

    A super-resolved estimate is average-pooled onto the truth grid first.
    """
    amp = match_grid(np.abs(object_wave), np.shape(truth_amplitude))
    return psnr(amp, truth_amplitude), ssim(amp, truth_amplitude)


def _run_method(method, h, optics, cfg, gs_iters=100):
    t0 = time.perf_counter()
    if method == "backprop":
        obj, iters = backprop_only(h, optics), 0
    elif method == "gs":
        obj, iters = gerchberg_saxton(h, optics, iters=gs_iters), gs_iters
    else:
        variant = {
            "gan": cfg,
            "ae": replace(cfg, use_gan=False),
            "gan-nomask": replace(cfg, use_mask=False),
            "ae-nomask": replace(cfg, use_gan=False, use_mask=False),
        }[method]
        obj, iters = reconstruct(h, optics, variant).object_wave, variant.iterations
    return obj, iters, time.perf_counter() - t0


def _job(args):
    method, h, optics, cfg, truth, extra = args
    obj, iters, wall = _run_method(method, h, optics, cfg)
    p, s = score_amplitude(obj, truth)
    return dict(method=method, iterations=iters, psnr_db=p, ssim=s, wall_time_s=wall, seed=cfg.seed, **extra)


def _single_thread():
    torch.set_num_threads(1)


def _map(fn, jobs, n_jobs):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    # one intra-op thread per worker so workers do not oversubscribe cores
    with ProcessPoolExecutor(max_workers=n_jobs, initializer=_single_thread) as pool:
        return list(pool.map(fn, jobs))


def _observe(target, optics, sigma, noise_seed):
    h = form_hologram(target, optics)
    return add_noise(h, sigma, noise_seed) if sigma > 0 else h


def run_simulated_comparison(target, optics, cfg, methods=("gan", "ae", "gan-nomask", "backprop", "gs"), sigma=0.0, noise_seed=0, jobs=1):
    """Reconstruct one simulated target with several methods (Table 3 style)."""
    h = _observe(target, optics, sigma, noise_seed)
    work = [(m, h, optics, cfg, target.attenuation, {"sigma": sigma}) for m in methods]
    report = MetricReport("simulated-comparison", config=config_echo(optics, cfg, methods=list(methods), sigma=sigma, noise_seed=noise_seed))
    for rec in _map(_job, work, jobs):
        report.add(**rec)
    return report


def run_noise_sweep(target, optics, cfg, sigmas, noise_seed=0, method="gan", jobs=1):
    """Reconstruct from holograms with added noise at each sigma (0-255 scale)."""
    work = [
        (method, _observe(target, optics, s, noise_seed), optics, cfg, target.attenuation, {"sigma": float(s)})
        for s in sigmas
    ]
    report = MetricReport(
        "noise-sweep", config=config_echo(optics, cfg, sigmas=[float(s) for s in sigmas], noise_seed=noise_seed, method=method)
    )
    for rec in _map(_job, work, jobs):
        report.add(**rec)
    return report


def _transfer_job(args):
    kind, h, optics, cfg, truth, init, name = args
    t0 = time.perf_counter()
    result = reconstruct(h, optics, cfg, init_params=init)
    p, s = score_amplitude(result.object_wave, truth)
    rec = dict(method=kind, sample=name, iterations=cfg.iterations, psnr_db=p, ssim=s, seed=cfg.seed)
    rec["wall_time_s"] = time.perf_counter() - t0
    return rec


def run_transfer_experiment(samples, optics, cfg, retrain_iterations=500, sigma=0.0, noise_seed=0, checkpoint_root=None, jobs=1):
    """Transfer-learning scenarios on four same-type simulated samples.

    ``samples`` are ObjectTransmittance targets S1..S4. S1 is reconstructed
    with ``cfg.iterations`` intervals ("one-shot"); then, for S2..S4:

    * ``frozen``: the S1 generator applied without training (scenario I);
    * ``retrain``: random initialization, ``retrain_iterations`` intervals (II);
    * ``one-shot+retrain``: S1 generator as the starting point, same budget (III).

    With ``checkpoint_root``, every reconstruction writes its periodic
    checkpoints to ``checkpoint_root/<method>_<sample>``.
    """
    if len(samples) < 2:
        raise ValueError("need the source sample and at least one target sample")
    names = [f"S{i + 1}" for i in range(len(samples))]
    holos = [_observe(t, optics, sigma, noise_seed) for t in samples]

    def ckpt(kind, name, c):
        if checkpoint_root is None:
            return replace(c, checkpoint_dir=None)
        return replace(c, checkpoint_dir=str(Path(checkpoint_root) / f"{kind}_{name}"))

    report = MetricReport(
        "transfer",
        config=config_echo(optics, cfg, retrain_iterations=retrain_iterations, sigma=sigma, noise_seed=noise_seed, samples=names),
    )
    t0 = time.perf_counter()
    source = reconstruct(holos[0], optics, ckpt("one-shot", names[0], cfg))
    p, s = score_amplitude(source.object_wave, samples[0].attenuation)
    report.add(method="one-shot", sample=names[0], iterations=cfg.iterations, psnr_db=p, ssim=s, wall_time_s=time.perf_counter() - t0, seed=cfg.seed)

    short = replace(cfg, iterations=retrain_iterations)
    for h, t, name in zip(holos[1:], samples[1:], names[1:]):
        t1 = time.perf_counter()
        p, s = score_amplitude(apply_generator(source.generator_params, h, optics), t.attenuation)
        report.add(method="frozen", sample=name, iterations=0, psnr_db=p, ssim=s, wall_time_s=time.perf_counter() - t1, seed=cfg.seed)

    work = []
    for h, t, name in zip(holos[1:], samples[1:], names[1:]):
        work.append(("retrain", h, optics, ckpt("retrain", name, short), t.attenuation, None, name))
        work.append(("one-shot+retrain", h, optics, ckpt("one-shot+retrain", name, short), t.attenuation, source.generator_params, name))
    for rec in _map(_transfer_job, work, jobs):
        report.add(**rec)
    return report
