"""JSON run configuration shared by the command-line tools.

A run config has six sections; every key is optional and missing keys take
the defaults below. Unknown sections or keys are rejected, and validation
reports every offending key at once.

==========  ==========================================================
section     keys (default)
==========  ==========================================================
optics      wavelength_um (0.532), pixel_um (2.0), z_um (5500.0),
            height (256), width (256), sqrt_input (false)
train       iterations (3000), d_steps_per_interval (5), lr_g (1e-3),
            lr_betas ([0.9, 0.999]), lr_d (1e-4), seed (0),
            sr_enabled (true), use_gan (true), use_mask (true),
            tv_grid ("output"), checkpoint_every (100),
            init_checkpoint (null), init_discriminator_checkpoint (null)
loss        lambda1 (1.0), lambda2 (1.0)
mask        k_interval (100), t0_factor (0.1), feature ("amplitude")
noise       sigma (0.0), seed (0)
io          input (null), out_dir (null), truth (null)
==========  ==========================================================

Precedence, lowest to highest: built-in defaults, the config file, command
line flags, then the ``HOLO_SEED`` environment variable (which overrides
both ``train.seed`` and ``noise.seed``).
"""

import copy
import json
import os
from pathlib import Path

from .exceptions import ConfigurationError
from .objective import LossWeights
from .optics import OpticsConfig
from .trainer import TrainConfig

__all__ = ["DEFAULTS", "RunConfig", "load_config", "validate_config"]

DEFAULTS = {
    "optics": {
        "wavelength_um": 0.532,
        "pixel_um": 2.0,
        "z_um": 5500.0,
        "height": 256,
        "width": 256,
        "sqrt_input": False,
    },
    "train": {
        "iterations": 3000,
        "d_steps_per_interval": 5,
        "lr_g": 1e-3,
        "lr_betas": [0.9, 0.999],
        "lr_d": 1e-4,
        "seed": 0,
        "sr_enabled": True,
        "use_gan": True,
        "use_mask": True,
        "tv_grid": "output",
        "checkpoint_every": 100,
        "init_checkpoint": None,
        "init_discriminator_checkpoint": None,
    },
    "loss": {"lambda1": 1.0, "lambda2": 1.0},
    "mask": {"k_interval": 100, "t0_factor": 0.1, "feature": "amplitude"},
    "noise": {"sigma": 0.0, "seed": 0},
    "io": {"input": None, "out_dir": None, "truth": None},
}

_NUM = (int, float)
_TYPES = {
    "optics": {
        "wavelength_um": _NUM,
        "pixel_um": _NUM,
        "z_um": _NUM,
        "height": int,
        "width": int,
        "sqrt_input": bool,
    },
    "train": {
        "iterations": int,
        "d_steps_per_interval": int,
        "lr_g": _NUM,
        "lr_betas": list,
        "lr_d": _NUM,
        "seed": int,
        "sr_enabled": bool,
        "use_gan": bool,
        "use_mask": bool,
        "tv_grid": str,
        "checkpoint_every": int,
        "init_checkpoint": (str, type(None)),
        "init_discriminator_checkpoint": (str, type(None)),
    },
    "loss": {"lambda1": _NUM, "lambda2": _NUM},
    "mask": {"k_interval": int, "t0_factor": _NUM, "feature": str},
    "noise": {"sigma": _NUM, "seed": int},
    "io": {"input": (str, type(None)), "out_dir": (str, type(None)), "truth": (str, type(None))},
}


def _type_ok(value, types):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        return False
    return isinstance(value, types)


def validate_config(doc):
    """Merge ``doc`` over the defaults; raise listing every bad key."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    problems = []
    merged = copy.deepcopy(DEFAULTS)
    for section, body in doc.items():
        if section not in DEFAULTS:
            problems.append(f"{section}: unknown section")
            continue
        if not isinstance(body, dict):
            problems.append(f"{section}: must be an object")
            continue
        for key, value in body.items():
            if key not in DEFAULTS[section]:
                problems.append(f"{section}.{key}: unknown key")
            elif not _type_ok(value, _TYPES[section][key]):
                problems.append(f"{section}.{key}: bad type {type(value).__name__}")
            else:
                merged[section][key] = value
    problems.extend(_semantic_problems(merged))
    if problems:
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(problems))
    return merged


def _semantic_problems(m):
    out = []
    o, t = m["optics"], m["train"]
    for key in ("wavelength_um", "pixel_um", "z_um"):
        if not o[key] > 0:
            out.append(f"optics.{key}: must be > 0")
    for key in ("height", "width"):
        if o[key] < 1:
            out.append(f"optics.{key}: must be >= 1")
    if t["iterations"] < 0:
        out.append("train.iterations: must be >= 0")
    if t["d_steps_per_interval"] < 0:
        out.append("train.d_steps_per_interval: must be >= 0")
    for key in ("lr_g", "lr_d"):
        if not t[key] > 0:
            out.append(f"train.{key}: must be > 0")
    b = t["lr_betas"]
    if len(b) != 2 or not all(isinstance(x, _NUM) and 0 <= x < 1 for x in b):
        out.append("train.lr_betas: must be two numbers in [0, 1)")
    if t["tv_grid"] not in ("output", "captured"):
        out.append("train.tv_grid: must be 'output' or 'captured'")
    if t["checkpoint_every"] < 0:
        out.append("train.checkpoint_every: must be >= 0")
    for key in ("lambda1", "lambda2"):
        if m["loss"][key] < 0:
            out.append(f"loss.{key}: must be >= 0")
    if m["mask"]["k_interval"] < 1:
        out.append("mask.k_interval: must be >= 1")
    if not m["mask"]["t0_factor"] > 0:
        out.append("mask.t0_factor: must be > 0")
    if m["mask"]["feature"] not in ("amplitude", "contrast"):
        out.append("mask.feature: must be 'amplitude' or 'contrast'")
    if m["noise"]["sigma"] < 0:
        out.append("noise.sigma: must be >= 0")
    return out


class RunConfig:
    """Validated, fully merged run configuration."""

    def __init__(self, doc=None):
        self.data = validate_config(doc or {})

    def __getitem__(self, section):
        return self.data[section]

    def override(self, section, key, value):
        """Apply a command-line override (``None`` leaves the value unchanged)."""
        if value is None:
            return self
        doc = copy.deepcopy(self.data)
        doc[section][key] = value
        self.data = validate_config(doc)
        return self

    def apply_env(self, environ=None):
        environ = os.environ if environ is None else environ
        raw = environ.get("HOLO_SEED")
        if raw not in (None, ""):
            try:
                seed = int(raw)
            except ValueError:
                raise ConfigurationError(f"HOLO_SEED must be an integer, got {raw!r}") from None
            self.override("train", "seed", seed).override("noise", "seed", seed)
        return self

    def optics(self, shape=None):
        o = self.data["optics"]
        h, w = shape if shape is not None else (o["height"], o["width"])
        return OpticsConfig(o["wavelength_um"], o["pixel_um"], o["z_um"], int(h), int(w), sqrt_input=o["sqrt_input"])

    def train(self, checkpoint_dir=None):
        t = dict(self.data["train"])
        t["lr_betas"] = tuple(t["lr_betas"])
        return TrainConfig(
            **t,
            loss_weights=LossWeights(**self.data["loss"]),
            mask_interval_k=self.data["mask"]["k_interval"],
            t0_factor=self.data["mask"]["t0_factor"],
            mask_feature=self.data["mask"]["feature"],
            checkpoint_dir=checkpoint_dir,
        )

    def echo(self):
        """Effective configuration as a plain JSON-serializable dict."""
        return copy.deepcopy(self.data)

    def dumps(self):
        return json.dumps(self.data, indent=2, sort_keys=True)


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    return RunConfig(doc)
