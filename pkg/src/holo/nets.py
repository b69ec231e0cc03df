"""Generator and discriminator networks.

Both networks are described declaratively as a list of :class:`LayerSpec`
records and executed by :class:`SpecNetwork`, a thin ``torch.nn.Module``.
Parameters travel between modules, checkpoints and the PCA tooling as
:class:`NetworkParams`, an ordered mapping of numpy ``float32`` arrays.
"""

import json
import math
import os
import shutil
import tempfile
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import CorruptCheckpointError, DimensionError

__all__ = [
    "LayerSpec",
    "NetworkParams",
    "SpecNetwork",
    "generator_layout",
    "discriminator_layout",
    "build_generator",
    "build_discriminator",
    "forward_generator",
    "forward_discriminator",
    "persist_params",
    "load_params",
    "flatten_params",
    "count_params",
]


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # conv2d | transposed_conv2d | max_pool2d | global_pool2d | dense
    kernel: tuple = (1, 1)
    channels: tuple = (0, 0)
    stride: int = 1
    normalization: str = "none"  # batch_norm | none
    activation: str = "none"  # relu | tanh | none
    super_resolution: bool = False


def _conv(name, k, cin, cout, act="relu", norm="batch_norm", sr=False):
    return LayerSpec(name, "conv2d", (k, k), (cin, cout), 1, norm, act, sr)


def _up(name, c, sr=False):
    # kernel 2x2 with stride 2 doubles the grid without overlap
    return LayerSpec(name, "transposed_conv2d", (2, 2), (c, c), 2, "none", "none", sr)


def _pool(name):
    return LayerSpec(name, "max_pool2d", (2, 2), (0, 0), 2)


def _encoder():
    return [
        _conv("enc1", 5, 2, 32),
        _conv("enc2", 3, 32, 32),
        _pool("pool1"),
        _conv("enc3", 3, 32, 64),
        _conv("enc4", 3, 64, 64),
        _pool("pool2"),
        _conv("enc5", 3, 64, 128),
        _conv("enc6", 3, 128, 128),
        _pool("pool3"),
        _conv("enc7", 3, 128, 128),
    ]


def generator_layout(sr_enabled=True):
    """Hourglass autoencoder; the ``sr*`` block doubles the output grid."""
    layers = _encoder() + [
        _conv("enc8", 3, 128, 16, act="tanh"),
        _conv("dec1", 3, 16, 128),
        _conv("dec2", 3, 128, 128),
        _up("up1", 128),
        _conv("dec3", 3, 128, 64),
        _conv("dec4", 3, 64, 64),
        _up("up2", 64),
        _conv("dec5", 3, 64, 32),
        _conv("dec6", 3, 32, 32),
        _up("up3", 32),
    ]
    if sr_enabled:
        layers += [
            _conv("sr1", 3, 32, 16, sr=True),
            _conv("sr2", 3, 16, 16, sr=True),
            _up("sr_up", 16, sr=True),
            _conv("tail1", 3, 16, 16),
        ]
    else:
        layers.append(_conv("tail1", 3, 32, 16))
    layers += [
        _conv("tail2", 3, 16, 16),
        _conv("out", 3, 16, 2, act="none", norm="none"),
    ]
    return layers


def discriminator_layout():
    return _encoder() + [
        _conv("enc8", 3, 128, 16, act="none"),
        LayerSpec("gpool", "global_pool2d"),
        LayerSpec("fc", "dense", (1, 1), (16, 1)),
    ]


@dataclass
class NetworkParams:
    """Ordered ``name -> float32 array`` mapping plus bookkeeping."""

    entries: "OrderedDict[str, np.ndarray]"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def shapes(self):
        return OrderedDict((k, tuple(v.shape)) for k, v in self.entries.items())

    def copy(self):
        return NetworkParams(OrderedDict((k, v.copy()) for k, v in self.entries.items()), dict(self.meta))


class BatchStatNorm2d(nn.BatchNorm2d):
    """Batch norm that always normalizes with the current batch statistics.

    The network is optimized on a single sample, so there is no separate
    inference distribution. Running statistics are still tracked while in
    training mode so that checkpoints are complete.
    """

    def forward(self, x):
        update = self.training and self.track_running_stats
        return F.batch_norm(
            x,
            self.running_mean if update else None,
            self.running_var if update else None,
            self.weight,
            self.bias,
            True,
            self.momentum,
            self.eps,
        )


class SpecNetwork(nn.Module):
    """Sequential network executing a list of :class:`LayerSpec`."""

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        self.blocks = nn.ModuleDict()
        cin = None
        for spec in self.layers:
            c_in, c_out = spec.channels
            if spec.kind in ("conv2d", "transposed_conv2d", "dense") and cin is not None and c_in != cin:
                raise DimensionError(f"layer {spec.name} expects {c_in} channels, previous layer gives {cin}")
            if spec.kind == "conv2d":
                k = spec.kernel[0]
                block = nn.Sequential(OrderedDict([("conv", nn.Conv2d(c_in, c_out, spec.kernel, padding=k // 2))]))
            elif spec.kind == "transposed_conv2d":
                block = nn.Sequential(
                    OrderedDict([("conv", nn.ConvTranspose2d(c_in, c_out, spec.kernel, stride=spec.stride))])
                )
            elif spec.kind == "dense":
                block = nn.Sequential(OrderedDict([("linear", nn.Linear(c_in, c_out))]))
            else:
                continue
            if spec.normalization == "batch_norm":
                block.add_module("norm", BatchStatNorm2d(c_out))
            if spec.activation == "relu":
                block.add_module("act", nn.ReLU())
            elif spec.activation == "tanh":
                block.add_module("act", nn.Tanh())
            self.blocks[spec.name] = block
            cin = c_out

    def forward(self, x):
        for spec in self.layers:
            if spec.kind == "max_pool2d":
                x = F.max_pool2d(x, spec.kernel, spec.stride)
            elif spec.kind == "global_pool2d":
                x = x.mean(dim=(2, 3))
            else:
                x = self.blocks[spec.name](x)
        return x

    @property
    def downsample_factor(self):
        return 2 ** sum(1 for s in self.layers if s.kind == "max_pool2d")

    @property
    def upsample_factor(self):
        ups = sum(1 for s in self.layers if s.kind == "transposed_conv2d")
        return 2**ups / self.downsample_factor

    def get_params(self, meta=None):
        sd = self.state_dict()
        entries = OrderedDict(
            (k, v.detach().cpu().numpy().astype(np.float32, copy=True))
            for k, v in sd.items()
            if not k.endswith("num_batches_tracked")
        )
        return NetworkParams(entries, dict(meta or {}))

    def set_params(self, params):
        """Load parameters; raises before touching any tensor if shapes differ."""
        own = self.get_params()
        if list(own.entries) != list(params.entries):
            raise CorruptCheckpointError("parameter names do not match the network architecture")
        for k, v in params.entries.items():
            if tuple(own.entries[k].shape) != tuple(v.shape):
                raise CorruptCheckpointError(f"shape mismatch for {k}: {v.shape} vs {own.entries[k].shape}")
        sd = self.state_dict()
        with torch.no_grad():
            for k, v in params.entries.items():
                sd[k].copy_(torch.from_numpy(np.asarray(v, dtype=np.float32)))
        return self

    def reset_parameters(self, seed):
        """Fan-in scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for name, block in self.blocks.items():
                for mod in block:
                    if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                        w = mod.weight
                        if isinstance(mod, nn.ConvTranspose2d):
                            fan_in = w.shape[0] * w.shape[2] * w.shape[3]
                        else:
                            fan_in = w[0].numel()
                        bound = math.sqrt(6.0 / fan_in)
                        w.copy_(torch.rand(w.shape, generator=gen, dtype=w.dtype) * 2 * bound - bound)
                        mod.bias.zero_()
                    elif isinstance(mod, nn.BatchNorm2d):
                        mod.reset_parameters()
        return self


def build_generator(sr_enabled=True, seed=0):
    """Return ``(layers, params)`` for the hologram-to-object-wave generator."""
    layers = generator_layout(sr_enabled)
    net = SpecNetwork(layers).reset_parameters(seed)
    return layers, net.get_params({"seed": int(seed), "iteration": 0, "network": "generator", "sr_enabled": bool(sr_enabled)})


def build_discriminator(seed=0):
    """Return ``(layers, params)`` for the hologram discriminator."""
    layers = discriminator_layout()
    net = SpecNetwork(layers).reset_parameters(seed)
    return layers, net.get_params({"seed": int(seed), "iteration": 0, "network": "discriminator"})


def _as_batch(x):
    x = torch.as_tensor(x, dtype=torch.float32)
    if x.ndim == 3:
        x = x[None]
    return x


def forward_generator(params, x, layers=None):
    """Evaluate the generator on a ``(2, h, w)`` or ``(n, 2, h, w)`` input.

    ``h`` and ``w`` must be divisible by 8.
    """
    if layers is None:
        layers = generator_layout(params.meta.get("sr_enabled", True))
    x = _as_batch(x)
    if x.shape[-1] % 8 or x.shape[-2] % 8:
        raise DimensionError(f"spatial dims must be divisible by 8, got {tuple(x.shape[-2:])}")
    net = SpecNetwork(layers).set_params(params).eval()
    with torch.no_grad():
        return net(x).numpy()


def forward_discriminator(params, x, layers=None):
    x = _as_batch(x)
    net = SpecNetwork(layers or discriminator_layout()).set_params(params).eval()
    with torch.no_grad():
        return net(x).numpy()[:, 0]


def count_params(layers):
    """Analytic parameter count, including normalization scale/shift and running stats."""
    total = 0
    for s in layers:
        cin, cout = s.channels
        if s.kind == "conv2d" or s.kind == "transposed_conv2d":
            total += s.kernel[0] * s.kernel[1] * cin * cout + cout
        elif s.kind == "dense":
            total += cin * cout + cout
        else:
            continue
        if s.normalization == "batch_norm":
            total += 4 * cout
    return total


def flatten_params(params):
    """Concatenate all tensors, in manifest order, into one float64 vector."""
    return np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in params.entries.values()])


def persist_params(params, path):
    """Write a checkpoint directory: ``manifest.json`` plus one f32 LE blob per tensor.

    The directory is assembled under a temporary name and renamed into place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=path.name + ".tmp", dir=path.parent))
    tensors = []
    for i, (name, value) in enumerate(params.entries.items()):
        blob = f"{i:03d}.f32"
        np.ascontiguousarray(value, dtype="<f4").tofile(tmp / blob)
        tensors.append({"name": name, "shape": list(value.shape), "dtype": "float32-le", "file": blob})
    manifest = {"format": "holo-checkpoint-1", "meta": params.meta, "tensors": tensors}
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1))
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)
    return path


def load_params(path, expected=None):
    """Read a checkpoint written by :func:`persist_params`.

    If ``expected`` (a NetworkParams or list of LayerSpec) is given, names and
    shapes are checked before anything is returned.
    """
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise CorruptCheckpointError(f"cannot read manifest in {path}: {exc}") from exc
    entries = OrderedDict()
    for t in manifest.get("tensors", []):
        shape = tuple(t["shape"])
        try:
            data = np.fromfile(path / t["file"], dtype="<f4")
        except OSError as exc:
            raise CorruptCheckpointError(f"missing blob {t['file']}") from exc
        if data.size != int(np.prod(shape)):
            raise CorruptCheckpointError(f"blob {t['file']} has {data.size} values, manifest says {shape}")
        entries[t["name"]] = data.reshape(shape).astype(np.float32)
    params = NetworkParams(entries, manifest.get("meta", {}))
    if expected is not None:
        if isinstance(expected, NetworkParams):
            ref = expected.shapes()
        else:
            ref = SpecNetwork(expected).get_params().shapes()
        if ref != params.shapes():
            raise CorruptCheckpointError(f"checkpoint {path} does not match the expected architecture")
    return params


def manifest_dict(params):
    return {"meta": params.meta, "layers": {k: list(v) for k, v in params.shapes().items()}}


def layers_to_json(layers):
    return [asdict(s) for s in layers]
