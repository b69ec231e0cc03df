import json

import numpy as np
import pytest
import torch

from holo.exceptions import CorruptCheckpointError, DimensionError
from holo.nets import (
    SpecNetwork,
    build_discriminator,
    build_generator,
    count_params,
    discriminator_layout,
    flatten_params,
    forward_discriminator,
    forward_generator,
    generator_layout,
    load_params,
    persist_params,
)

from oracles import central_difference

# (kind, kernel, c_in, c_out, normalization, activation, sr) transcribed row by row
GENERATOR_TABLE = [
    ("conv2d", 5, 2, 32, "batch_norm", "relu", False),
    ("conv2d", 3, 32, 32, "batch_norm", "relu", False),
    ("max_pool2d",),
    ("conv2d", 3, 32, 64, "batch_norm", "relu", False),
    ("conv2d", 3, 64, 64, "batch_norm", "relu", False),
    ("max_pool2d",),
    ("conv2d", 3, 64, 128, "batch_norm", "relu", False),
    ("conv2d", 3, 128, 128, "batch_norm", "relu", False),
    ("max_pool2d",),
    ("conv2d", 3, 128, 128, "batch_norm", "relu", False),
    ("conv2d", 3, 128, 16, "batch_norm", "tanh", False),
    ("conv2d", 3, 16, 128, "batch_norm", "relu", False),
    ("conv2d", 3, 128, 128, "batch_norm", "relu", False),
    ("transposed_conv2d",),
    ("conv2d", 3, 128, 64, "batch_norm", "relu", False),
    ("conv2d", 3, 64, 64, "batch_norm", "relu", False),
    ("transposed_conv2d",),
    ("conv2d", 3, 64, 32, "batch_norm", "relu", False),
    ("conv2d", 3, 32, 32, "batch_norm", "relu", False),
    ("transposed_conv2d",),
    ("conv2d", 3, 32, 16, "batch_norm", "relu", True),
    ("conv2d", 3, 16, 16, "batch_norm", "relu", True),
    ("transposed_conv2d", True),
    ("conv2d", 3, 16, 16, "batch_norm", "relu", False),
    ("conv2d", 3, 16, 16, "batch_norm", "relu", False),
    ("conv2d", 3, 16, 2, "none", "none", False),
]

DISCRIMINATOR_TABLE = [row for row in GENERATOR_TABLE[:10]] + [
    ("conv2d", 3, 128, 16, "batch_norm", "none", False),
    ("global_pool2d",),
    ("dense", 1, 16, 1, "none", "none", False),
]


def audit(layers, table):
    assert len(layers) == len(table)
    for spec, row in zip(layers, table):
        assert spec.kind == row[0], spec
        if spec.kind in ("conv2d", "dense"):
            _, k, cin, cout, norm, act, sr = row
            assert spec.kernel == (k, k)
            assert spec.channels == (cin, cout)
            assert spec.normalization == norm
            assert spec.activation == act
            assert spec.super_resolution == sr
        elif spec.kind == "transposed_conv2d":
            assert spec.stride == 2
            assert spec.super_resolution == (len(row) > 1)


def test_generator_matches_table():
    audit(generator_layout(sr_enabled=True), GENERATOR_TABLE)


def test_generator_without_sr_drops_starred_rows():
    table = [r for r in GENERATOR_TABLE if not (len(r) > 1 and r[-1] is True)]
    # the first tail conv takes the 32 channels left by the last unstarred upsampler
    table[table.index(("conv2d", 3, 16, 16, "batch_norm", "relu", False))] = ("conv2d", 3, 32, 16, "batch_norm", "relu", False)
    audit(generator_layout(sr_enabled=False), table)


def test_discriminator_matches_table():
    audit(discriminator_layout(), DISCRIMINATOR_TABLE)


@pytest.mark.parametrize("sr,factor", [(True, 2), (False, 1)])
def test_generator_output_size(sr, factor):
    _, params = build_generator(sr, seed=0)
    out = forward_generator(params, np.random.default_rng(0).normal(size=(2, 64, 64)))
    assert out.shape == (1, 2, 64 * factor, 64 * factor)
    assert np.isfinite(out).all()


def test_upsampler_count():
    layers = generator_layout(True)
    assert sum(s.kind == "transposed_conv2d" for s in layers) == 4
    assert sum(s.kind == "max_pool2d" for s in layers) == 3


def test_generator_rejects_non_multiple_of_8():
    _, params = build_generator(True, seed=0)
    with pytest.raises(DimensionError):
        forward_generator(params, np.zeros((2, 20, 24)))


def test_discriminator_scalar_output():
    _, params = build_discriminator(seed=0)
    x = np.random.default_rng(1).normal(size=(2, 2, 256, 256))
    assert forward_discriminator(params, x).shape == (2,)


def test_discriminator_zero_params():
    _, params = build_discriminator(seed=0)
    for v in params.entries.values():
        v[...] = 0.0
    score = forward_discriminator(params, np.random.default_rng(2).normal(size=(2, 32, 32)))
    assert score[0] == 0.0
    assert torch.sigmoid(torch.tensor(score[0])).item() == 0.5


def test_seed_determinism():
    a = flatten_params(build_generator(True, seed=5)[1])
    b = flatten_params(build_generator(True, seed=5)[1])
    c = flatten_params(build_generator(True, seed=6)[1])
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    d1 = flatten_params(build_discriminator(seed=3)[1])
    assert np.array_equal(d1, flatten_params(build_discriminator(seed=3)[1]))


def test_eval_determinism():
    _, params = build_generator(True, seed=1)
    x = np.random.default_rng(3).normal(size=(2, 32, 32))
    assert np.array_equal(forward_generator(params, x), forward_generator(params, x))


def _table_param_count(table):
    total = 0
    for row in table:
        if row[0] in ("conv2d", "dense"):
            _, k, cin, cout, norm, _, _ = row
            total += k * k * cin * cout + cout + (4 * cout if norm == "batch_norm" else 0)
    return total


def test_flatten_length_matches_analytic_count():
    layers, params = build_generator(True, seed=0)
    # transposed convs: 2x2 kernels, channel-preserving
    ups = sum(2 * 2 * c * c + c for c in (128, 64, 32, 16))
    assert flatten_params(params).size == _table_param_count(GENERATOR_TABLE) + ups == count_params(layers)
    dlayers, dparams = build_discriminator(seed=0)
    assert flatten_params(dparams).size == _table_param_count(DISCRIMINATOR_TABLE) == count_params(dlayers)


def test_checkpoint_round_trip(tmp_path):
    layers, params = build_generator(True, seed=2)
    path = persist_params(params, tmp_path / "ckpt")
    loaded = load_params(path, expected=layers)
    assert list(loaded.entries) == list(params.entries)
    for k in params.entries:
        assert loaded.entries[k].tobytes() == params.entries[k].tobytes()
    assert np.array_equal(flatten_params(loaded), flatten_params(params))
    manifest = json.loads((path / "manifest.json").read_text())
    assert manifest["meta"]["seed"] == 2


def test_checkpoint_size(tmp_path):
    layers, params = build_generator(True, seed=0)
    path = persist_params(params, tmp_path / "g")
    blobs = sum(p.stat().st_size for p in path.iterdir() if p.suffix == ".f32")
    manifest = (path / "manifest.json").stat().st_size
    expected = 4 * count_params(layers) + manifest
    total = blobs + manifest
    assert abs(total - expected) <= 0.05 * expected


def test_load_into_other_architecture_fails(tmp_path):
    _, dparams = build_discriminator(seed=0)
    path = persist_params(dparams, tmp_path / "d")
    with pytest.raises(CorruptCheckpointError):
        load_params(path, expected=generator_layout(True))
    net = SpecNetwork(generator_layout(True))
    before = {k: v.clone() for k, v in net.state_dict().items()}
    with pytest.raises(CorruptCheckpointError):
        net.set_params(load_params(path))
    for k, v in net.state_dict().items():
        assert torch.equal(v, before[k])


def test_truncated_blob(tmp_path):
    _, params = build_discriminator(seed=0)
    path = persist_params(params, tmp_path / "d")
    blob = sorted(path.glob("*.f32"))[0]
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(CorruptCheckpointError):
        load_params(path)


def test_generator_gradient_finite_difference():
    """d(sum of output)/d(weight) against central differences at 16x16, float64."""
    torch.manual_seed(0)
    net = SpecNetwork(generator_layout(True)).reset_parameters(4).double()
    x = torch.randn(1, 2, 16, 16, dtype=torch.float64)
    weights = [net.blocks["enc1"].conv.weight, net.blocks["dec3"].conv.weight, net.blocks["out"].conv.weight]
    idx = [(0, 1, 2, 2), (5, 7, 1, 0), (1, 3, 0, 2)]
    out = net(x).sum()
    grads = torch.autograd.grad(out, weights)
    for w, g, i in zip(weights, grads, idx):

        def f(v, w=w, i=i):
            with torch.no_grad():
                old = w[i].item()
                w[i] = float(v[0])
                val = net(x).sum().item()
                w[i] = old
            return val

        fd = central_difference(f, np.array([w[i].item()]), 1e-6)[0]
        assert abs(g[i].item() - fd) <= 1e-3 * max(abs(fd), 1e-6)
