"""Reading and writing complex fields, holograms, masks and images.

``HCF1`` complex-field layout::

    bytes 0-3    b"HCF1"
    bytes 4-7    height, uint32 little-endian
    bytes 8-11   width, uint32 little-endian
    then height*width interleaved (re, im) float32 little-endian, row-major
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import HoloError

__all__ = [
    "write_hcf",
    "read_hcf",
    "write_image",
    "read_image",
    "write_hologram",
    "read_hologram",
    "write_mask",
    "read_mask",
    "write_phase",
    "phase_to_uint16",
    "atomic_write_bytes",
]

_MAGIC = b"HCF1"


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_hcf(path, field):
    field = np.asarray(field)
    if field.ndim != 2:
        raise HoloError(f"HCF1 stores 2-D fields, got shape {field.shape}")
    h, w = field.shape
    body = np.empty((h, w, 2), dtype="<f4")
    body[..., 0] = field.real
    body[..., 1] = field.imag
    atomic_write_bytes(path, _MAGIC + struct.pack("<II", h, w) + body.tobytes())


def read_hcf(path):
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != _MAGIC:
        raise HoloError(f"{path} is not an HCF1 file")
    h, w = struct.unpack("<II", data[4:12])
    expected = 12 + 8 * h * w
    if len(data) != expected:
        raise HoloError(f"{path}: expected {expected} bytes for {h}x{w}, found {len(data)}")
    body = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2)
    return body[..., 0].astype(np.complex64) + 1j * body[..., 1].astype(np.complex64)


def _write_pgm(path, arr):
    arr = np.asarray(arr)
    maxval = 65535 if arr.dtype == np.uint16 else 255
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    body = arr.astype(">u2").tobytes() if maxval > 255 else arr.astype(np.uint8).tobytes()
    atomic_write_bytes(path, header + body)


def write_image(path, arr):
    """Write a ``uint8`` or ``uint16`` grayscale array as PNG or PGM (by suffix)."""
    arr = np.asarray(arr)
    if arr.dtype not in (np.uint8, np.uint16):
        raise HoloError(f"images must be uint8 or uint16, got {arr.dtype}")
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        _write_pgm(path, arr)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray(arr.astype(np.uint16) if arr.dtype == np.uint16 else arr)
    tmp = path.with_name(path.name + ".tmp")
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_image(path):
    """Read a grayscale image as float64 in [0, 1] (scaled by the bit depth)."""
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise HoloError(f"cannot read image {path}: {exc}") from exc
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        depth = 65535.0
    else:
        arr = np.asarray(img.convert("L"), dtype=np.float64)
        depth = 255.0
    return arr / depth


def write_hologram(path, h, bits=16):
    """Store an intensity image scaled so its maximum maps to full range."""
    h = np.asarray(h, dtype=np.float64)
    top = 65535 if bits == 16 else 255
    peak = h.max() if h.max() > 0 else 1.0
    q = np.round(np.clip(h / peak, 0, 1) * top)
    write_image(path, q.astype(np.uint16 if bits == 16 else np.uint8))


def read_hologram(path):
    """Read an intensity image and normalize it to unit mean."""
    from .optics import normalize_hologram

    return normalize_hologram(read_image(path))


def write_mask(path, mask):
    """8-bit mask image: 255 on background (mask=1), 0 on foreground."""
    write_image(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


def read_mask(path):
    return (read_image(path) > 0.5).astype(np.uint8)


def phase_to_uint16(phase):
    """Map (-pi, pi] linearly onto 0..65535."""
    return np.round((np.asarray(phase) + np.pi) / (2 * np.pi) * 65535).clip(0, 65535).astype(np.uint16)


def write_phase(path, phase):
    write_image(path, phase_to_uint16(phase))


def write_amplitude(path, amplitude):
    """16-bit amplitude image; values are clipped to [0, 1]."""
    write_image(path, np.round(np.clip(amplitude, 0, 1) * 65535).astype(np.uint16))
