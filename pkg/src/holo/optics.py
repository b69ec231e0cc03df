"""Scalar wave optics for digital in-line holography.

Complex fields are plain ``complex128`` arrays of shape ``(height, width)`` and
holograms are non-negative ``float64`` arrays of the same shape. All lengths are
in micrometers.

FFT convention: numpy's unnormalized forward transform and ``1/(h*w)`` inverse,
frequencies laid out as returned by :func:`numpy.fft.fftfreq` (negative
frequencies in the upper half of each axis).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DimensionError, HoloError, ParameterError

__all__ = [
    "OpticsConfig",
    "TransferFunction",
    "ObjectTransmittance",
    "TargetSpec",
    "frequency_grid",
    "transfer_function",
    "propagate",
    "form_hologram",
    "back_propagate",
    "add_noise",
    "normalize_hologram",
    "synthesize_target",
    "TARGET_PATTERNS",
]


@dataclass(frozen=True)
class OpticsConfig:
    """Geometry of the in-line setup.

    Parameters
    ----------
    wavelength_um : float
        Illumination wavelength.
    pixel_um : float
        Sensor pixel pitch (square pixels).
    z_um : float
        Object-to-sensor distance.
    height, width : int
        Grid size in pixels.
    sqrt_input : bool
        Back-propagate ``sqrt(H)`` instead of ``H`` when building the
        generator input.
    """

    wavelength_um: float = 0.532
    pixel_um: float = 2.0
    z_um: float = 5500.0
    height: int = 256
    width: int = 256
    sqrt_input: bool = False

    def __post_init__(self):
        if not self.wavelength_um > 0:
            raise ConfigurationError(f"wavelength_um must be > 0, got {self.wavelength_um}")
        if not self.pixel_um > 0:
            raise ConfigurationError(f"pixel_um must be > 0, got {self.pixel_um}")
        if not np.isfinite(self.z_um):
            raise ConfigurationError(f"z_um must be finite, got {self.z_um}")
        if int(self.height) <= 0 or int(self.width) <= 0:
            raise ConfigurationError(f"grid must be positive, got {self.height}x{self.width}")

    @property
    def shape(self):
        return (int(self.height), int(self.width))

    def with_shape(self, shape):
        """Copy of this configuration on a different grid."""
        return OpticsConfig(
            self.wavelength_um, self.pixel_um, self.z_um, int(shape[0]), int(shape[1]), self.sqrt_input
        )

    def evanescent_fraction(self):
        """Fraction of the discrete frequency grid that does not propagate."""
        fy, fx = frequency_grid(self)
        return float(np.mean(self.wavelength_um**2 * (fx**2 + fy**2) > 1.0))


@dataclass(frozen=True)
class TransferFunction:
    values: np.ndarray
    evanescent_mask: np.ndarray


def frequency_grid(cfg):
    """Return ``(fy, fx)`` as broadcastable 2-D arrays in cycles per micrometer."""
    fy = np.fft.fftfreq(cfg.shape[0], d=cfg.pixel_um)[:, None]
    fx = np.fft.fftfreq(cfg.shape[1], d=cfg.pixel_um)[None, :]
    return fy, fx


def transfer_function(cfg, z):
    """Angular-spectrum transfer function for propagation over distance ``z``.

    Evanescent frequencies, where ``(lambda*fx)**2 + (lambda*fy)**2 > 1``, are
    zeroed so that the inverse stays bounded.
    """
    fy, fx = frequency_grid(cfg)
    lam = cfg.wavelength_um
    arg = 1.0 - (lam * fx) ** 2 - (lam * fy) ** 2
    evanescent = arg < 0
    kz = np.sqrt(np.where(evanescent, 0.0, arg))
    # reduce the phase modulo 2*pi before exponentiating; z/lambda is ~1e4 cycles
    cycles = np.mod(z / lam * kz, 1.0)
    values = np.exp(2j * np.pi * cycles)
    values[evanescent] = 0.0
    return TransferFunction(values=values, evanescent_mask=evanescent.astype(np.uint8))


def _check_field(field, cfg):
    field = np.asarray(field)
    if field.ndim != 2:
        raise DimensionError(f"expected a 2-D field, got shape {field.shape}")
    if field.shape != cfg.shape:
        raise DimensionError(f"field shape {field.shape} does not match configuration {cfg.shape}")
    return field


def propagate(field, cfg, z):
    """Propagate a complex field over distance ``z`` (negative = backwards)."""
    field = _check_field(field, cfg)
    tf = transfer_function(cfg, z)
    return np.fft.ifft2(tf.values * np.fft.fft2(field.astype(np.complex128)))


def normalize_hologram(values):
    """Divide an intensity image by its mean."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean()
    if not mean > 0:
        raise ParameterError("hologram has non-positive mean intensity")
    return values / mean


def form_hologram(t, cfg):
    """Sensor-plane intensity of a transmittance under unit plane-wave illumination.

    ``t`` may be an :class:`ObjectTransmittance` or a complex array. The result
    is normalized to unit mean.
    """
    if isinstance(t, ObjectTransmittance):
        t = t.field()
    sensor = propagate(np.asarray(t, dtype=np.complex128), cfg, cfg.z_um)
    return normalize_hologram(np.abs(sensor) ** 2)


def back_propagate(h, cfg):
    """Back-propagate a hologram to the object plane as if it were a real field."""
    h = _check_field(h, cfg).astype(np.float64)
    if cfg.sqrt_input:
        h = np.sqrt(np.clip(h, 0.0, None))
    return propagate(h.astype(np.complex128), cfg, -cfg.z_um)


def add_noise(h, sigma, seed):
    """Add white Gaussian noise with standard deviation ``sigma`` on a 0-255 scale.

    The hologram is scaled so its maximum maps to 255, perturbed, clamped to
    [0, 255], scaled back and renormalized to unit mean.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    h = np.asarray(h, dtype=np.float64)
    if sigma == 0:
        return h.copy()
    scale = 255.0 / h.max()
    rng = np.random.default_rng(seed)
    noisy = np.clip(h * scale + rng.normal(0.0, sigma, size=h.shape), 0.0, 255.0)
    return normalize_hologram(noisy / scale)


# --------------------------------------------------------------------------
# synthetic targets


@dataclass
class ObjectTransmittance:
    """Thin-object transmittance ``attenuation * exp(1j * phase_shift)``.

    ``truth_mask`` is 1 on the background (no object) and 0 on the object.
    """

    attenuation: np.ndarray
    phase_shift: np.ndarray
    truth_mask: np.ndarray

    def field(self):
        return self.attenuation * np.exp(1j * self.phase_shift)

    @property
    def shape(self):
        return self.attenuation.shape


@dataclass
class TargetSpec:
    """Recipe for a synthetic object.

    ``pattern`` is one of :data:`TARGET_PATTERNS` or a path to a bitmap whose
    bright pixels mark the object. ``phase`` and ``attenuation`` are the values
    taken inside the object; the background is always 1+0j.
    """

    pattern: str = "usaf_bars"
    height: int = 256
    width: int = 256
    phase: float = np.pi / 2
    attenuation: float = 1.0
    radius: float | None = None
    text: str = "DH"
    seed: int = 0
    extra: dict = field(default_factory=dict)


def _usaf_bars(h, w, seed):
    """Groups of three horizontal and three vertical bars of shrinking width."""
    img = np.zeros((h, w), dtype=bool)
    s = min(h, w) / 256.0
    widths = [max(1, int(round(v * s))) for v in (12, 9, 7, 5, 4, 3)]
    # two columns of elements
    x0, y0 = int(20 * s), int(18 * s)
    col_x = [x0, int(w / 2 + 6 * s)]
    y = [y0, y0]
    for i, bw in enumerate(widths):
        c = i % 2
        cx, cy = col_x[c], y[c]
        length = 5 * bw
        for k in range(3):  # horizontal bars
            r = cy + 2 * k * bw
            img[r : r + bw, cx : cx + length] = True
        vx = cx + length + 2 * bw
        for k in range(3):  # vertical bars
            cc = vx + 2 * k * bw
            img[cy : cy + length, cc : cc + bw] = True
        y[c] = cy + length + int(14 * s)
    return img


def _disc(h, w, radius):
    if radius is None:
        radius = min(h, w) / 6
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    if radius <= 0:
        return np.zeros((h, w), dtype=bool)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def _text(h, w, text):
    from PIL import Image, ImageDraw, ImageFont

    size = max(8, int(min(h, w) * 0.45))
    font = ImageFont.load_default(size=size)
    img = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(img)
    left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
    draw.text(((w - (right - left)) / 2 - left, (h - (bottom - top)) / 2 - top), text, fill=255, font=font)
    return np.asarray(img) > 127


def _cells(h, w, seed):
    """Cell-like field of non-overlapping ellipses."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w), dtype=bool)
    s = min(h, w)
    n = 0
    for _ in range(400):
        if n >= 7:
            break
        a = rng.uniform(0.06, 0.11) * s
        b = a * rng.uniform(0.6, 1.0)
        cy = rng.uniform(0.15, 0.85) * h
        cx = rng.uniform(0.15, 0.85) * w
        th = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
        v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
        blob = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        grown = (u / (a + 3)) ** 2 + (v / (b + 3)) ** 2 <= 1.0
        if np.any(grown & img):
            continue
        # nucleus: a thin ring leaves the interior visible
        img |= blob & ~((u / (0.35 * a)) ** 2 + (v / (0.35 * b)) ** 2 <= 1.0)
        n += 1
    return img


def _dendrite(h, w, seed):
    """Tree-shaped branching pattern grown from a random root."""
    from PIL import Image, ImageDraw

    rng = np.random.default_rng(seed)
    img = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(img)
    s = min(h, w)
    root = (w * rng.uniform(0.35, 0.65), h * rng.uniform(0.35, 0.65))
    stack = [(root, rng.uniform(0, 2 * np.pi), 0.22 * s, max(2, int(0.025 * s)), 0)]
    while stack:
        (x, y), ang, length, width, depth = stack.pop()
        if depth > 5 or length < 3:
            continue
        x2 = x + length * np.cos(ang)
        y2 = y + length * np.sin(ang)
        draw.line([(x, y), (x2, y2)], fill=255, width=int(width))
        for _ in range(2):
            stack.append(
                (
                    (x2, y2),
                    ang + rng.uniform(-0.8, 0.8),
                    length * rng.uniform(0.55, 0.75),
                    max(1, int(round(width * 0.8))),
                    depth + 1,
                )
            )
    return np.asarray(img) > 127


def _bitmap(path, h, w):
    from PIL import Image

    try:
        img = Image.open(path).convert("L")
    except OSError as exc:
        raise HoloError(f"cannot read target bitmap {path!r}: {exc}") from exc
    if img.size != (w, h):
        img = img.resize((w, h), Image.NEAREST)
    arr = np.asarray(img, dtype=np.float64)
    return arr > 0.5 * max(arr.max(), 1e-12)


TARGET_PATTERNS = ("usaf_bars", "disc", "text", "cells", "dendrite")


def synthesize_target(spec):
    """Build an :class:`ObjectTransmittance` from a :class:`TargetSpec`."""
    h, w = int(spec.height), int(spec.width)
    if not 0.0 <= spec.attenuation <= 1.0:
        raise ParameterError(f"attenuation must lie in [0, 1], got {spec.attenuation}")
    name = spec.pattern
    if name == "usaf_bars":
        support = _usaf_bars(h, w, spec.seed)
    elif name == "disc":
        support = _disc(h, w, spec.radius)
    elif name == "text":
        support = _text(h, w, spec.text)
    elif name == "cells":
        support = _cells(h, w, spec.seed)
    elif name == "dendrite":
        support = _dendrite(h, w, spec.seed)
    elif Path(name).suffix:
        support = _bitmap(name, h, w)
    else:
        raise ParameterError(f"unknown target pattern {name!r}; choose from {TARGET_PATTERNS} or a bitmap path")
    pattern = support.astype(np.float64)
    attenuation = 1.0 - (1.0 - spec.attenuation) * pattern
    phase = spec.phase * pattern
    return ObjectTransmittance(attenuation, phase, (~support).astype(np.uint8))
