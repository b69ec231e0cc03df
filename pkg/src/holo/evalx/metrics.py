"""Image quality metrics on [0, 1] images."""

import numpy as np
from scipy.ndimage import gaussian_filter

from ..exceptions import DimensionError, ParameterError

PSNR_CAP_DB = 99.0

__all__ = ["psnr", "ssim", "PSNR_CAP_DB", "to_unit_range", "match_grid"]


def to_unit_range(img):
    return np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)


def match_grid(img, shape):
    """Average-pool ``img`` by an integer factor so it matches ``shape``."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape == tuple(shape):
        return img
    fy, fx = img.shape[0] // shape[0], img.shape[1] // shape[1]
    if fy * shape[0] != img.shape[0] or fx * shape[1] != img.shape[1]:
        raise DimensionError(f"cannot pool {img.shape} onto {shape}")
    return img.reshape(shape[0], fy, shape[1], fx).mean(axis=(1, 3))


def _pair(a, b):
    a = to_unit_range(a)
    b = to_unit_range(b)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """Peak signal-to-noise ratio in dB with peak 1, capped at 99 dB."""
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


def ssim(a, b, sigma=1.5, k1=0.01, k2=0.03):
    """Mean structural similarity with an 11-tap Gaussian window (L = 1).

    Local statistics use population (biased) moments; the mean is taken
    over pixels at least one window radius away from the border.
    """
    a, b = _pair(a, b)
    radius = int(3.5 * sigma + 0.5)
    if min(a.shape) < 2 * radius + 1:
        raise ParameterError(f"images of shape {a.shape} are smaller than the {2 * radius + 1}-pixel window")

    def blur(x):
        return gaussian_filter(x, sigma, truncate=3.5)

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    c1, c2 = k1**2, k2**2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    smap = num / den
    r = radius
    return float(smap[r:-r, r:-r].mean())
