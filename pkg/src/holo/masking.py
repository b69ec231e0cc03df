"""Adaptive background masking: two-cluster K-means proposals accepted by simulated annealing."""

import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionError, ParameterError

__all__ = ["MaskState", "initial_mask_state", "segmentation_feature", "kmeans2_segment", "masked_mse", "sa_update", "downsample_mask", "upsample_mask"]


@dataclass(frozen=True)
class MaskState:
    """Annealing state. ``mask`` is 1 on the background."""

    mask: np.ndarray
    temperature: float
    step: int = 0
    last_delta: float = 0.0
    accepted: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")


def initial_mask_state(shape, temperature):
    """All-background mask at step 0."""
    return MaskState(np.ones(shape, dtype=np.uint8), float(temperature), 0, 0.0, False)


def _border(a):
    return np.concatenate([a[0, :], a[-1, :], a[1:-1, 0], a[1:-1, -1]])


def segmentation_feature(field, kind="amplitude"):
    """Real image handed to K-means for a complex object wave.

    ``"amplitude"`` is ``|O|``. ``"contrast"`` is ``|O - b|`` where ``b`` is
    the background value, estimated as the median of the border pixels (real
    and imaginary parts separately). For a real positive field with ``b = 1``
    this is ``1 - |O|``, so amplitude objects split the same way, while
    phase-only objects, which have flat amplitude, still separate.
    """
    f = np.asarray(field)
    if f.ndim != 2:
        raise DimensionError(f"expected a 2-D field, got shape {f.shape}")
    if kind == "amplitude":
        return np.abs(f).astype(np.float64)
    if kind != "contrast":
        raise ParameterError(f"kind must be 'amplitude' or 'contrast', got {kind!r}")
    edge = _border(f)
    b = np.median(edge.real) + 1j * np.median(edge.imag)
    return np.abs(f - b).astype(np.float64)


def kmeans2_segment(amplitude, tol=1e-6, max_iter=50):
    """Split an amplitude image into background (1) and foreground (0).

    One-dimensional Lloyd iterations with centroids initialised at the 10th
    and 90th percentiles. The background is whichever cluster holds most of
    the border pixels. A constant image is all background.
    """
    a = np.asarray(amplitude, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D amplitude image, got shape {a.shape}")
    c = np.percentile(a, [10.0, 90.0])
    if c[1] - c[0] <= 0:
        lo, hi = a.min(), a.max()
        if hi - lo <= 0:
            return np.ones(a.shape, dtype=np.uint8)
        c = np.array([lo, hi])
    flat = a.ravel()
    for _ in range(max_iter):
        labels = np.abs(flat - c[1]) < np.abs(flat - c[0])
        new = c.copy()
        if (~labels).any():
            new[0] = flat[~labels].mean()
        if labels.any():
            new[1] = flat[labels].mean()
        moved = np.abs(new - c).max()
        c = new
        if moved < tol:
            break
    labels = (np.abs(a - c[1]) < np.abs(a - c[0])).astype(np.uint8)
    if labels.min() == labels.max():
        return np.ones(a.shape, dtype=np.uint8)
    border = _border(labels)
    bg_label = 1 if border.sum() * 2 >= border.size else 0
    return (labels == bg_label).astype(np.uint8)


def masked_mse(H, Hhat, mask):
    """Mean of ``(H - Hhat)**2`` over pixels where ``mask`` is 1 (0 if none)."""
    H = np.asarray(H, dtype=np.float64)
    Hhat = np.asarray(Hhat, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if H.shape != Hhat.shape or H.shape != mask.shape:
        raise DimensionError(f"shape mismatch: {H.shape}, {Hhat.shape}, {mask.shape}")
    n = mask.sum()
    if n == 0:
        return 0.0
    return float(((H - Hhat) ** 2)[mask].sum() / n)


def sa_update(state, proposal, H, Hhat, rng_seed):
    """One annealing step on a mask proposal.

    A proposal that lowers the background MSE is always taken. A worse one is
    taken with probability ``exp(-(new - old) / T)`` using the current
    temperature. Afterwards the temperature is divided by ``ln(1 + t)`` for
    the new step ``t >= 2`` (``ln 2 < 1`` would raise it at ``t = 1``).
    """
    proposal = np.asarray(proposal).astype(np.uint8)
    old = masked_mse(H, Hhat, state.mask)
    new = masked_mse(H, Hhat, proposal)
    if new < old:
        accept = True
    else:
        u = np.random.default_rng(rng_seed).random()
        accept = bool(u <= math.exp(-(new - old) / state.temperature))
    t = state.step + 1
    temperature = state.temperature / math.log1p(t) if t >= 2 else state.temperature
    temperature = max(temperature, sys.float_info.min)  # keep T > 0 on very long runs
    return replace(
        state,
        mask=proposal.copy() if accept else state.mask,
        temperature=temperature,
        step=t,
        last_delta=new if accept else old,
        accepted=accept,
    )


def downsample_mask(mask, factor):
    """Background where the whole ``factor x factor`` block is background."""
    if factor == 1:
        return np.asarray(mask)
    m = np.asarray(mask)
    h, w = m.shape
    return m.reshape(h // factor, factor, w // factor, factor).min(axis=(1, 3))


def upsample_mask(mask, factor):
    """Nearest-neighbour upsampling."""
    if factor == 1:
        return np.asarray(mask)
    return np.repeat(np.repeat(np.asarray(mask), factor, axis=0), factor, axis=1)
