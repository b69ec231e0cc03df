"""Loss terms for the generator and discriminator.

Every function accepts numpy arrays or torch tensors. Tensor inputs give a
differentiable tensor result; array inputs give a Python float.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import DimensionError, ParameterError

__all__ = [
    "LossWeights",
    "loss_autoencoder",
    "loss_background_tv",
    "loss_generator",
    "loss_discriminator",
]


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ParameterError(f"{name} must be finite and non-negative, got {v}")


def _to_tensor(x):
    if isinstance(x, torch.Tensor):
        return x, True
    return torch.as_tensor(np.asarray(x), dtype=torch.float64), False


def _out(value, is_tensor):
    return value if is_tensor else float(value)


def loss_autoencoder(H, Hhat):
    """Mean squared difference between captured and reproduced holograms."""
    H, t1 = _to_tensor(H)
    Hhat, t2 = _to_tensor(Hhat)
    if H.shape != Hhat.shape:
        raise DimensionError(f"hologram shapes differ: {tuple(H.shape)} vs {tuple(Hhat.shape)}")
    return _out(torch.mean((H - Hhat) ** 2), t1 or t2)


def _split_complex(field):
    """Return ``(2, h, w)`` real/imag stack from a complex or 2-channel input."""
    if isinstance(field, torch.Tensor):
        if field.is_complex():
            return torch.stack([field.real, field.imag]), True
        return field, True
    field = np.asarray(field)
    if np.iscomplexobj(field):
        field = np.stack([field.real, field.imag])
    return torch.as_tensor(field, dtype=torch.float64), False


def loss_background_tv(field, mask):
    """Squared forward-difference total variation of Re and Im over the background.

    ``field`` is a complex ``(h, w)`` array or a real ``(2, h, w)`` stack;
    ``mask`` is 1 on background pixels. Differences whose neighbour falls off
    the grid are skipped. The sum is divided by the number of background
    pixels; an empty background gives 0.
    """
    z, is_tensor = _split_complex(field)
    m = torch.as_tensor(mask if not isinstance(mask, np.ndarray) else mask.astype(np.float64))
    m = m.to(z.dtype)
    if z.shape[-2:] != m.shape:
        raise DimensionError(f"field {tuple(z.shape[-2:])} and mask {tuple(m.shape)} differ in shape")
    count = m.sum()
    if count.item() == 0:
        return _out(z.sum() * 0.0, is_tensor)
    dx = (z[..., :, 1:] - z[..., :, :-1]) ** 2  # neighbour to the right
    dy = (z[..., 1:, :] - z[..., :-1, :]) ** 2  # neighbour below
    total = (dx * m[:, :-1]).sum() + (dy * m[:-1, :]).sum()
    return _out(total / count, is_tensor)


def _score(x):
    if isinstance(x, torch.Tensor):
        return x, True
    return torch.as_tensor(float(x), dtype=torch.float64), False


def loss_generator(d_score_fake, H, Hhat, field, mask, weights=LossWeights()):
    """Non-saturating adversarial loss plus weighted hologram and background terms."""
    s, t0 = _score(d_score_fake)
    adv = -F.logsigmoid(s).mean()
    total = adv
    is_tensor = t0 or isinstance(H, torch.Tensor) or isinstance(Hhat, torch.Tensor)
    if weights.lambda1:
        total = total + weights.lambda1 * _as_t(loss_autoencoder(H, Hhat))
    if weights.lambda2 and mask is not None:
        total = total + weights.lambda2 * _as_t(loss_background_tv(field, mask))
    return _out(total, is_tensor)


def _as_t(v):
    return v if isinstance(v, torch.Tensor) else torch.as_tensor(v, dtype=torch.float64)


def loss_discriminator(d_score_real, d_score_fake):
    """Binary cross-entropy with real -> 1 and fake -> 0 on raw scores."""
    r, t1 = _score(d_score_real)
    f, t2 = _score(d_score_fake)
    # -log(1 - sigmoid(f)) == -logsigmoid(-f)
    return _out(-F.logsigmoid(r).mean() - F.logsigmoid(-f).mean(), t1 or t2)
