"""Single-hologram reconstruction loop.

Each *interval* performs one generator update, an optional mask update (every
``mask_interval_k`` intervals, after the generator step) and
``d_steps_per_interval`` discriminator updates against the frozen generator.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import masking
from .exceptions import ConfigurationError, DivergenceError, DimensionError
from .masking import MaskState
from .nets import SpecNetwork, build_discriminator, build_generator, discriminator_layout, generator_layout, load_params, persist_params
from .objective import LossWeights, loss_autoencoder, loss_background_tv, loss_discriminator
from .optics import OpticsConfig, back_propagate, transfer_function

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "ReconstructionResult", "TrainerState", "init_state", "run_interval", "reconstruct", "finalize", "apply_generator"]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    ``use_gan=False`` drops the discriminator entirely (plain autoencoder
    objective). ``use_mask=False`` disables masking and the background term.
    ``tv_grid`` selects whether the background TV acts on the generator's
    output grid (``"output"``, 2x with super-resolution) or on the captured
    grid (``"captured"``). ``mask_feature`` is the image K-means splits:
    ``"amplitude"`` (``|O|``) or ``"contrast"`` (distance from the estimated
    background value, which also separates phase-only objects).
    """

    iterations: int = 3000
    d_steps_per_interval: int = 5
    mask_interval_k: int = 100
    lr_g: float = 1e-3
    lr_betas: tuple = (0.9, 0.999)
    lr_d: float = 1e-4
    loss_weights: LossWeights = LossWeights()
    seed: int = 0
    sr_enabled: bool = True
    t0_factor: float = 0.1
    mask_feature: str = "amplitude"
    init_checkpoint: str | None = None
    init_discriminator_checkpoint: str | None = None
    use_gan: bool = True
    use_mask: bool = True
    tv_grid: str = "output"
    checkpoint_dir: str | None = None
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.mask_interval_k < 1:
            raise ConfigurationError(f"mask_interval_k must be >= 1, got {self.mask_interval_k}")
        if self.d_steps_per_interval < 0:
            raise ConfigurationError("d_steps_per_interval must be >= 0")
        if not (self.lr_g > 0 and self.lr_d > 0):
            raise ConfigurationError("learning rates must be > 0")
        if len(self.lr_betas) != 2 or not all(0 <= b < 1 for b in self.lr_betas):
            raise ConfigurationError(f"lr_betas must be two values in [0, 1), got {self.lr_betas}")
        if not self.t0_factor > 0:
            raise ConfigurationError("t0_factor must be > 0")
        if self.mask_feature not in ("amplitude", "contrast"):
            raise ConfigurationError(f"mask_feature must be 'amplitude' or 'contrast', got {self.mask_feature!r}")
        if self.tv_grid not in ("output", "captured"):
            raise ConfigurationError(f"tv_grid must be 'output' or 'captured', got {self.tv_grid!r}")


@dataclass
class ReconstructionResult:
    object_wave: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    final_mask: np.ndarray
    loss_history: list
    checkpoints: list
    reproduced_hologram: np.ndarray
    generator_params: object = None
    discriminator_params: object = None


@dataclass
class TrainerState:
    optics: OpticsConfig
    cfg: TrainConfig
    generator: SpecNetwork
    discriminator: SpecNetwork | None
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer | None
    net_input: torch.Tensor
    target: torch.Tensor
    transfer: torch.Tensor
    scale: int
    pad: tuple
    mask_state: MaskState | None = None
    interval: int = 0
    history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def _pad_amounts(n, m=8):
    extra = (-n) % m
    return extra // 2, extra - extra // 2


def _prepare_input(h, optics):
    """Reflect-pad to a multiple of 8 and back-propagate to the network input."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise DimensionError(f"hologram must be 2-D, got shape {h.shape}")
    py, px = _pad_amounts(h.shape[0]), _pad_amounts(h.shape[1])
    if any(py + px):
        h = np.pad(h, (py, px), mode="reflect")
    grid = optics.with_shape(h.shape)
    field0 = back_propagate(h, grid)
    net_input = torch.tensor(np.stack([field0.real, field0.imag])[None], dtype=torch.float32)
    return h, grid, net_input, (py, px)


def init_state(h, optics, cfg, init_params=None):
    """Prepare networks, optimizers and tensors for a hologram ``h``.

    ``init_params`` (NetworkParams) warm-starts the generator from memory and
    takes precedence over ``cfg.init_checkpoint``.
    """
    torch.manual_seed(cfg.seed)
    h, grid, net_input, (py, px) = _prepare_input(h, optics)

    _, gparams = build_generator(cfg.sr_enabled, cfg.seed)
    generator = SpecNetwork(generator_layout(cfg.sr_enabled)).set_params(gparams)
    if init_params is not None:
        generator.set_params(init_params)
    elif cfg.init_checkpoint:
        generator.set_params(load_params(cfg.init_checkpoint, expected=gparams))
    scale = 2 if cfg.sr_enabled else 1
    out_grid = OpticsConfig(
        optics.wavelength_um, optics.pixel_um / scale, optics.z_um, h.shape[0] * scale, h.shape[1] * scale
    )
    transfer = torch.tensor(transfer_function(out_grid, out_grid.z_um).values, dtype=torch.complex64)
    betas = tuple(cfg.lr_betas)
    opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.lr_g, betas=betas)

    discriminator = opt_d = None
    if cfg.use_gan:
        _, dparams = build_discriminator(cfg.seed + 1)
        discriminator = SpecNetwork(discriminator_layout()).set_params(dparams)
        if cfg.init_discriminator_checkpoint:
            discriminator.set_params(load_params(cfg.init_discriminator_checkpoint, expected=dparams))
        opt_d = torch.optim.Adam(discriminator.parameters(), lr=cfg.lr_d, betas=betas)

    mask_state = masking.initial_mask_state(h.shape, 1.0) if cfg.use_mask and cfg.loss_weights.lambda2 > 0 else None
    return TrainerState(
        mask_state=mask_state,
        optics=grid,
        cfg=cfg,
        generator=generator,
        discriminator=discriminator,
        opt_g=opt_g,
        opt_d=opt_d,
        net_input=net_input,
        target=torch.tensor(h[None, None], dtype=torch.float32),
        transfer=transfer,
        scale=scale,
        pad=(py, px),
    )


def _reproduce(state, out):
    """Object-plane output ``(1, 2, H, W)`` -> sensor intensity on the captured grid."""
    obj = torch.complex(out[:, 0], out[:, 1])
    sensor = torch.fft.ifft2(state.transfer * torch.fft.fft2(obj))
    intensity = (sensor.real**2 + sensor.imag**2)[:, None]
    if state.scale > 1:
        intensity = F.avg_pool2d(intensity, state.scale)
    return intensity


def _as_disc_input(intensity):
    return torch.cat([intensity, torch.zeros_like(intensity)], dim=1)


def _disc_scores(discriminator, real, fake):
    """Score captured and reproduced holograms as one batch of two.

    The last block is batch norm followed by global average pooling, so a
    batch of one would always score the normalization shift regardless of
    the input. Pairing the two holograms shares the statistics.
    """
    scores = discriminator(_as_disc_input(torch.cat([real, fake], dim=0)))
    return scores[0], scores[1]


def _tv_mask(state):
    m = state.mask_state.mask
    if state.cfg.tv_grid == "output":
        m = masking.upsample_mask(m, state.scale)
    return torch.tensor(m, dtype=torch.float32)


def _tv_field(state, out):
    if state.cfg.tv_grid == "captured" and state.scale > 1:
        out = F.avg_pool2d(out, state.scale)
    return out[0]


def _mask_active(state):
    return state.cfg.use_mask and state.cfg.loss_weights.lambda2 > 0


def _check_finite(values, interval):
    for name, v in values.items():
        if v is not None and not math.isfinite(v):
            raise DivergenceError(f"non-finite {name} ({v}) at interval {interval}", interval)


def _mask_step(state):
    """K-means proposal on the segmentation feature, then one annealing decision."""
    state.generator.eval()
    with torch.no_grad():
        out = state.generator(state.net_input)
        hhat = _reproduce(state, out)[0, 0].double().numpy()
        field = torch.complex(out[0, 0].double(), out[0, 1].double()).numpy()
    H = state.target[0, 0].double().numpy()
    proposal = masking.downsample_mask(masking.kmeans2_segment(masking.segmentation_feature(field, state.cfg.mask_feature)), state.scale)
    if state.mask_state.step == 0:
        t0 = state.cfg.t0_factor * masking.masked_mse(H, hhat, np.ones_like(proposal))
        state.mask_state = replace(state.mask_state, temperature=max(t0, 1e-30))
    seed = int(np.random.SeedSequence([state.cfg.seed, state.mask_state.step]).generate_state(1)[0])
    state.mask_state = masking.sa_update(state.mask_state, proposal, H, hhat, seed)
    return state.mask_state.accepted


def run_interval(state):
    """Advance ``state`` by one interval and append a history record."""
    cfg = state.cfg
    i = state.interval + 1
    weights = cfg.loss_weights

    # generator step
    state.generator.train()
    out = state.generator(state.net_input)
    hhat = _reproduce(state, out)
    l_auto = loss_autoencoder(state.target, hhat)
    loss_g = weights.lambda1 * l_auto
    l_adv = None
    if state.discriminator is not None:
        for p in state.discriminator.parameters():
            p.requires_grad_(False)
        score = _disc_scores(state.discriminator, state.target, hhat)[1]
        l_adv = -F.logsigmoid(score).mean()
        loss_g = loss_g + l_adv
    l_b = None
    if _mask_active(state):
        l_b = loss_background_tv(_tv_field(state, out), _tv_mask(state))
        loss_g = loss_g + weights.lambda2 * l_b
    state.opt_g.zero_grad(set_to_none=True)
    loss_g.backward()
    state.opt_g.step()
    if state.discriminator is not None:
        for p in state.discriminator.parameters():
            p.requires_grad_(True)

    # mask step, between the generator and discriminator updates
    accepted = None
    if _mask_active(state) and i % cfg.mask_interval_k == 0:
        accepted = _mask_step(state)

    # discriminator steps against the frozen generator output
    d_losses = []
    if state.discriminator is not None and cfg.d_steps_per_interval:
        fake = hhat.detach()
        for _ in range(cfg.d_steps_per_interval):
            real_score, fake_score = _disc_scores(state.discriminator, state.target, fake)
            loss_d = loss_discriminator(real_score, fake_score)
            state.opt_d.zero_grad(set_to_none=True)
            loss_d.backward()
            state.opt_d.step()
            d_losses.append(loss_d.item())

    record = {
        "interval": i,
        "L_G": loss_g.item(),
        "L_D": float(np.mean(d_losses)) if d_losses else None,
        "L_Auto": l_auto.item(),
        "L_B": None if l_b is None else l_b.item(),
        "L_adv": None if l_adv is None else l_adv.item(),
        "mask_accepted": accepted,
        "temperature": None if state.mask_state is None else state.mask_state.temperature,
    }
    _check_finite({k: record[k] for k in ("L_G", "L_D", "L_Auto", "L_B")}, i)
    state.history.append(record)
    state.interval = i

    if cfg.checkpoint_dir and cfg.checkpoint_every and i % cfg.checkpoint_every == 0:
        path = Path(cfg.checkpoint_dir) / f"generator_{i:05d}"
        persist_params(state.generator.get_params(_meta(state, "generator")), path)
        state.checkpoints.append(str(path))
    return state


def _meta(state, network):
    return {
        "network": network,
        "iteration": state.interval,
        "seed": state.cfg.seed,
        "sr_enabled": state.cfg.sr_enabled,
    }


def finalize(state):
    """Evaluate the current generator and package a :class:`ReconstructionResult`."""
    state.generator.eval()
    with torch.no_grad():
        out = state.generator(state.net_input)
        hhat = _reproduce(state, out)[0, 0].double().numpy()
    obj = out[0, 0].double().numpy() + 1j * out[0, 1].double().numpy()
    py, px = state.pad
    s = state.scale
    h, w = state.target.shape[-2:]
    obj = obj[py[0] * s : (h - py[1]) * s, px[0] * s : (w - px[1]) * s]
    hhat = hhat[py[0] : h - py[1], px[0] : w - px[1]]
    if state.mask_state is not None:
        mask = state.mask_state.mask[py[0] : h - py[1], px[0] : w - px[1]]
    else:
        mask = np.ones(hhat.shape, dtype=np.uint8)
    return ReconstructionResult(
        object_wave=obj,
        amplitude=np.abs(obj),
        phase=np.angle(obj),
        final_mask=mask,
        loss_history=list(state.history),
        checkpoints=list(state.checkpoints),
        reproduced_hologram=hhat,
        generator_params=state.generator.get_params(_meta(state, "generator")),
        discriminator_params=None
        if state.discriminator is None
        else state.discriminator.get_params(_meta(state, "discriminator")),
    )


def apply_generator(params, h, optics):
    """Run a frozen generator on a new hologram (no optimization).

    Returns the object-plane field on the generator's output grid.
    """
    sr = any(name.startswith("blocks.sr1.") for name in params.entries)
    h_pad, _, net_input, (py, px) = _prepare_input(h, optics)
    generator = SpecNetwork(generator_layout(sr)).set_params(params)
    generator.eval()
    with torch.no_grad():
        out = generator(net_input)
    obj = out[0, 0].double().numpy() + 1j * out[0, 1].double().numpy()
    s = 2 if sr else 1
    hh, ww = h_pad.shape
    return obj[py[0] * s : (hh - py[1]) * s, px[0] * s : (ww - px[1]) * s]


def reconstruct(h, optics, cfg=TrainConfig(), callback=None, init_params=None):
    """Recover the object-plane field from a normalized hologram ``h``."""
    state = init_state(h, optics, cfg, init_params=init_params)
    for _ in range(cfg.iterations):
        run_interval(state)
        if callback is not None:
            callback(state)
    return finalize(state)
