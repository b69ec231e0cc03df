"""scikit-learn style wrappers around the reconstruction methods.

Each estimator takes one normalized hologram (a 2-D array) as ``X``.
``fit`` optimizes on that hologram and ``transform`` returns a complex
object-plane field. For the GAN reconstructor, ``transform`` applies the
frozen generator to a new hologram without further training, and
``warm_start=True`` makes the next ``fit`` start from the previously fitted
generator instead of a fresh initialization.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import backprop_only, gerchberg_saxton
from .exceptions import DimensionError, ParameterError
from .objective import LossWeights
from .optics import OpticsConfig, normalize_hologram
from .trainer import TrainConfig, apply_generator, reconstruct

__all__ = [
    "check_hologram",
    "check_optics",
    "BackPropagationReconstructor",
    "GerchbergSaxtonReconstructor",
    "DHGANReconstructor",
]


def check_hologram(X, normalize=True):
    """Validate a hologram: 2-D, finite, non-negative, not all zero.

    Returns a float64 copy, mean-normalized unless ``normalize`` is False.
    """
    h = np.array(X, dtype=np.float64)
    if h.ndim == 3 and h.shape[0] == 1:
        h = h[0]
    if h.ndim != 2:
        raise DimensionError(f"expected a 2-D hologram, got shape {h.shape}")
    if min(h.shape) < 1:
        raise DimensionError(f"empty hologram of shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ParameterError("hologram contains non-finite values")
    if np.any(h < 0):
        raise ParameterError("hologram intensities must be non-negative")
    if normalize:
        h = normalize_hologram(h)
    return h


def check_optics(est, shape):
    return OpticsConfig(est.wavelength_um, est.pixel_um, est.z_um, shape[0], shape[1], sqrt_input=est.sqrt_input)


class _OpticsMixin:
    def _optics(self, h):
        return check_optics(self, h.shape)


class BackPropagationReconstructor(_OpticsMixin, TransformerMixin, BaseEstimator):
    """Single back-propagation of the hologram to the object plane."""

    def __init__(self, wavelength_um=0.532, pixel_um=2.0, z_um=5500.0, sqrt_input=False):
        self.wavelength_um = wavelength_um
        self.pixel_um = pixel_um
        self.z_um = z_um
        self.sqrt_input = sqrt_input

    def fit(self, X, y=None):
        h = check_hologram(X)
        self.shape_ = h.shape
        return self

    def transform(self, X):
        check_is_fitted(self, "shape_")
        h = check_hologram(X)
        return backprop_only(h, self._optics(h))


class GerchbergSaxtonReconstructor(_OpticsMixin, TransformerMixin, BaseEstimator):
    """Error-reduction phase retrieval between the object and sensor planes.

    ``support`` is an optional background mask (1 = background) applied at
    every iteration; ``residual_history_`` holds the sensor-amplitude
    residual of the last ``fit``.
    """

    def __init__(self, wavelength_um=0.532, pixel_um=2.0, z_um=5500.0, sqrt_input=False, n_iter=100, support=None):
        self.wavelength_um = wavelength_um
        self.pixel_um = pixel_um
        self.z_um = z_um
        self.sqrt_input = sqrt_input
        self.n_iter = n_iter
        self.support = support

    def _run(self, h):
        if int(self.n_iter) < 1:
            raise ParameterError(f"n_iter must be >= 1, got {self.n_iter}")
        return gerchberg_saxton(h, self._optics(h), iters=int(self.n_iter), support=self.support, return_history=True)

    def fit(self, X, y=None):
        h = check_hologram(X)
        self.object_wave_, self.residual_history_ = self._run(h)
        self.shape_ = h.shape
        return self

    def transform(self, X):
        check_is_fitted(self, "shape_")
        return self._run(check_hologram(X))[0]


class DHGANReconstructor(_OpticsMixin, TransformerMixin, BaseEstimator):
    """Untrained-network reconstruction with adversarial loss and adaptive masking.

    Fitted attributes
    -----------------
    result_ : ReconstructionResult
        Output of the last ``fit``.
    generator_params_ : NetworkParams
        Generator weights after the last ``fit``; used by ``transform`` and
        as the starting point when ``warm_start`` is True.
    history_ : list of dict
        Per-interval loss records.
    """

    def __init__(
        self,
        wavelength_um=0.532,
        pixel_um=2.0,
        z_um=5500.0,
        sqrt_input=False,
        iterations=3000,
        d_steps_per_interval=5,
        mask_interval_k=100,
        lr_g=1e-3,
        lr_betas=(0.9, 0.999),
        lr_d=1e-4,
        lambda1=1.0,
        lambda2=1.0,
        t0_factor=0.1,
        mask_feature="amplitude",
        sr_enabled=True,
        use_gan=True,
        use_mask=True,
        tv_grid="output",
        checkpoint_dir=None,
        checkpoint_every=100,
        seed=0,
        warm_start=False,
    ):
        self.wavelength_um = wavelength_um
        self.pixel_um = pixel_um
        self.z_um = z_um
        self.sqrt_input = sqrt_input
        self.iterations = iterations
        self.d_steps_per_interval = d_steps_per_interval
        self.mask_interval_k = mask_interval_k
        self.lr_g = lr_g
        self.lr_betas = lr_betas
        self.lr_d = lr_d
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.t0_factor = t0_factor
        self.mask_feature = mask_feature
        self.sr_enabled = sr_enabled
        self.use_gan = use_gan
        self.use_mask = use_mask
        self.tv_grid = tv_grid
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_every = checkpoint_every
        self.seed = seed
        self.warm_start = warm_start

    def train_config(self):
        return TrainConfig(
            iterations=int(self.iterations),
            d_steps_per_interval=int(self.d_steps_per_interval),
            mask_interval_k=int(self.mask_interval_k),
            lr_g=float(self.lr_g),
            lr_betas=tuple(self.lr_betas),
            lr_d=float(self.lr_d),
            loss_weights=LossWeights(float(self.lambda1), float(self.lambda2)),
            seed=int(self.seed),
            sr_enabled=bool(self.sr_enabled),
            t0_factor=float(self.t0_factor),
            mask_feature=self.mask_feature,
            use_gan=bool(self.use_gan),
            use_mask=bool(self.use_mask),
            tv_grid=self.tv_grid,
            checkpoint_dir=self.checkpoint_dir,
            checkpoint_every=int(self.checkpoint_every),
        )

    def fit(self, X, y=None):
        h = check_hologram(X)
        cfg = self.train_config()
        init = None
        if self.warm_start and hasattr(self, "generator_params_"):
            init = self.generator_params_
        self.result_ = reconstruct(h, self._optics(h), cfg, init_params=init)
        self.generator_params_ = self.result_.generator_params
        self.history_ = self.result_.loss_history
        self.shape_ = h.shape
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).result_.object_wave

    def transform(self, X):
        """Apply the fitted generator, frozen, to ``X``."""
        check_is_fitted(self, "generator_params_")
        h = check_hologram(X)
        return apply_generator(self.generator_params_, h, self._optics(h))
