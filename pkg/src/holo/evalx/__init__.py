"""Metrics, experiment harnesses and weight-trajectory PCA."""

from .experiments import MetricReport, run_noise_sweep, run_simulated_comparison, run_transfer_experiment, score_amplitude
from .metrics import PSNR_CAP_DB, psnr, ssim
from .pca import PCAProjection, pca_weight_trajectories, write_pca_csv, write_pca_svg

__all__ = [
    "MetricReport",
    "run_noise_sweep",
    "run_simulated_comparison",
    "run_transfer_experiment",
    "score_amplitude",
    "PSNR_CAP_DB",
    "psnr",
    "ssim",
    "PCAProjection",
    "pca_weight_trajectories",
    "write_pca_csv",
    "write_pca_svg",
]
