"""Digital in-line holography: simulation and untrained-GAN phase recovery."""

__version__ = "0.1.0"
