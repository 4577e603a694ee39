"""Actigraphy maps, VAE latent features and outcome estimation."""

__version__ = "0.1.0"
