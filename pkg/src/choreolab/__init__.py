"""Music-to-dance generation with a two-level vector-quantized motion
autoencoder and a latent diffusion prior, plus evaluation metrics,
latent-code editing tools, a CLI and an HTTP service."""

__version__ = "0.1.0"
