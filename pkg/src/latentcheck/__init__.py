"""latentcheck: manifold-based test adequacy, test generation, and OOD monitoring.

A VAE learned on an image-classification dataset gives a low-dimensional
latent space. This package measures combination coverage over that space,
synthesizes labeled fault-revealing inputs from a class-conditional
two-stage VAE, scores runtime inputs for in-distribution confidence, and
compares datasets with the Frechet distance between fitted Gaussians.
"""

__version__ = "0.1.0"
