"""Latent event dynamics: renewal priors, event surrogates and relational graphs."""

__version__ = "0.1.0"
