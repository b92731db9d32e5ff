"""Adversarial VAE debiasing of embedding datasets, with probing and poisoning benchmarks."""

__version__ = "0.1.0"
