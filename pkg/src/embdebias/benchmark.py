"""The default desk-scale benchmark shared by the experiment scripts and the acceptance suite."""

from __future__ import annotations

import dataclasses

import numpy as np

from .data import EmbeddingDataset, SynthConfig
from .trainer import TrainConfig

BENCH_EPOCHS = 50
BENCH_LATENT = 32
# Loss weights that keep the 64-d benchmark out of posterior collapse while the
# adversary still wins enough steps to scrub sex.
BENCH_BETA_KL = 0.003
BENCH_LAMBDA_ADV = 0.3
BENCH_ADV_STEPS = 5
PLAIN_VAE_EPOCHS = 30
SWEEP_DIMS = (4, 8, 16, 32, 64)


def bench_synth_config(**overrides) -> SynthConfig:
    return dataclasses.replace(SynthConfig(), **overrides)


def bench_train_config(**overrides) -> TrainConfig:
    base = TrainConfig(
        epochs=BENCH_EPOCHS,
        latent_dim=BENCH_LATENT,
        beta_kl=BENCH_BETA_KL,
        lambda_adv=BENCH_LAMBDA_ADV,
        adv_steps_per_vae_step=BENCH_ADV_STEPS,
    )
    return dataclasses.replace(base, **overrides)


def relative_mse(original: EmbeddingDataset, reconstructed: EmbeddingDataset, split: str = "test") -> float:
    """Reconstruction MSE divided by the per-feature variance of the inputs, pooled over features."""
    mask = original.split == split
    x, xh = original.features[mask], reconstructed.features[mask]
    if x.shape != xh.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xh.shape}")
    return float(np.mean((x - xh) ** 2) / np.mean((x - x.mean(axis=0)) ** 2))
