"""Alternating adversarial training of the VAE, plus checkpoint I/O and transforms.

Each batch runs two phases. Phase A freezes the VAE and takes Adam steps on
the adversary's summed loss using the sampled latent as a constant input.
Phase B freezes the adversary and takes one Adam step on the encoder and
decoder for ``recon + beta_kl * kl - lambda_adv * adv``: the encoder is pushed
to *raise* the adversary's loss, which is what makes the attributes
unpredictable from the latent code.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .adversary import ATTRIBUTE_KINDS, BINARY, AdversaryParams, adversary_loss_and_grads
from .data import EmbeddingDataset, apply_standardization, atomic_write_text, fit_standardization
from .tensor import Adam, NumericError, make_rng
from .vae import VaeParams, decode, encode, reparameterize, vae_backward, vae_forward

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr_vae: float = 0.0005
    lr_adv: float = 0.002
    latent_dim: int = 500
    beta_kl: float = 1.0
    lambda_adv: float = 1.0
    adv_steps_per_vae_step: int = 1
    adv_hidden: tuple[int, ...] = (64,)
    attributes: tuple[str, ...] = ("sex", "age")
    seed: int = 0

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "latent_dim", "adv_steps_per_vae_step"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("lr_vae", "lr_adv"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("beta_kl", "lambda_adv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for attr in self.attributes:
            if attr not in ATTRIBUTE_KINDS:
                raise ValueError(f"unsupported attribute {attr!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adv_hidden"] = list(self.adv_hidden)
        d["attributes"] = list(self.attributes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["adv_hidden"] = tuple(d.get("adv_hidden", (64,)))
        d["attributes"] = tuple(d.get("attributes", ("sex", "age")))
        return cls(**d)


@dataclass
class Checkpoint:
    config: TrainConfig
    vae: VaeParams
    adversary: AdversaryParams
    standardization: tuple[np.ndarray, np.ndarray]
    target_standardization: dict[str, tuple[float, float]]
    epoch: int
    history: list[dict[str, float]] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        mean, std = self.standardization
        return {
            "format_version": self.format_version,
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "standardization": {"mean": mean.tolist(), "std": std.tolist()},
            "target_standardization": {k: list(v) for k, v in self.target_standardization.items()},
            "vae": self.vae.to_dict(),
            "adversary": self.adversary.to_dict(),
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        return cls(
            config=TrainConfig.from_dict(d["config"]),
            vae=VaeParams.from_dict(d["vae"]),
            adversary=AdversaryParams.from_dict(d["adversary"]),
            standardization=(np.asarray(d["standardization"]["mean"], dtype=np.float64),
                             np.asarray(d["standardization"]["std"], dtype=np.float64)),
            target_standardization={k: (float(v[0]), float(v[1]))
                                    for k, v in d["target_standardization"].items()},
            epoch=int(d["epoch"]),
            history=list(d["history"]),
            format_version=int(d["format_version"]),
        )


def checkpoint_to_text(ckpt: Checkpoint) -> str:
    return json.dumps(ckpt.to_dict(), separators=(",", ":")) + "\n"


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    atomic_write_text(path, checkpoint_to_text(ckpt))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint file ({exc})") from None
    if not isinstance(d, dict) or "format_version" not in d:
        raise CheckpointError(f"{path}: corrupt checkpoint file (no format_version)")
    if d["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format_version {d['format_version']} is not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    try:
        return Checkpoint.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint file ({exc!r})") from None


def _targets(ds: EmbeddingDataset, attributes, target_std: dict[str, tuple[float, float]]):
    out = {}
    for attr in attributes:
        col = ds.column(attr).astype(np.float64)
        if ATTRIBUTE_KINDS[attr] != BINARY:
            mean, std = target_std[attr]
            col = (col - mean) / std
        out[attr] = col
    return out


def _check_finite(values: dict[str, float], epoch: int, batch: int) -> None:
    for name, v in values.items():
        if not np.isfinite(v):
            raise TrainingError(f"non-finite {name} loss at epoch {epoch}, batch {batch}")


def train(dataset: EmbeddingDataset, config: TrainConfig | None = None, *,
          progress: bool = False) -> Checkpoint:
    """Fit the debiasing VAE on the train split and return the final checkpoint.

    Features are z-scored with train statistics first unless the dataset
    already carries standardization parameters.
    """
    config = config or TrainConfig()
    config.validate()
    train_rows = np.flatnonzero(dataset.train_mask)
    if len(train_rows) == 0:
        raise TrainingError("train split is empty")
    if dataset.standardization is None:
        mean, std = fit_standardization(dataset.features, dataset.train_mask)
        dataset = apply_standardization(dataset, mean, std)

    x_all = dataset.features[train_rows]
    target_std = {}
    for attr in config.attributes:
        if ATTRIBUTE_KINDS[attr] != BINARY:
            col = dataset.column(attr)[train_rows].astype(np.float64)
            target_std[attr] = (float(col.mean()), float(max(col.std(), 1e-8)))
    targets_all = {k: v[train_rows] for k, v in _targets(dataset, config.attributes, target_std).items()}

    init_rng = make_rng(config.seed, "init")
    vae = VaeParams.init(dataset.dimension, config.latent_dim, init_rng)
    adv = AdversaryParams.init(config.latent_dim, config.attributes, config.adv_hidden, init_rng)
    opt_vae = Adam(vae.params(), config.lr_vae, vae.param_names())
    opt_adv = Adam(adv.params(), config.lr_adv, adv.param_names())
    shuffle_rng = make_rng(config.seed, "shuffle")
    reparam_rng = make_rng(config.seed, "reparam")

    n = len(train_rows)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = {"recon": 0.0, "kl": 0.0, "adv": 0.0, "total": 0.0}
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            xb = x_all[idx]
            tb = {k: v[idx] for k, v in targets_all.items()}
            eps = reparam_rng.standard_normal((len(idx), config.latent_dim))
            cache = vae_forward(vae, xb, eps)

            # phase A: adversary only, latent sample held fixed
            for _ in range(config.adv_steps_per_vae_step):
                adv.zero_grad()
                adversary_loss_and_grads(adv, cache.z, tb)
                try:
                    opt_adv.step(adv.grads())
                except NumericError as exc:
                    raise TrainingError(f"epoch {epoch}, batch {batch}: {exc}") from None

            # phase B: encoder/decoder only, adversary frozen
            adv.zero_grad()
            vae.zero_grad()
            adv_loss, _, grad_z = adversary_loss_and_grads(adv, cache.z, tb)
            adv.zero_grad()
            recon, kl = vae_backward(vae, cache, config.beta_kl, -config.lambda_adv * grad_z)
            total = recon + config.beta_kl * kl - config.lambda_adv * adv_loss
            _check_finite({"recon": recon, "kl": kl, "adversary": adv_loss}, epoch, batch)
            try:
                opt_vae.step(vae.grads())
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch}, batch {batch}: {exc}") from None
            w = len(idx) / n
            sums["recon"] += w * recon
            sums["kl"] += w * kl
            sums["adv"] += w * adv_loss
            sums["total"] += w * total
        history.append({"epoch": epoch, **sums})
        if progress:
            log.info("epoch %d recon=%.4f kl=%.4f adv=%.4f", epoch, sums["recon"], sums["kl"], sums["adv"])

    return Checkpoint(
        config=config, vae=vae, adversary=adv,
        standardization=dataset.standardization,
        target_standardization=target_std,
        epoch=config.epochs, history=history,
    )


@dataclass(frozen=True)
class TransformMode:
    output_space: str = "reconstruction"  # or "latent"
    deterministic: bool = True


def transform_dataset(ckpt: Checkpoint, dataset: EmbeddingDataset,
                      mode: TransformMode = TransformMode()) -> EmbeddingDataset:
    """Replace features by the debiased representation; labels are untouched.

    Reconstruction output is mapped back to the input's original scale.
    """
    if mode.output_space not in ("reconstruction", "latent"):
        raise ValueError(f"unknown output space {mode.output_space!r}")
    if dataset.dimension != ckpt.vae.input_dim:
        raise ValueError(
            f"dataset dimension {dataset.dimension} != checkpoint input dimension {ckpt.vae.input_dim}"
        )
    mean, std = ckpt.standardization
    if dataset.standardization is None:
        dataset = apply_standardization(dataset, mean, std)
    mu, logvar = encode(ckpt.vae, dataset.features)
    if mode.deterministic:
        z = mu
    else:
        eps = make_rng(ckpt.config.seed, "reparam").standard_normal(mu.shape)
        z = reparameterize(mu, logvar, eps)
    if mode.output_space == "latent":
        return dataset.with_features(z)
    return dataset.with_features(decode(ckpt.vae, z) * std + mean)
