"""Linear VAE: affine encoder to (mean, log-variance), affine decoder.

Batched conventions: ``x`` is ``(batch, D)``; reconstruction error is the mean
over batch and features, KL is summed over latent dimensions and averaged
over the batch. Single vectors work too (batch of one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import AffineLayer, ShapeError

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


@dataclass
class VaeParams:
    enc_mu: AffineLayer
    enc_logvar: AffineLayer
    dec: AffineLayer

    def __post_init__(self):
        d, l = self.enc_mu.in_dim, self.enc_mu.out_dim
        if l < 1:
            raise ShapeError("latent dimension must be >= 1")
        if (self.enc_logvar.in_dim, self.enc_logvar.out_dim) != (d, l):
            raise ShapeError(f"enc_logvar is {self.enc_logvar.out_dim}x{self.enc_logvar.in_dim}, expected {l}x{d}")
        if (self.dec.in_dim, self.dec.out_dim) != (l, d):
            raise ShapeError(f"dec is {self.dec.out_dim}x{self.dec.in_dim}, expected {d}x{l}")

    @classmethod
    def init(cls, input_dim: int, latent_dim: int, rng: np.random.Generator) -> "VaeParams":
        if latent_dim < 1:
            raise ShapeError(f"latent_dim must be >= 1, got {latent_dim}")
        return cls(
            AffineLayer.init(input_dim, latent_dim, rng),
            AffineLayer.init(input_dim, latent_dim, rng),
            AffineLayer.init(latent_dim, input_dim, rng),
        )

    @property
    def input_dim(self) -> int:
        return self.enc_mu.in_dim

    @property
    def latent_dim(self) -> int:
        return self.enc_mu.out_dim

    @property
    def layers(self) -> dict[str, AffineLayer]:
        return {"enc_mu": self.enc_mu, "enc_logvar": self.enc_logvar, "dec": self.dec}

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers.values() for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers.values() for g in layer.grads()]

    def param_names(self) -> list[str]:
        return [f"{n}.{p}" for n in self.layers for p in ("weight", "bias")]

    def zero_grad(self) -> None:
        for layer in self.layers.values():
            layer.zero_grad()

    def to_dict(self) -> dict:
        return {name: layer.to_dict() for name, layer in self.layers.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "VaeParams":
        return cls(*(AffineLayer.from_dict(d[k]) for k in ("enc_mu", "enc_logvar", "dec")))


def encode(params: VaeParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = params.enc_mu.forward(x)
    logvar = np.clip(params.enc_logvar.forward(x), LOGVAR_MIN, LOGVAR_MAX)
    return mu, logvar


def reparameterize(mu: np.ndarray, logvar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    mu, logvar, eps = (np.asarray(a, dtype=np.float64) for a in (mu, logvar, eps))
    if not (mu.shape == logvar.shape == eps.shape):
        raise ShapeError(f"mu {mu.shape}, logvar {logvar.shape}, eps {eps.shape} must match")
    return mu + np.exp(0.5 * logvar) * eps


def decode(params: VaeParams, z: np.ndarray) -> np.ndarray:
    return params.dec.forward(z)


def recon_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    x, x_hat = np.asarray(x, dtype=np.float64), np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"x {x.shape} and x_hat {x_hat.shape} differ")
    return float(np.mean((x - x_hat) ** 2))


def kl_loss(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)): summed over latents, mean over batch."""
    mu, logvar = np.asarray(mu, dtype=np.float64), np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    per_row = 0.5 * np.sum((np.expm1(logvar) - logvar) + mu**2, axis=-1)
    return float(np.mean(per_row))


@dataclass
class VaeCache:
    x: np.ndarray
    mu: np.ndarray
    logvar_raw: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    x_hat: np.ndarray


def vae_forward(params: VaeParams, x: np.ndarray, eps: np.ndarray) -> VaeCache:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    mu = params.enc_mu.forward(x)
    logvar_raw = params.enc_logvar.forward(x)
    logvar = np.clip(logvar_raw, LOGVAR_MIN, LOGVAR_MAX)
    z = reparameterize(mu, logvar, eps)
    x_hat = params.dec.forward(z)
    return VaeCache(x, mu, logvar_raw, logvar, eps, z, x_hat)


def vae_backward(
    params: VaeParams,
    cache: VaeCache,
    beta_kl: float = 1.0,
    grad_z_extra: np.ndarray | None = None,
) -> tuple[float, float]:
    """Accumulate gradients of ``recon + beta_kl * kl`` (+ any extra dL/dz).

    ``grad_z_extra`` lets the trainer inject the (sign-flipped) adversary
    gradient at the latent sample. Returns ``(recon, kl)`` values.
    """
    x, x_hat = cache.x, cache.x_hat
    n, d = x.shape
    recon = recon_loss(x, x_hat)
    kl = kl_loss(cache.mu, cache.logvar)

    g_xhat = 2.0 * (x_hat - x) / (n * d)
    g_z = params.dec.backward(cache.z, g_xhat)
    if grad_z_extra is not None:
        g_z = g_z + grad_z_extra
    sigma = np.exp(0.5 * cache.logvar)
    g_mu = g_z + beta_kl * cache.mu / n
    g_logvar = g_z * cache.eps * 0.5 * sigma + beta_kl * 0.5 * (np.exp(cache.logvar) - 1.0) / n
    # clamp passes gradient only strictly inside the bounds
    g_logvar = g_logvar * ((cache.logvar_raw > LOGVAR_MIN) & (cache.logvar_raw < LOGVAR_MAX))
    params.enc_mu.backward(x, g_mu)
    params.enc_logvar.backward(x, g_logvar)
    return recon, kl
