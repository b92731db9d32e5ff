"""Dense affine layers with analytic gradients, plus the optimizer and seeded random streams.

Everything is float64. Layers accept a single vector ``(in,)`` or a batch
``(batch, in)``; batched backward sums parameter gradients over rows, so the
caller decides the reduction by scaling ``grad_out``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

STREAM_LABELS = ("init", "reparam", "shuffle", "synth", "poison")


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, label: str) -> np.random.Generator:
    """Child generator for one pipeline stage.

    The stream is a function of ``(seed, label)`` only, so any stage can be
    replayed without running the ones before it. PCG64 output is specified
    bit-for-bit, which keeps streams identical across platforms.
    """
    return np.random.Generator(np.random.PCG64(derive_seed(seed, label)))


def rng_standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return rng.standard_normal(n)


@dataclass
class AffineLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    grad_weight: np.ndarray = field(init=False, repr=False)
    grad_bias: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weight.shape[0]}"
            )
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "AffineLayer":
        bound = 1.0 / np.sqrt(in_dim)
        return cls(rng.uniform(-bound, bound, size=(out_dim, in_dim)), np.zeros(out_dim))

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int) -> "AffineLayer":
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def grads(self) -> list[np.ndarray]:
        return [self.grad_weight, self.grad_bias]

    def zero_grad(self) -> None:
        self.grad_weight.fill(0.0)
        self.grad_bias.fill(0.0)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"input dimension {x.shape[-1]} != layer in-dimension {self.in_dim}")
        return x @ self.weight.T + self.bias

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients and return the gradient w.r.t. ``x``."""
        x = np.asarray(x, dtype=np.float64)
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"input dimension {x.shape[-1]} != layer in-dimension {self.in_dim}")
        if grad_out.shape[-1] != self.out_dim or grad_out.shape[:-1] != x.shape[:-1]:
            raise ShapeError(
                f"grad_out shape {grad_out.shape} does not match output of input {x.shape}"
                f" through {self.out_dim}x{self.in_dim} layer"
            )
        x2 = x.reshape(-1, self.in_dim)
        g2 = grad_out.reshape(-1, self.out_dim)
        self.grad_weight += g2.T @ x2
        self.grad_bias += g2.sum(axis=0)
        return grad_out @ self.weight

    def copy(self) -> "AffineLayer":
        return AffineLayer(self.weight.copy(), self.bias.copy())

    def to_dict(self) -> dict:
        return {"weight": self.weight.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineLayer":
        w = np.asarray(d["weight"], dtype=np.float64)
        b = np.asarray(d["bias"], dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"weight must be 2-D, got shape {w.shape}")
        return cls(w, b)


def affine_forward(layer: AffineLayer, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


def affine_backward(layer: AffineLayer, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return layer.backward(x, grad_out)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray, **kw) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **kw)


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    states: list[AdamState],
    lr: float,
    names: list[str] | None = None,
) -> None:
    """Bias-corrected Adam update, applied in place to every block."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not (len(params) == len(grads) == len(states)):
        raise ShapeError("params, grads and states must have equal length")
    for i, (g, st) in enumerate(zip(grads, states)):
        if not np.all(np.isfinite(g)):
            name = names[i] if names else f"block {i}"
            raise NumericError(f"non-finite gradient in parameter {name}")
        if g.shape != params[i].shape or st.first_moment.shape != g.shape:
            raise ShapeError(f"shape mismatch in parameter block {i}")
    for p, g, st in zip(params, grads, states):
        st.step_count += 1
        st.first_moment *= st.beta1
        st.first_moment += (1.0 - st.beta1) * g
        st.second_moment *= st.beta2
        st.second_moment += (1.0 - st.beta2) * (g * g)
        m_hat = st.first_moment / (1.0 - st.beta1**st.step_count)
        v_hat = st.second_moment / (1.0 - st.beta2**st.step_count)
        p -= lr * m_hat / (np.sqrt(v_hat) + st.epsilon)


class Adam:
    """Adam bound to a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float, names: list[str] | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.lr = lr
        self.names = names
        self.states = [AdamState.like(p, beta1=beta1, beta2=beta2, epsilon=epsilon) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        adam_step(self.params, grads, self.states, self.lr, self.names)
