"""Multi-branch demographic adversary reading the latent code.

One branch per attribute: binary branches end in a sigmoid and are scored
with BCE, continuous branches are scored with MSE against a standardized
target. The adversarial loss is the plain sum over branches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import AffineLayer, ShapeError, relu, sigmoid

PROB_CLAMP = 1e-7
BINARY = "binary"
CONTINUOUS = "continuous"

# attribute -> branch kind for the attributes the dataset schema carries
ATTRIBUTE_KINDS = {"sex": BINARY, "age": CONTINUOUS}


@dataclass
class AdversaryBranch:
    attribute: str
    kind: str
    layers: list[AffineLayer]
    _acts: list[np.ndarray] = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in (BINARY, CONTINUOUS):
            raise ValueError(f"unknown branch kind {self.kind!r}")
        if not self.layers or self.layers[-1].out_dim != 1:
            raise ShapeError(f"branch {self.attribute!r} must end in a width-1 layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"branch {self.attribute!r}: {a.out_dim} -> {b.in_dim} mismatch")

    @classmethod
    def init(cls, attribute: str, kind: str, input_dim: int, hidden: list[int],
             rng: np.random.Generator) -> "AdversaryBranch":
        widths = [input_dim, *hidden, 1]
        return cls(attribute, kind, [AffineLayer.init(a, b, rng) for a, b in zip(widths, widths[1:])])

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def forward(self, z: np.ndarray) -> np.ndarray:
        """Predictions of shape ``z.shape[:-1]``; activations kept for backward."""
        h = np.asarray(z, dtype=np.float64)
        acts = [h]
        for i, layer in enumerate(self.layers):
            h = layer.forward(h)
            if i < len(self.layers) - 1:
                h = relu(h)
            acts.append(h)
        self._acts = acts
        out = h[..., 0]
        return sigmoid(out) if self.kind == BINARY else out

    def backward(self, grad_logit: np.ndarray) -> np.ndarray:
        """Backprop from d(loss)/d(pre-sigmoid output); returns d(loss)/dz."""
        acts = self._acts
        g = np.asarray(grad_logit, dtype=np.float64)[..., None]
        for i in range(len(self.layers) - 1, -1, -1):
            if i < len(self.layers) - 1:
                g = g * (acts[i + 1] > 0)
            g = self.layers[i].backward(acts[i], g)
        return g

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "kind": self.kind,
                "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "AdversaryBranch":
        return cls(d["attribute"], d["kind"], [AffineLayer.from_dict(x) for x in d["layers"]])


@dataclass
class AdversaryParams:
    branches: list[AdversaryBranch]

    def __post_init__(self):
        dims = {b.input_dim for b in self.branches}
        if len(dims) > 1:
            raise ShapeError(f"branches disagree on input width: {sorted(dims)}")

    @classmethod
    def init(cls, latent_dim: int, attributes=("sex", "age"), hidden=(64,),
             rng: np.random.Generator | None = None) -> "AdversaryParams":
        rng = rng if rng is not None else np.random.default_rng(0)
        branches = []
        for attr in attributes:
            if attr not in ATTRIBUTE_KINDS:
                raise ValueError(f"no adversary branch kind known for attribute {attr!r}")
            branches.append(AdversaryBranch.init(attr, ATTRIBUTE_KINDS[attr], latent_dim, list(hidden), rng))
        return cls(branches)

    @property
    def input_dim(self) -> int:
        return self.branches[0].input_dim

    def params(self) -> list[np.ndarray]:
        return [p for b in self.branches for p in b.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for b in self.branches for g in b.grads()]

    def param_names(self) -> list[str]:
        return [f"{b.attribute}.{i}.{p}" for b in self.branches
                for i in range(len(b.layers)) for p in ("weight", "bias")]

    def zero_grad(self) -> None:
        for b in self.branches:
            for layer in b.layers:
                layer.zero_grad()

    def to_dict(self) -> dict:
        return {"branches": [b.to_dict() for b in self.branches]}

    @classmethod
    def from_dict(cls, d: dict) -> "AdversaryParams":
        return cls([AdversaryBranch.from_dict(b) for b in d["branches"]])


def adversary_forward(params: AdversaryParams, z: np.ndarray) -> dict[str, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.input_dim:
        raise ShapeError(f"latent width {z.shape[-1]} != adversary input width {params.input_dim}")
    return {b.attribute: b.forward(z) for b in params.branches}


def bce(p: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)) ** 2))


def adversary_loss(
    predictions: dict[str, np.ndarray],
    targets: dict[str, np.ndarray],
    kinds: dict[str, str] | None = None,
) -> tuple[float, dict[str, float]]:
    kinds = kinds or ATTRIBUTE_KINDS
    per_branch = {}
    for attr, pred in predictions.items():
        if attr not in targets:
            raise KeyError(f"missing target for adversary branch {attr!r}")
        y = np.asarray(targets[attr], dtype=np.float64)
        if np.shape(pred) != y.shape:
            raise ShapeError(f"{attr}: prediction shape {np.shape(pred)} != target shape {y.shape}")
        if kinds[attr] == BINARY:
            if not np.all((y == 0) | (y == 1)):
                raise ValueError(f"binary target for {attr!r} must be 0/1")
            per_branch[attr] = bce(pred, y)
        else:
            per_branch[attr] = mse(pred, y)
    return float(sum(per_branch.values())), per_branch


def adversary_loss_and_grads(
    params: AdversaryParams,
    z: np.ndarray,
    targets: dict[str, np.ndarray],
) -> tuple[float, dict[str, float], np.ndarray]:
    """Loss and gradients in one pass.

    Accumulates branch parameter gradients and returns
    ``(total, per_branch, d total / d z)``.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    preds = adversary_forward(params, z)
    kinds = {b.attribute: b.kind for b in params.branches}
    total, per_branch = adversary_loss(preds, targets, kinds)
    n = z.shape[0]
    grad_z = np.zeros_like(z)
    for b in params.branches:
        p = preds[b.attribute]
        y = np.asarray(targets[b.attribute], dtype=np.float64)
        if b.kind == BINARY:
            inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
            g = (p - y) / n * inside
        else:
            g = 2.0 * (p - y) / n
        grad_z += b.backward(g)
    return total, per_branch, grad_z
