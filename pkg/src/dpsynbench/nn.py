"""Minimal fixed-architecture MLP with per-example gradients and DP aggregation.

No autodiff: layers are fully connected with one of three activations
(leaky rectifier slope 0.2, identity, sigmoid) and optional inverted dropout
on the layer output in training mode. The backward pass returns one gradient
per example, which is what per-example clipping needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.2


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class LayerSpec:
    out_dim: int
    activation: str = "leaky_relu"
    dropout: float = 0.0


@dataclass(frozen=True)
class DpOptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    batch_size: int = 100

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("moment decay rates must lie in (0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip norm must be positive")


class Mlp:
    """Fully connected network; weights[i] has shape (fan_in, fan_out)."""

    def __init__(self, in_dim: int, layers: list[LayerSpec], rng: np.random.Generator):
        self.in_dim = in_dim
        self.layers = list(layers)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        fan_in = in_dim
        for spec in self.layers:
            scale = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, spec.out_dim)))
            self.biases.append(np.zeros(spec.out_dim))
            fan_in = spec.out_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        """Returns (output, cache). Dropout masks are drawn only when
        ``train`` is true; evaluation is deterministic."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input of width {self.in_dim}, got shape {x.shape}")
        cache = []
        a = x
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            z = a @ w + b
            act = _act_forward(spec.activation, z)
            mask = None
            if train and spec.dropout > 0.0:
                if rng is None:
                    raise ValueError("training-mode forward with dropout needs an rng")
                mask = (rng.random(act.shape) >= spec.dropout) / (1.0 - spec.dropout)
                out = act * mask
            else:
                out = act
            cache.append((a, z, act, mask))
            a = out
        return a, cache

    def backward_per_example(self, cache, grad_out: np.ndarray):
        """Backpropagate ``grad_out`` (batch, out_dim) through the cached pass.

        Returns (per_example, grad_input): ``per_example`` is a (batch,
        n_params) matrix whose rows sum to the full-batch gradient,
        ``grad_input`` the loss gradient at the network input.
        """
        if len(cache) != len(self.layers):
            raise ValueError("activation cache does not match network depth")
        batch = grad_out.shape[0]
        pieces = [None] * len(self.layers)
        grad = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            a_in, z, act, mask = cache[i]
            if a_in.shape[0] != batch:
                raise ValueError("stale activation cache: batch size mismatch")
            if mask is not None:
                grad = grad * mask
            dz = grad * _act_grad(spec.activation, z, act)
            dw = np.einsum("bi,bo->bio", a_in, dz)
            pieces[i] = (dw.reshape(batch, -1), dz)
            grad = dz @ self.weights[i].T
        per_example = np.concatenate([p for pair in pieces for p in pair], axis=1)
        return per_example, grad

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b])
                               for w, b in zip(self.weights, self.biases)])

    def set_params_flat(self, vec: np.ndarray) -> None:
        if vec.shape != (self.n_params(),):
            raise ValueError("parameter vector has wrong length")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = vec[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = vec[pos:pos + b.size].copy()
            pos += b.size

    def to_arrays(self) -> dict[str, np.ndarray]:
        """Checkpoint payload: architecture plus flat parameters (version 1)."""
        return {
            "version": np.array([1]),
            "in_dim": np.array([self.in_dim]),
            "out_dims": np.array([s.out_dim for s in self.layers]),
            "activations": np.array([s.activation for s in self.layers]),
            "dropouts": np.array([s.dropout for s in self.layers]),
            "params": self.params_flat(),
        }

    @classmethod
    def from_arrays(cls, arrays) -> "Mlp":
        if int(arrays["version"][0]) != 1:
            raise ValueError(f"unsupported checkpoint version {arrays['version'][0]}")
        layers = [LayerSpec(int(d), str(a), float(p))
                  for d, a, p in zip(arrays["out_dims"], arrays["activations"],
                                     arrays["dropouts"])]
        net = cls.__new__(cls)
        net.in_dim = int(arrays["in_dim"][0])
        net.layers = layers
        net.weights, net.biases = [], []
        fan_in = net.in_dim
        for spec in layers:
            net.weights.append(np.zeros((fan_in, spec.out_dim)))
            net.biases.append(np.zeros(spec.out_dim))
            fan_in = spec.out_dim
        net.set_params_flat(np.asarray(arrays["params"], dtype=np.float64))
        return net


def clip_noise_aggregate(per_example: np.ndarray, clip_norm: float,
                         noise_multiplier: float,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Rescale each row to L2 norm <= clip_norm, average, and add isotropic
    Gaussian noise with per-coordinate sd noise_multiplier * clip_norm / batch."""
    if clip_norm <= 0:
        raise ValueError("clip norm must be positive")
    per_example = np.asarray(per_example, dtype=np.float64)
    batch = per_example.shape[0]
    norms = np.linalg.norm(per_example, axis=1)
    factors = np.minimum(1.0, clip_norm / np.maximum(norms, 1e-300))
    agg = (per_example * factors[:, None]).sum(axis=0) / batch
    if noise_multiplier > 0.0:
        if rng is None:
            raise ValueError("noisy aggregation needs an rng")
        agg = agg + rng.normal(0.0, noise_multiplier * clip_norm / batch,
                               size=agg.shape)
    return agg


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState,
              config: DpOptimizerConfig) -> np.ndarray:
    """One bias-corrected adaptive-moment update; mutates ``state`` in place
    and returns the updated parameter vector."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("parameter, gradient and state shapes must agree")
    state.t += 1
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = state.m / (1.0 - config.beta1 ** state.t)
    v_hat = state.v / (1.0 - config.beta2 ** state.t)
    return params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


def gumbel_softmax(logits: np.ndarray, tau: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Relaxed categorical sample per row: softmax((logits + Gumbel) / tau)."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    u = rng.random(logits.shape)
    g = -np.log(-np.log(np.clip(u, 1e-300, 1.0 - 1e-16)))
    z = (logits + g) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax_grad(y: np.ndarray, grad_y: np.ndarray, tau: float) -> np.ndarray:
    """Gradient of a Gumbel-Softmax block w.r.t. its logits at fixed noise."""
    inner = (grad_y * y).sum(axis=-1, keepdims=True)
    return y * (grad_y - inner) / tau


def gumbel_argmax(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Hard categorical sample: argmax(logits + Gumbel), one level per row."""
    u = rng.random(logits.shape)
    g = -np.log(-np.log(np.clip(u, 1e-300, 1.0 - 1e-16)))
    return np.argmax(logits + g, axis=-1)
