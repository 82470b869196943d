"""Small fully-connected networks with hand-written backprop.

Hidden layers use rectified-linear activations; the output layer is the
identity so actions and values are unbounded. Weights are stored row-major as
(out, in) matrices, so a layer computes z = x W' + b. Training uses the Adam
update rule. Everything is plain numpy and deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MLP_MAGIC = "chancectrl-mlp"
MLP_FORMAT_VERSION = 1


@dataclass(eq=False)
class Mlp:
    """Multilayer perceptron parameters: one (out, in) weight matrix per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "Mlp":
        """Uniform +-1/sqrt(fan_in) weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def unflatten(self, vec: np.ndarray) -> None:
        """Load parameters from a flat vector; exact round-trip with flatten()."""
        vec = np.asarray(vec, dtype=float)
        offset = 0
        for p in self.parameters():
            block = vec[offset:offset + p.size]
            if block.size != p.size:
                raise ValueError("flat parameter vector has the wrong length")
            p[...] = block.reshape(p.shape)
            offset += p.size
        if offset != vec.size:
            raise ValueError("flat parameter vector has the wrong length")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch or single-vector forward pass; relu hidden, identity output."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = np.atleast_2d(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w.T + b
            if i != last:
                a = np.maximum(a, 0.0)
        return a[0] if single else a

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping pre-activations for the backward pass."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        activations = [a]
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w.T + b
            pre.append(z)
            activations.append(np.maximum(z, 0.0) if i != last else z)
        return activations[-1], (activations, pre)

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input.

        Returns ``(weight_grads, bias_grads, grad_input)`` with the same
        shapes as the parameters and the batch input.
        """
        activations, pre = cache
        grad = np.atleast_2d(np.asarray(grad_out, dtype=float))
        weight_grads = [None] * len(self.weights)
        bias_grads = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                grad = grad * (pre[i] > 0.0)
            weight_grads[i] = grad.T @ activations[i]
            bias_grads[i] = grad.sum(axis=0)
            grad = grad @ self.weights[i]
        return weight_grads, bias_grads, grad


class Adam:
    """Adam update rule applied in place to a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


class MlpPolicy:
    """Deterministic policy wrapping a trained actor network."""

    def __init__(self, actor: Mlp):
        self.actor = actor

    def predict(self, X) -> np.ndarray:
        return self.actor.forward(X)


def save_mlp(path, mlp: Mlp) -> None:
    """Versioned flat text format: magic line, layer sizes, row-major weights.

    Floats are written with 17 significant digits, which round-trips IEEE
    doubles exactly.
    """
    sizes = " ".join(str(s) for s in mlp.layer_sizes)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{MLP_MAGIC} {MLP_FORMAT_VERSION}\n")
        fh.write(sizes + "\n")
        for value in mlp.flatten():
            fh.write(f"{value:.17g}\n")


def load_mlp(path) -> Mlp:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != MLP_MAGIC:
            raise ValueError(f"not a {MLP_MAGIC} file: {path}")
        if int(header[1]) != MLP_FORMAT_VERSION:
            raise ValueError(f"unsupported format version {header[1]}")
        sizes = [int(tok) for tok in fh.readline().split()]
        if len(sizes) < 2:
            raise ValueError("layer size line must list at least two sizes")
        flat = np.array([float(line) for line in fh if line.strip()])
    mlp = Mlp.init(sizes, np.random.Generator(np.random.Philox(0)))
    mlp.unflatten(flat)
    return mlp


def load_policy(path) -> MlpPolicy:
    """Load a serialized actor as a ready-to-use policy."""
    return MlpPolicy(load_mlp(path))
