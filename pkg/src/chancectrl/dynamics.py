"""Discrete-time LTI plants, process-noise models, and seeded simulation.

The plant is x' = A x + B u + w with the disturbance either added directly
to the state or entering through the input matrix (x' = A x + B u + B w).
Noise is Gaussian or a finite Gaussian mixture; all sampling goes through
counter-based generators so trajectories are reproducible and parallel
workers can own independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .validation import as_matrix, as_vector, check_spd, freeze

# Any state component beyond this magnitude marks a trajectory as diverged;
# open-loop-unstable plants under exploratory policies overflow otherwise.
DIVERGENCE_LIMIT = 1e8


class NoiseInjection(Enum):
    """How the disturbance enters the plant."""

    STATE_ADDITIVE = "state_additive"
    THROUGH_INPUT = "through_input"


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; identical seed gives an identical stream."""
    return np.random.Generator(np.random.Philox(seed))


def split_rngs(seed, n: int) -> list[np.random.Generator]:
    """n independent child generators, reproducible regardless of scheduling."""
    return [make_rng(child) for child in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True, eq=False)
class GaussianNoise:
    """Gaussian disturbance w ~ N(mean, cov) with positive-definite cov."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = freeze(as_vector(self.mean, name="noise mean"))
        cov = as_matrix(self.cov, shape=(mean.shape[0], mean.shape[0]), name="noise cov")
        chol = check_spd(cov, "noise cov")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", freeze(cov))
        object.__setattr__(self, "_chol", freeze(chol))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def mean_vector(self) -> np.ndarray:
        return self.mean

    @property
    def components(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        return [(1.0, self.mean, self.cov)]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self._chol @ rng.standard_normal(self.dim)

    def sample_n(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T


@dataclass(frozen=True, eq=False)
class GmmNoise:
    """Finite Gaussian mixture disturbance with weights summing to one."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        weights = as_vector(self.weights, name="mixture weights")
        if np.any(weights <= 0.0) or np.any(weights > 1.0):
            raise ValueError("mixture weights must lie in (0, 1]")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")
        means = np.asarray(self.means, dtype=float)
        if means.ndim != 2 or means.shape[0] != weights.shape[0]:
            raise ValueError("mixture means must be (components, dim)")
        covs = np.asarray(self.covs, dtype=float)
        if covs.shape != (weights.shape[0], means.shape[1], means.shape[1]):
            raise ValueError("mixture covs must be (components, dim, dim)")
        chols = np.stack([check_spd(c, f"mixture cov[{j}]") for j, c in enumerate(covs)])
        object.__setattr__(self, "weights", freeze(weights))
        object.__setattr__(self, "means", freeze(means))
        object.__setattr__(self, "covs", freeze(covs))
        object.__setattr__(self, "_chols", freeze(chols))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def mean_vector(self) -> np.ndarray:
        return self.weights @ self.means

    @property
    def components(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        return [
            (float(w), self.means[j], self.covs[j])
            for j, w in enumerate(self.weights)
        ]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        # A single component consumes no draws for selection, so a
        # one-component mixture emits the same stream as the plain Gaussian.
        if self.n_components == 1:
            j = 0
        else:
            j = int(rng.choice(self.n_components, p=self.weights))
        return self.means[j] + self._chols[j] @ rng.standard_normal(self.dim)

    def sample_n(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.n_components == 1:
            idx = np.zeros(n, dtype=int)
        else:
            idx = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        # Same per-component transform as the plain Gaussian sampler, so a
        # one-component mixture reproduces its stream exactly.
        out = np.empty((n, self.dim))
        for j in range(self.n_components):
            mask = idx == j
            out[mask] = self.means[j] + z[mask] @ self._chols[j].T
        return out


NoiseModel = GaussianNoise | GmmNoise


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """One draw from the disturbance distribution."""
    return model.sample(rng)


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """LTI plant x' = A x + B u + w, or x' = A x + B u + B w for input-side noise."""

    A: np.ndarray
    B: np.ndarray
    noise_injection: NoiseInjection = NoiseInjection.STATE_ADDITIVE

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, name="B")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got {B.shape}")
        object.__setattr__(self, "A", freeze(A))
        object.__setattr__(self, "B", freeze(B))
        object.__setattr__(self, "noise_injection", NoiseInjection(self.noise_injection))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def noise_dim(self) -> int:
        """Dimension the disturbance vector must have for this plant."""
        return self.n if self.noise_injection is NoiseInjection.STATE_ADDITIVE else self.p

    def check_noise(self, noise: NoiseModel) -> NoiseModel:
        if noise.dim != self.noise_dim:
            raise ValueError(
                f"noise dimension {noise.dim} does not match plant "
                f"({self.noise_injection.value} requires {self.noise_dim})"
            )
        return noise

    def step(self, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Advance one step. Single fixed evaluation order: A x + B u (+ B w | + w)."""
        x = as_vector(x, self.n, "x")
        u = as_vector(u, self.p, "u")
        w = as_vector(w, self.noise_dim, "w")
        if self.noise_injection is NoiseInjection.STATE_ADDITIVE:
            return self.A @ x + self.B @ u + w
        return self.A @ x + self.B @ u + self.B @ w


@dataclass(frozen=True, eq=False)
class Transition:
    """One step of experience: state, input, reward, successor state."""

    x: np.ndarray
    u: np.ndarray
    reward: float
    x_next: np.ndarray


@dataclass
class Rollout:
    """Trajectory container; ``diverged`` marks truncation by the magnitude guard."""

    transitions: list[Transition] = field(default_factory=list)
    diverged: bool = False

    def states(self) -> np.ndarray:
        return np.array([t.x for t in self.transitions])

    def inputs(self) -> np.ndarray:
        return np.array([t.u for t in self.transitions])

    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions])


def rollout(
    system: LtiSystem,
    noise: NoiseModel,
    policy,
    x0,
    steps: int,
    rng: np.random.Generator,
    reward_fn=None,
) -> Rollout:
    """Simulate ``steps`` closed-loop transitions from x0.

    ``policy`` is anything with ``predict(x) -> u``. ``reward_fn(x, u, x_next)``
    fills the reward field; omitted, rewards are zero. The result is
    deterministic given the generator state, and truncates with
    ``diverged=True`` once a state component passes the magnitude guard.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    system.check_noise(noise)
    x = as_vector(x0, system.n, "x0")
    out = Rollout()
    for _ in range(steps):
        u = np.asarray(policy.predict(x), dtype=float).reshape(system.p)
        w = noise.sample(rng)
        x_next = system.step(x, u, w)
        r = 0.0 if reward_fn is None else float(reward_fn(x, u, x_next))
        out.transitions.append(Transition(x=x, u=u, reward=r, x_next=x_next))
        if not np.all(np.isfinite(x_next)) or np.abs(x_next).max() > DIVERGENCE_LIMIT:
            out.diverged = True
            break
        x = x_next
    return out
