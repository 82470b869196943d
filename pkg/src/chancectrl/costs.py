"""Per-stage costs and rewards for every controller variant.

The base stage cost is f(x, u) = x' W x + u' U u. The risk-penalized variants
add ``penalty * risk``, where the risk term is either the analytic bound /
probability (model available) or the observed violation indicator of the next
state (model-free). Rewards are the negated costs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bounds import ChernoffEvaluator, ConstraintSpec, QuadraticConstraint, constraint_probability, tail_linear
from .dynamics import LtiSystem, NoiseModel
from .validation import as_vector, check_spd, freeze


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Quadratic stage-cost weights plus the risk multiplier and discount."""

    W: np.ndarray
    U: np.ndarray
    penalty: float = 0.0
    gamma: float = 0.99

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        U = np.asarray(self.U, dtype=float)
        check_spd(W, "cost W")
        check_spd(U, "cost U")
        if self.penalty < 0.0:
            raise ValueError("penalty must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        object.__setattr__(self, "W", freeze(W))
        object.__setattr__(self, "U", freeze(U))
        object.__setattr__(self, "penalty", float(self.penalty))
        object.__setattr__(self, "gamma", float(self.gamma))


class RewardMode(Enum):
    """Which per-stage cost the reward negates."""

    RISK_NEUTRAL = "risk_neutral"
    KNOWN_MODEL = "known_model"        # analytic risk term, needs system + noise
    UNKNOWN_MODEL = "unknown_model"    # observed indicator, needs x_next


def stage_quadratic(cost: CostSpec, x, u) -> float:
    """f(x, u) = x' W x + u' U u; nonnegative, zero only at the origin."""
    x = as_vector(x, cost.W.shape[0], "x")
    u = as_vector(u, cost.U.shape[0], "u")
    return float(x @ cost.W @ x + u @ cost.U @ u)


def stage_penalized_known(
    cost: CostSpec,
    system: LtiSystem,
    noise: NoiseModel,
    constraint: ConstraintSpec,
    x,
    u,
) -> float:
    """f(x, u) + penalty * analytic risk term (bound or exact tail)."""
    risk = constraint_probability(system, noise, constraint, x, u)
    return stage_quadratic(cost, x, u) + cost.penalty * risk


def stage_penalized_unknown(cost: CostSpec, constraint: ConstraintSpec, x, u, x_next) -> float:
    """f(x, u) + penalty whenever the observed next state violates the constraint."""
    base = stage_quadratic(cost, x, u)
    if constraint.violated(np.asarray(x_next, dtype=float)):
        return base + cost.penalty
    return base


def reward(
    mode: RewardMode,
    cost: CostSpec,
    x,
    u,
    x_next=None,
    system: LtiSystem | None = None,
    noise: NoiseModel | None = None,
    constraint: ConstraintSpec | None = None,
) -> float:
    """Negative per-stage cost for the selected mode."""
    if mode is RewardMode.RISK_NEUTRAL:
        return -stage_quadratic(cost, x, u)
    if mode is RewardMode.KNOWN_MODEL:
        if system is None or noise is None or constraint is None:
            raise ValueError("known-model reward needs system, noise, and constraint")
        return -stage_penalized_known(cost, system, noise, constraint, x, u)
    if x_next is None or constraint is None:
        raise ValueError("unknown-model reward needs constraint and the observed x_next")
    return -stage_penalized_unknown(cost, constraint, x, u, x_next)


def make_reward_fn(
    mode: RewardMode,
    cost: CostSpec,
    system: LtiSystem | None = None,
    noise: NoiseModel | None = None,
    constraint: ConstraintSpec | None = None,
):
    """Bind a ``(x, u, x_next) -> reward`` evaluator for the selected mode.

    The known-model quadratic case caches the Chernoff eigen-data once
    instead of re-factorizing per step.
    """
    if mode is RewardMode.RISK_NEUTRAL:
        return lambda x, u, x_next: -stage_quadratic(cost, x, u)
    if constraint is None:
        raise ValueError(f"{mode.value} reward needs a constraint")
    if mode is RewardMode.KNOWN_MODEL:
        if system is None or noise is None:
            raise ValueError("known-model reward needs system and noise")
        if isinstance(constraint, QuadraticConstraint):
            evaluator = ChernoffEvaluator(system, noise, constraint)

            def fn(x, u, x_next):
                return -(stage_quadratic(cost, x, u) + cost.penalty * evaluator.bound(x, u))

            return fn

        def fn(x, u, x_next):
            risk = tail_linear(system, noise, constraint, x, u)
            return -(stage_quadratic(cost, x, u) + cost.penalty * risk)

        return fn
    return lambda x, u, x_next: -stage_penalized_unknown(cost, constraint, x, u, x_next)


def discounted_return(rewards, gamma: float) -> float:
    """sum_i gamma^i * r_i over a finite reward sequence."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    total = 0.0
    factor = 1.0
    for r in rewards:
        total += factor * float(r)
        factor *= gamma
    return total
