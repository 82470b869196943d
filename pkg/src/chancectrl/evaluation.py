"""Monte-Carlo policy evaluation, penalty grid search, and policy sweeps.

``evaluate`` runs M independent seeded trials of N steps each and reports the
time-averaged quadratic cost (no penalty term) together with the violation
rate of the one-step risky event. Trials draw from pre-split child streams
and aggregate in a fixed order, so reports are bit-reproducible.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace as dc_replace

import numpy as np
from sklearn.base import clone

from .bounds import ConstraintSpec
from .costs import CostSpec, stage_quadratic
from .dynamics import DIVERGENCE_LIMIT, LtiSystem, NoiseModel, make_rng
from .validation import as_vector


@dataclass(frozen=True)
class EvalProtocol:
    """Monte-Carlo budget: trials, steps per trial, initial state, seed."""

    trials: int = 100
    steps: int = 1000
    x0: object = None
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1 or self.steps < 1:
            raise ValueError("trials and steps must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    """Estimates from one evaluation run.

    ``delta_hat`` is violations / (trials * steps) exactly, and ``cv_percent``
    is 100 times that. ``jc`` averages the quadratic stage cost over all
    non-diverged trials. ``valid`` is False when more than 1% of trials
    diverged. ``mean_step_runtime_s`` measures the policy alone and is not
    part of the deterministic CSV surface.
    """

    jc: float
    cv_percent: float
    delta_hat: float
    violations: int
    trials: int
    steps: int
    seed: int
    policy: str
    diverged_trials: int
    valid: bool
    mean_step_runtime_s: float

    CSV_COLUMNS = ("jc", "cv_percent", "delta_hat", "violations", "trials",
                   "steps", "seed", "policy", "diverged_trials", "valid")

    def csv_row(self) -> tuple:
        return (self.jc, self.cv_percent, self.delta_hat, self.violations,
                self.trials, self.steps, self.seed, self.policy,
                self.diverged_trials, self.valid)


def evaluate(
    system: LtiSystem,
    noise: NoiseModel,
    cost: CostSpec,
    constraint: ConstraintSpec | None,
    policy,
    protocol: EvalProtocol,
    policy_name: str | None = None,
) -> EvalReport:
    """Estimate Jc and the violation rate of ``policy`` under the protocol.

    The policy is applied deterministically (no exploration noise). A trial
    whose state passes the divergence guard is dropped from the cost average
    but still counted in the report; the run is flagged invalid when more
    than 1% of trials diverge.
    """
    system.check_noise(noise)
    x0 = (np.zeros(system.n) if protocol.x0 is None
          else as_vector(protocol.x0, system.n, "x0"))
    streams = np.random.SeedSequence(protocol.seed).spawn(protocol.trials)

    violations = 0
    cost_sum = 0.0
    cost_steps = 0
    diverged = 0
    policy_time = 0.0
    policy_calls = 0

    for child in streams:
        rng = make_rng(child)
        x = x0.copy()
        trial_cost = 0.0
        trial_steps = 0
        trial_violations = 0
        trial_diverged = False
        for _ in range(protocol.steps):
            t0 = time.perf_counter()
            u = np.asarray(policy.predict(x), dtype=float).reshape(system.p)
            policy_time += time.perf_counter() - t0
            policy_calls += 1
            w = noise.sample(rng)
            x_next = system.step(x, u, w)
            trial_cost += stage_quadratic(cost, x, u)
            trial_steps += 1
            if constraint is not None and constraint.violated(x_next):
                trial_violations += 1
            if not np.all(np.isfinite(x_next)) or np.abs(x_next).max() > DIVERGENCE_LIMIT:
                trial_diverged = True
                break
            x = x_next
        violations += trial_violations
        if trial_diverged:
            diverged += 1
        else:
            cost_sum += trial_cost
            cost_steps += trial_steps

    valid = diverged <= 0.01 * protocol.trials
    if diverged:
        warnings.warn(
            f"{diverged} of {protocol.trials} trials diverged; they are excluded from Jc",
            RuntimeWarning, stacklevel=2,
        )
    total = protocol.trials * protocol.steps
    delta_hat = violations / total
    return EvalReport(
        jc=cost_sum / cost_steps if cost_steps else 0.0,
        cv_percent=100.0 * delta_hat,
        delta_hat=delta_hat,
        violations=violations,
        trials=protocol.trials,
        steps=protocol.steps,
        seed=protocol.seed,
        policy=policy_name if policy_name is not None else type(policy).__name__,
        diverged_trials=diverged,
        valid=valid,
        mean_step_runtime_s=policy_time / max(1, policy_calls),
    )


@dataclass
class GridSearchResult:
    """Penalty sweep table plus the selected multiplier, if any qualifies."""

    penalties: list[float]
    delta_hats: list[float]
    jcs: list[float]
    selected: float | None
    feasible: bool

    def rows(self):
        for p, d, j in zip(self.penalties, self.delta_hats, self.jcs):
            yield (p, d, j)


def _with_penalty(controller, value: float):
    """Clone the estimator with the risk multiplier set to ``value``."""
    new = clone(controller)
    params = new.get_params(deep=False)
    if "penalty" in params:
        new.set_params(penalty=float(value))
    elif "cost" in params and isinstance(params["cost"], CostSpec):
        new.set_params(cost=dc_replace(params["cost"], penalty=float(value)))
    else:
        raise ValueError("controller exposes neither a penalty nor a cost parameter")
    return new


def grid_search_penalty(
    controller,
    system: LtiSystem,
    noise: NoiseModel,
    constraint: ConstraintSpec,
    protocol: EvalProtocol,
    grid,
    target_delta: float | None = None,
) -> GridSearchResult:
    """Fit and evaluate the controller across a penalty grid.

    The grid must be non-empty and ascending. For each value the controller
    is cloned, refitted (a training controller learns a fresh policy; an
    analytic one just re-parameterizes), and evaluated. Selects the smallest
    penalty whose estimated violation rate meets the target; when none does,
    ``feasible`` is False. A non-monotone rate draws a warning, not an error,
    since the estimates carry Monte-Carlo noise.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("penalty grid must be non-empty")
    if sorted(grid) != grid:
        raise ValueError("penalty grid must be ascending")
    if target_delta is None:
        target_delta = constraint.delta

    penalties, delta_hats, jcs = [], [], []
    for value in grid:
        fitted = _with_penalty(controller, value).fit(system, noise)
        # Jc always averages the plain quadratic cost; the multiplier only
        # shapes the policy being evaluated.
        eval_cost = fitted.get_params(deep=False)["cost"]
        report = evaluate(system, noise, eval_cost, constraint, fitted, protocol)
        penalties.append(value)
        delta_hats.append(report.delta_hat)
        jcs.append(report.jc)

    total = protocol.trials * protocol.steps
    for a, b in zip(delta_hats[:-1], delta_hats[1:]):
        stderr = np.sqrt(max(a * (1 - a), 1e-12) / total)
        if b > a + 3 * stderr:
            warnings.warn(
                "violation rate is not non-increasing across the penalty grid "
                f"({a:.4g} -> {b:.4g}); Monte-Carlo noise or an unconverged policy",
                RuntimeWarning, stacklevel=2,
            )
            break

    selected = None
    for value, d in zip(penalties, delta_hats):
        if d <= target_delta:
            selected = value
            break
    return GridSearchResult(
        penalties=penalties, delta_hats=delta_hats, jcs=jcs,
        selected=selected, feasible=selected is not None,
    )


def mc_violation_estimate(
    system: LtiSystem,
    noise: NoiseModel,
    constraint: ConstraintSpec,
    x,
    u,
    draws: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte-Carlo frequency of the one-step risky event, with its standard error.

    Draws ``draws`` disturbances, steps the plant once from (x, u), and counts
    violations of the constraint at the successor state.
    """
    x = as_vector(x, system.n, "x")
    u = as_vector(u, system.p, "u")
    w = noise.sample_n(rng, draws)
    base = system.A @ x + system.B @ u
    if system.noise_injection.value == "through_input":
        successors = base + w @ system.B.T
    else:
        successors = base + w
    from .bounds import QuadraticConstraint

    if isinstance(constraint, QuadraticConstraint):
        vals = np.einsum("ij,jk,ik->i", successors, constraint.Q, successors)
    else:
        vals = successors @ constraint.q
    freq = float(np.mean(vals >= constraint.threshold))
    stderr = float(np.sqrt(max(freq * (1.0 - freq), 1.0 / draws) / draws))
    return freq, stderr


def state_input_sweep(policy, component: int, lo: float, hi: float,
                      points: int, state_dim: int) -> np.ndarray:
    """Sweep one state component with the others pinned at zero.

    Returns a (points, 2) array of (state component value, first input
    component), the data behind the state-vs-input diagnostic plot.
    """
    if points < 2:
        raise ValueError("points must be >= 2")
    if not 0 <= component < state_dim:
        raise ValueError(f"component must index a state dimension < {state_dim}")
    grid = np.linspace(lo, hi, points)
    states = np.zeros((points, state_dim))
    states[:, component] = grid
    actions = np.asarray(policy.predict(states), dtype=float)
    if actions.ndim == 1:
        actions = actions[:, None]
    return np.column_stack([grid, actions[:, 0]])
