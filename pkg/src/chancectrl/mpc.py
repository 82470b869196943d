"""Scenario-based chance-constrained MPC baseline.

At every time step the planner draws S independent disturbance sequences over
the horizon, then minimizes the summed scenario cost

    sum_s sum_i  f(x_i^(s), u_i) + penalty * 1{f_c(x_{i+1}^(s)) >= threshold}

over the shared T-step input sequence with the cross-entropy method, and
applies the first input. The indicator makes the objective discontinuous, so
a population-based optimizer is used instead of a smooth solver.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .bounds import ConstraintSpec, LinearConstraint, QuadraticConstraint
from .costs import CostSpec
from .dynamics import LtiSystem, NoiseInjection, NoiseModel, make_rng
from .riccati import AffinePolicy, RiccatiError, lqr_policy, solve_riccati
from .validation import as_vector


@dataclass
class PlanInfo:
    """Diagnostics from one planning call."""

    best_cost: float
    initial_cost: float
    improved: bool
    runtime_s: float


def _stack_noise(system: LtiSystem, noise_draws: np.ndarray) -> np.ndarray:
    """Map raw disturbance draws to their additive state-space effect."""
    if system.noise_injection is NoiseInjection.THROUGH_INPUT:
        return noise_draws @ system.B.T
    return noise_draws


def _indicator(constraint: ConstraintSpec, states: np.ndarray) -> np.ndarray:
    """Violation indicator per row of a (..., n) state array."""
    if isinstance(constraint, QuadraticConstraint):
        vals = np.einsum("...i,ij,...j->...", states, constraint.Q, states)
    else:
        vals = states @ constraint.q
    return vals >= constraint.threshold


def scenario_cost(
    system: LtiSystem,
    cost: CostSpec,
    constraint: ConstraintSpec | None,
    x0,
    u_seq: np.ndarray,
    noise_seqs: np.ndarray,
    penalty: float,
) -> float:
    """Summed cost of one input sequence across scenarios.

    ``u_seq`` is (T, p); ``noise_seqs`` is (S, T, noise_dim), one disturbance
    per scenario and per step. Each stage contributes f(x_i, u_i) plus the
    penalty if the successor state violates the constraint; there is no
    terminal cost. The scenario sum is order-invariant.
    """
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, system.p)
    costs = _scenario_cost_batch(
        system, cost, constraint, as_vector(x0, system.n, "x0"),
        u_seq[None, :, :], np.asarray(noise_seqs, dtype=float), penalty,
    )
    return float(costs[0])


def _scenario_cost_batch(
    system: LtiSystem,
    cost: CostSpec,
    constraint: ConstraintSpec | None,
    x0: np.ndarray,
    u_pop: np.ndarray,
    noise_seqs: np.ndarray,
    penalty: float,
) -> np.ndarray:
    """Vectorized scenario cost for a population of input sequences.

    ``u_pop`` is (pop, T, p); returns (pop,) summed costs over the S scenarios.
    """
    pop, T, _ = u_pop.shape
    S = noise_seqs.shape[0]
    additive = _stack_noise(system, noise_seqs)            # (S, T, n)
    x = np.broadcast_to(x0, (pop, S, system.n)).copy()
    total = np.zeros(pop)
    for i in range(T):
        u = u_pop[:, i, :]                                  # (pop, p)
        stage = (
            np.einsum("psi,ij,psj->ps", x, cost.W, x)
            + (np.einsum("pi,ij,pj->p", u, cost.U, u))[:, None]
        )
        total += stage.sum(axis=1)
        x = x @ system.A.T + (u @ system.B.T)[:, None, :] + additive[:, i, :]
        if constraint is not None and penalty > 0.0:
            total += penalty * _indicator(constraint, x).sum(axis=1)
    return total


def plan(
    system: LtiSystem,
    noise: NoiseModel,
    cost: CostSpec,
    constraint: ConstraintSpec | None,
    x0,
    rng: np.random.Generator,
    scenarios: int = 20,
    horizon: int = 5,
    penalty: float = 0.0,
    population: int = 200,
    elite_frac: float = 0.1,
    iterations: int = 15,
    init_std: float = 2.0,
    warm_start: AffinePolicy | None = None,
) -> tuple[np.ndarray, PlanInfo]:
    """Plan one step: sample scenarios, optimize the input sequence, return u_1.

    Deterministic given the generator state. The search keeps the best
    sequence seen so far, so more iterations never return a worse cost.
    """
    t_start = time.perf_counter()
    x0 = as_vector(x0, system.n, "x0")
    S, T, p = scenarios, horizon, system.p
    n_elite = max(1, int(round(population * elite_frac)))
    noise_seqs = noise.sample_n(rng, S * T).reshape(S, T, noise.dim)

    if warm_start is not None:
        mean = np.empty((T, p))
        x = x0
        mean_noise = noise.mean_vector
        for i in range(T):
            mean[i] = warm_start.predict(x)
            x = system.step(x, mean[i], mean_noise)
    else:
        mean = np.zeros((T, p))
    std = np.full((T, p), init_std)

    best_u = mean.copy()
    best_cost = _scenario_cost_batch(
        system, cost, constraint, x0, mean[None, :, :], noise_seqs, penalty
    )[0]
    initial_cost = best_cost

    for _ in range(iterations):
        draws = rng.standard_normal((population, T, p))
        candidates = mean + std * draws
        costs = _scenario_cost_batch(
            system, cost, constraint, x0, candidates, noise_seqs, penalty
        )
        order = np.argsort(costs, kind="stable")
        elite = candidates[order[:n_elite]]
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best_u = candidates[order[0]].copy()
        mean = elite.mean(axis=0)
        std = elite.std(axis=0) + 1e-12
    improved = best_cost < initial_cost
    if not improved:
        warnings.warn("planner failed to improve on the warm start; returning best found",
                      RuntimeWarning, stacklevel=2)
    info = PlanInfo(best_cost=float(best_cost), initial_cost=float(initial_cost),
                    improved=improved, runtime_s=time.perf_counter() - t_start)
    return best_u[0].copy(), info


class MpcController(BaseEstimator):
    """Receding-horizon scenario planner behind the fit/predict interface.

    ``fit`` stores the plant, primes the LQR warm start when the Riccati
    solve succeeds, and resets the per-call stream counter so a refitted
    controller reproduces its action sequence exactly. Every ``predict`` call
    plans from scratch with a freshly split stream; planning cost grows with
    scenarios * horizon^2, and the per-call runtime is recorded in
    ``plan_infos_``.
    """

    def __init__(
        self,
        cost: CostSpec,
        constraint: ConstraintSpec | None = None,
        scenarios: int = 20,
        horizon: int = 5,
        penalty: float = 0.0,
        population: int = 200,
        elite_frac: float = 0.1,
        iterations: int = 15,
        init_std: float = 2.0,
        seed: int = 0,
    ):
        self.cost = cost
        self.constraint = constraint
        self.scenarios = scenarios
        self.horizon = horizon
        self.penalty = penalty
        self.population = population
        self.elite_frac = elite_frac
        self.iterations = iterations
        self.init_std = init_std
        self.seed = seed

    def _validate(self):
        if self.scenarios < 1 or self.horizon < 1:
            raise ValueError("scenarios and horizon must be >= 1")
        if self.penalty < 0.0:
            raise ValueError("penalty must be >= 0")
        if max(1, int(round(self.population * self.elite_frac))) > self.population:
            raise ValueError("elite fraction must select at most the population")

    def fit(self, system: LtiSystem, noise: NoiseModel):
        self._validate()
        system.check_noise(noise)
        self.system_ = system
        self.noise_ = noise
        try:
            self.warm_start_ = lqr_policy(solve_riccati(system, self.cost, noise))
        except (RiccatiError, ValueError):
            self.warm_start_ = None
        self.plan_infos_ = []
        self._call_index = 0
        return self

    def _plan_one(self, x: np.ndarray) -> np.ndarray:
        rng = make_rng(np.random.SeedSequence([int(self.seed), self._call_index]))
        self._call_index += 1
        u, info = plan(
            self.system_, self.noise_, self.cost, self.constraint, x, rng,
            scenarios=self.scenarios, horizon=self.horizon, penalty=self.penalty,
            population=self.population, elite_frac=self.elite_frac,
            iterations=self.iterations, init_std=self.init_std,
            warm_start=self.warm_start_,
        )
        self.plan_infos_.append(info)
        return u

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "system_"):
            raise RuntimeError("MpcController is not fitted; call fit(system, noise) first")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return self._plan_one(X)
        return np.stack([self._plan_one(row) for row in X])
