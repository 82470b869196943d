"""Risk-neutral LQR baseline: Riccati fixed point, gain, and affine offset.

The stationary cost-to-go matrix S solves

    S = A' S A + W - A' S B (B' S B + U)^{-1} B' S A

and the optimal stationary feedback is u = K x + l with
K = -(B' S B + U)^{-1} B' S A.  The offset l compensates a non-zero
disturbance mean when the noise enters through the input matrix:
l = -sum_j pi_j mu_j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator

from .costs import CostSpec
from .dynamics import LtiSystem, NoiseInjection, NoiseModel
from .validation import freeze

RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 100_000
RESIDUAL_LIMIT = 1e-8


class RiccatiError(RuntimeError):
    """Fixed-point iteration failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class LqrSolution:
    """Converged Riccati solution with gain, offset, and fixed-point defect."""

    S: np.ndarray
    K: np.ndarray
    l: np.ndarray
    residual: float
    iterations: int


def _gain(A: np.ndarray, B: np.ndarray, S: np.ndarray, U: np.ndarray) -> np.ndarray:
    # (B'SB + U) is SPD, so solve through its Cholesky factorization.
    return -cho_solve(cho_factor(B.T @ S @ B + U), B.T @ S @ A)


def _riccati_map(A, B, W, U, S):
    return A.T @ S @ A + W - A.T @ S @ B @ (-_gain(A, B, S, U))


def solve_riccati(
    system: LtiSystem,
    cost: CostSpec,
    noise: NoiseModel | None = None,
    start: np.ndarray | None = None,
    tol: float = RICCATI_TOL,
    max_iter: int = RICCATI_MAX_ITER,
) -> LqrSolution:
    """Solve the stationary Riccati equation by fixed-point iteration from S0 = W.

    Iterates until the relative Frobenius change drops below ``tol``; raises
    :class:`RiccatiError` when the iteration budget runs out. The closed loop
    A + B K must be strictly stable, which also certifies stabilizability
    a posteriori.

    ``noise`` is only consulted for the affine offset: a non-zero mean is
    compensated for input-side injection and rejected (configuration error)
    for state-additive injection, where a gain offset cannot cancel it.
    """
    A, B = system.A, system.B
    W, U = cost.W, cost.U
    S = W.copy() if start is None else np.array(start, dtype=float)
    change = np.inf
    for it in range(1, max_iter + 1):
        S_next = _riccati_map(A, B, W, U, S)
        S_next = 0.5 * (S_next + S_next.T)
        change = np.linalg.norm(S_next - S) / max(1.0, np.linalg.norm(S_next))
        S = S_next
        if change < tol:
            break
    residual = float(np.linalg.norm(_riccati_map(A, B, W, U, S) - S))
    if change >= tol:
        raise RiccatiError("Riccati iteration did not converge", residual)

    K = _gain(A, B, S, U)
    rho = float(np.abs(np.linalg.eigvals(A + B @ K)).max())
    if rho >= 1.0:
        raise RiccatiError(
            f"closed loop is not stable (spectral radius {rho:.6f}); (A, B) may not be stabilizable",
            residual,
        )

    l = np.zeros(system.p)
    if noise is not None:
        mean = noise.mean_vector
        if np.any(mean != 0.0):
            if system.noise_injection is not NoiseInjection.THROUGH_INPUT:
                raise ValueError(
                    "non-zero-mean state-additive noise has no gain offset; "
                    "center the noise or use through-input injection"
                )
            l = -mean
    return LqrSolution(S=freeze(S), K=freeze(K), l=freeze(l), residual=residual, iterations=it)


class AffinePolicy:
    """Linear/affine state feedback u = K x + l; the uniform policy interface."""

    def __init__(self, K, l=None):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.l = np.zeros(self.K.shape[0]) if l is None else np.asarray(l, dtype=float)
        if self.l.shape != (self.K.shape[0],):
            raise ValueError("offset length must match the gain's row count")

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return self.K @ X + self.l
        return X @ self.K.T + self.l


def lqr_policy(solution: LqrSolution) -> AffinePolicy:
    """Stationary policy u = K x + l from a converged solution."""
    return AffinePolicy(solution.K, solution.l)


class LqrController(BaseEstimator):
    """Risk-neutral LQR baseline with the fit/predict estimator interface.

    Parameters
    ----------
    cost : CostSpec
        Quadratic stage-cost weights; the risk penalty field is ignored here.

    After ``fit(system, noise)`` the fitted attributes are ``solution_``,
    ``gain_``, ``offset_`` and ``policy_``; ``predict`` maps states (single
    vector or row-stacked batch) to inputs.
    """

    def __init__(self, cost: CostSpec):
        self.cost = cost

    def fit(self, system: LtiSystem, noise: NoiseModel | None = None):
        self.system_ = system
        self.solution_ = solve_riccati(system, self.cost, noise)
        self.gain_ = self.solution_.K
        self.offset_ = self.solution_.l
        self.policy_ = lqr_policy(self.solution_)
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "policy_"):
            raise RuntimeError("LqrController is not fitted; call fit(system, noise) first")
        return self.policy_.predict(X)
