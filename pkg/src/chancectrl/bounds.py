"""Analytic risk terms for one-step chance constraints.

Given the predicted next-state mean xhat = A x + B u, the probability of the
risky event f_c(x') >= threshold is handled per constraint form:

* quadratic f_c(x') = x' Q x': upper-bounded by the Chernoff bound
  inf_{s >= 0} exp(-(threshold - d) s) E[exp(s y)], where d = xhat' Q xhat and
  y = w' Qe w + a' w collects the noise contribution. For state-additive noise
  Qe = Q and a = 2 Q xhat; when the noise enters through the input matrix,
  Qe = B' Q B and a = 2 B' Q xhat.
* linear f_c(x') = q' x': evaluated exactly from the Gaussian (or mixture of
  Gaussian) distribution of q' w.

The moment generating function of y for w ~ N(mu, Sigma) is

    M(s) = exp(s (mu' Qe mu + a' mu) + s^2/2 * sum_j b_j^2 / (1 - 2 s lam_j))
           * prod_j (1 - 2 s lam_j)^(-1/2)

with lam_j the eigenvalues of Sigma^(1/2) Qe Sigma^(1/2) (symmetric square
root), P the orthonormal eigenvectors, and b = P'(Sigma^(1/2) a +
2 Sigma^(1/2) Qe mu). A mixture's MGF is the weight-convex combination of its
component MGFs, optimized over a single shared s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dynamics import GaussianNoise, LtiSystem, NoiseInjection, NoiseModel
from .validation import as_vector, check_spd, check_symmetric, freeze

# Cap on the search interval when the quadratic part vanishes and the MGF
# domain is unbounded.
S_MAX_CAP = 1e3
TERNARY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """Risky event x' Q x >= threshold with violation budget delta."""

    Q: np.ndarray
    threshold: float
    delta: float = 0.1

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        check_spd(Q, "constraint Q")
        if not self.threshold > 0.0:
            raise ValueError("constraint threshold must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("constraint delta must lie in (0, 1)")
        object.__setattr__(self, "Q", freeze(Q))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "delta", float(self.delta))

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x)

    def violated(self, x: np.ndarray) -> bool:
        # Boundary ties count as violations (closed event set).
        return self.value(x) >= self.threshold


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """Risky event q' x >= threshold with violation budget delta."""

    q: np.ndarray
    threshold: float
    delta: float = 0.1

    def __post_init__(self):
        q = as_vector(self.q, name="constraint q")
        if not self.threshold > 0.0:
            raise ValueError("constraint threshold must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("constraint delta must lie in (0, 1)")
        object.__setattr__(self, "q", freeze(q))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "delta", float(self.delta))

    def value(self, x: np.ndarray) -> float:
        return float(self.q @ np.asarray(x, dtype=float))

    def violated(self, x: np.ndarray) -> bool:
        return self.value(x) >= self.threshold


ConstraintSpec = QuadraticConstraint | LinearConstraint


def standard_normal_cdf(z: float) -> float:
    """Phi(z) through the complementary error function."""
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def predict_mean(system: LtiSystem, x, u) -> np.ndarray:
    """Conditional mean of the next state, A x + B u.

    For input-side noise the disturbance mean is *not* folded in here; it
    enters the bound through the component means of the MGF.
    """
    x = as_vector(x, system.n, "x")
    u = as_vector(u, system.p, "u")
    return system.A @ x + system.B @ u


def _symmetric_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


class QuadFormMgf:
    """MGF of y = w' Q w + a' w for one Gaussian component w ~ N(mu, cov).

    Precomputes the eigen-data of cov^(1/2) Q cov^(1/2); the linear-term
    vector a varies per (x, u) query and is supplied per call.
    """

    def __init__(self, Q: np.ndarray, mean: np.ndarray, cov: np.ndarray):
        Q = check_symmetric(np.asarray(Q, dtype=float), "Q")
        self.mean = as_vector(mean, Q.shape[0], "mean")
        check_spd(np.asarray(cov, dtype=float), "cov")
        root = _symmetric_sqrt(np.asarray(cov, dtype=float))
        lam, P = np.linalg.eigh(root @ Q @ root)
        self.lam = lam
        self._proj = P.T @ root                      # maps a -> P'(cov^(1/2) a)
        self._b_mean = self._proj @ (2.0 * Q @ self.mean)
        self._mean_quad = float(self.mean @ Q @ self.mean)
        lam_max = float(lam.max())
        self.s_max = 1.0 / (2.0 * lam_max) if lam_max > 0.0 else math.inf

    def log_mgf(self, a: np.ndarray, s: float) -> float:
        """log E[exp(s y)] for 0 <= s < s_max; raises outside the domain."""
        if s < 0.0 or s >= self.s_max:
            raise ValueError(f"s={s} outside the MGF domain [0, {self.s_max})")
        b = self._proj @ a + self._b_mean
        denom = 1.0 - 2.0 * s * self.lam
        quad_term = 0.5 * s * s * float(np.sum(b * b / denom))
        # Log-space product term avoids overflow near the domain boundary.
        log_det_term = -0.5 * float(np.sum(np.log(denom)))
        return s * (self._mean_quad + float(a @ self.mean)) + quad_term + log_det_term

    def mgf(self, a: np.ndarray, s: float) -> float:
        return math.exp(self.log_mgf(a, s))


def gaussian_quadform_mgf(Q, mean, cov, a, s: float) -> float:
    """E[exp(s (w' Q w + a' w))] for w ~ N(mean, cov)."""
    ctx = QuadFormMgf(np.asarray(Q, dtype=float), mean, cov)
    return ctx.mgf(np.asarray(a, dtype=float), float(s))


def _ternary_min(fn, lo: float, hi: float, tol: float = TERNARY_TOL) -> float:
    """Minimizer of a convex 1-D function on [lo, hi] to absolute tolerance."""
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fn(m1) <= fn(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


class ChernoffEvaluator:
    """Chernoff bound on P{x'' Q x'' >= threshold | x, u} for a fixed plant and noise.

    Eigen-data per mixture component is precomputed once and shared read-only
    across queries; ``bound(x, u)`` runs the 1-D convex search per call.
    """

    def __init__(self, system: LtiSystem, noise: NoiseModel, constraint: QuadraticConstraint):
        if not isinstance(constraint, QuadraticConstraint):
            raise TypeError("ChernoffEvaluator requires a quadratic constraint")
        system.check_noise(noise)
        self.system = system
        self.constraint = constraint
        Q = constraint.Q
        if system.noise_injection is NoiseInjection.THROUGH_INPUT:
            self._Qe = system.B.T @ Q @ system.B
            self._lin_map = 2.0 * system.B.T @ Q        # a = 2 B' Q xhat
        else:
            self._Qe = Q
            self._lin_map = 2.0 * Q                     # a = 2 Q xhat
        comps = noise.components
        self._log_weights = np.log(np.array([w for w, _, _ in comps]))
        self._mgfs = [QuadFormMgf(self._Qe, mu, cov) for _, mu, cov in comps]
        # The shared s must respect the tightest component domain.
        s_max = min(m.s_max for m in self._mgfs)
        self.s_max = s_max if math.isfinite(s_max) else S_MAX_CAP

    def log_mixture_mgf(self, a: np.ndarray, s: float) -> float:
        logs = np.array([m.log_mgf(a, s) for m in self._mgfs])
        return float(logsumexp(self._log_weights + logs))

    def bound(self, x, u) -> float:
        xhat = predict_mean(self.system, x, u)
        d = float(xhat @ self.constraint.Q @ xhat)
        eps = self.constraint.threshold
        if eps <= d:
            # The exponent is non-decreasing in s, so the infimum sits at
            # s = 0 where the objective equals one.
            return 1.0
        a = self._lin_map @ xhat

        def objective(s: float) -> float:
            return -(eps - d) * s + self.log_mixture_mgf(a, s)

        s_star = _ternary_min(objective, 0.0, 0.999999 * self.s_max)
        value = math.exp(objective(s_star))
        if not math.isfinite(value):
            raise ArithmeticError(
                f"Chernoff objective non-finite at s={s_star} (threshold {eps}, d={d})"
            )
        return min(1.0, value)


def chernoff_quadratic(
    system: LtiSystem,
    noise: NoiseModel,
    constraint: QuadraticConstraint,
    x,
    u,
) -> float:
    """One-shot Chernoff bound; build a :class:`ChernoffEvaluator` for repeated use."""
    return ChernoffEvaluator(system, noise, constraint).bound(x, u)


def tail_linear(
    system: LtiSystem,
    noise: NoiseModel,
    constraint: LinearConstraint,
    x,
    u,
) -> float:
    """Exact probability P{q' x'' >= threshold | x, u} for linear risky events.

    q' x'' is Gaussian per mixture component: state-additive noise contributes
    mean q' mu and variance q' cov q; input-side noise contributes q' B mu and
    q' B cov B' q. The result is the weight-convex combination of upper tails.
    """
    if not isinstance(constraint, LinearConstraint):
        raise TypeError("tail_linear requires a linear constraint")
    system.check_noise(noise)
    q = constraint.q
    if q.shape != (system.n,):
        raise ValueError(f"constraint q must have length {system.n}")
    base = float(q @ predict_mean(system, x, u))
    if system.noise_injection is NoiseInjection.THROUGH_INPUT:
        qw = system.B.T @ q
    else:
        qw = q
    prob = 0.0
    for weight, mu, cov in noise.components:
        var = float(qw @ cov @ qw)
        if var <= 1e-300:
            raise ValueError("linear tail is degenerate: q' cov q is numerically zero")
        z = (constraint.threshold - base - float(qw @ mu)) / math.sqrt(var)
        prob += weight * (1.0 - standard_normal_cdf(z))
    return prob


def constraint_probability(
    system: LtiSystem,
    noise: NoiseModel,
    constraint: ConstraintSpec,
    x,
    u,
) -> float:
    """Analytic value of the per-stage risk term for either constraint form."""
    if isinstance(constraint, QuadraticConstraint):
        return chernoff_quadratic(system, noise, constraint, x, u)
    return tail_linear(system, noise, constraint, x, u)
