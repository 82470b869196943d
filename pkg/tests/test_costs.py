import math

import numpy as np
import pytest

from chancectrl import (
    CostSpec,
    GaussianNoise,
    LinearConstraint,
    LtiSystem,
    QuadraticConstraint,
    RewardMode,
    discounted_return,
    make_reward_fn,
    make_rng,
    reward,
    stage_penalized_known,
    stage_penalized_unknown,
    stage_quadratic,
)

W2 = np.array([[1.5, 0.25], [0.25, 2.5]])
U2 = np.diag([40.0, 70.0])
UAV_W = np.diag([1.0, 0.1, 2.0, 0.2])


def scalar_setup():
    sys = LtiSystem([[0.0]], [[0.0]])
    noise = GaussianNoise([0.0], [[1.0]])
    con = QuadraticConstraint([[1.0]], threshold=4.0, delta=0.1)
    cost = CostSpec([[1.0]], [[1.0]], penalty=10.0)
    return sys, noise, con, cost


class TestStageQuadratic:
    def test_zero_at_origin(self):
        cost = CostSpec(W2, U2)
        assert stage_quadratic(cost, [0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_second_order_first_entry(self):
        cost = CostSpec(W2, U2)
        assert stage_quadratic(cost, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(1.5)

    def test_uav_all_ones(self):
        cost = CostSpec(UAV_W, np.eye(2))
        assert stage_quadratic(cost, [1.0] * 4, [1.0, 1.0]) == pytest.approx(5.3)

    def test_positive_off_origin(self):
        cost = CostSpec(W2, U2)
        assert stage_quadratic(cost, [0.1, -0.1], [0.0, 0.0]) > 0.0


class TestPenalizedKnown:
    def test_zero_multiplier_equals_quadratic(self):
        sys, noise, con, _ = scalar_setup()
        cost = CostSpec([[1.0]], [[1.0]], penalty=0.0)
        assert stage_penalized_known(cost, sys, noise, con, [0.5], [0.2]) == \
            stage_quadratic(cost, [0.5], [0.2])

    def test_clamped_bound_adds_full_penalty(self):
        # mean state already violates: the bound clamps to one
        sys = LtiSystem([[1.0]], [[1.0]])
        noise = GaussianNoise([0.0], [[1.0]])
        con = QuadraticConstraint([[1.0]], threshold=1.0, delta=0.1)
        cost = CostSpec([[1.0]], [[1.0]], penalty=100.0)
        x, u = [3.0], [0.0]
        assert stage_penalized_known(cost, sys, noise, con, x, u) == \
            pytest.approx(stage_quadratic(cost, x, u) + 100.0)

    def test_scalar_chernoff_value(self):
        sys, noise, con, cost = scalar_setup()
        value = stage_penalized_known(cost, sys, noise, con, [0.0], [0.0])
        assert value == pytest.approx(10.0 * 2.0 * math.exp(-1.5), rel=1e-8)


class TestPenalizedUnknown:
    def test_boundary_counts_as_violation(self):
        con = QuadraticConstraint(np.eye(2), threshold=2.0, delta=0.1)
        cost = CostSpec(W2, U2, penalty=5.0)
        base = stage_quadratic(cost, [0.0, 0.0], [0.0, 0.0])
        assert stage_penalized_unknown(cost, con, [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]) == base + 5.0

    def test_all_zero(self):
        con = QuadraticConstraint(np.eye(2), threshold=1.0, delta=0.1)
        cost = CostSpec(W2, U2, penalty=5.0)
        assert stage_penalized_unknown(cost, con, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_uav_quadratic_event(self):
        # x'(2W)x at (10,0,0,0) is 200 >= 80, so the penalty applies
        con = QuadraticConstraint(2.0 * UAV_W, threshold=80.0, delta=0.05)
        cost = CostSpec(UAV_W, np.eye(2), penalty=100.0)
        x = [1.0, 0.0, 0.0, 0.0]
        u = [0.0, 0.0]
        value = stage_penalized_unknown(cost, con, x, u, [10.0, 0.0, 0.0, 0.0])
        assert value == pytest.approx(stage_quadratic(cost, x, u) + 100.0)


class TestReward:
    def test_risk_neutral_zero(self):
        cost = CostSpec(W2, U2)
        assert reward(RewardMode.RISK_NEUTRAL, cost, [0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_known_model_sign(self):
        sys, noise, con, cost = scalar_setup()
        r = reward(RewardMode.KNOWN_MODEL, cost, [0.3], [0.1],
                   system=sys, noise=noise, constraint=con)
        assert r == -stage_penalized_known(cost, sys, noise, con, [0.3], [0.1])

    def test_unknown_model_composition(self):
        con = QuadraticConstraint(2.0 * UAV_W, threshold=80.0, delta=0.05)
        cost = CostSpec(UAV_W, np.eye(2), penalty=100.0)
        x, u, xn = [1.0, 0.0, 0.0, 0.0], [0.0, 0.0], [10.0, 0.0, 0.0, 0.0]
        r = reward(RewardMode.UNKNOWN_MODEL, cost, x, u, x_next=xn, constraint=con)
        assert r == -(stage_quadratic(cost, x, u) + 100.0)

    def test_reward_fn_matches_reward(self):
        sys, noise, con, cost = scalar_setup()
        fn = make_reward_fn(RewardMode.KNOWN_MODEL, cost, system=sys, noise=noise, constraint=con)
        assert fn([0.4], [0.0], None) == pytest.approx(
            reward(RewardMode.KNOWN_MODEL, cost, [0.4], [0.0],
                   system=sys, noise=noise, constraint=con))

    def test_missing_arguments_raise(self):
        cost = CostSpec(W2, U2)
        with pytest.raises(ValueError):
            reward(RewardMode.KNOWN_MODEL, cost, [0.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            reward(RewardMode.UNKNOWN_MODEL, cost, [0.0, 0.0], [0.0, 0.0])


class TestDiscountedReturn:
    def test_single_reward(self):
        assert discounted_return([1.0], 0.5) == 1.0

    def test_geometric_series(self):
        total = discounted_return([1.0] * 1000, 0.99)
        expected = (1.0 - 0.99 ** 1000) / (1.0 - 0.99)
        assert total == pytest.approx(expected, rel=1e-12)
        assert total == pytest.approx(99.99568, abs=1e-4)

    def test_zeros(self):
        assert discounted_return([0.0] * 10, 0.9) == 0.0

    def test_gamma_range_enforced(self):
        with pytest.raises(ValueError):
            discounted_return([1.0], 1.0)


class TestIndicatorExpectationIdentity:
    def test_linear_constraint_indicator_average_matches_exact_probability(self):
        # model-free penalized cost averaged over sampled successors converges
        # to the model-based penalized cost when the risk term is exact
        sys = LtiSystem([[1.0, 0.3], [0.3, 1.1]], [[0.9, 0.5], [0.1, 1.2]])
        noise = GaussianNoise([0.0, 0.0], 2.0 * np.eye(2))
        con = LinearConstraint([1.0, 0.5], threshold=3.0, delta=0.1)
        cost = CostSpec(W2, U2, penalty=50.0)
        x, u = np.array([0.5, -0.3]), np.array([0.2, 0.1])
        rng = make_rng(4)
        draws = noise.sample_n(rng, 100_000)
        succ = sys.A @ x + sys.B @ u + draws
        samples = np.where(succ @ con.q >= con.threshold,
                           stage_quadratic(cost, x, u) + cost.penalty,
                           stage_quadratic(cost, x, u))
        exact = stage_penalized_known(cost, sys, noise, con, x, u)
        se = cost.penalty * np.sqrt(0.25 / len(samples))
        assert samples.mean() == pytest.approx(exact, abs=3 * se)

    def test_quadratic_constraint_bound_dominates_indicator_average(self):
        sys = LtiSystem([[1.0, 0.3], [0.3, 1.1]], [[0.9, 0.5], [0.1, 1.2]])
        noise = GaussianNoise([0.0, 0.0], 2.0 * np.eye(2))
        con = QuadraticConstraint(3.0 * W2, threshold=95.0, delta=0.1)
        cost = CostSpec(W2, U2, penalty=50.0)
        x, u = np.array([1.0, 1.0]), np.array([0.0, 0.0])
        rng = make_rng(9)
        draws = noise.sample_n(rng, 100_000)
        succ = sys.A @ x + sys.B @ u + draws
        vals = np.einsum("ij,jk,ik->i", succ, con.Q, succ)
        base = stage_quadratic(cost, x, u)
        mc_mean = base + cost.penalty * float(np.mean(vals >= con.threshold))
        known = stage_penalized_known(cost, sys, noise, con, x, u)
        se = cost.penalty * np.sqrt(0.25 / len(draws))
        assert known >= mc_mean - 3 * se
