import time

import numpy as np
import pytest

from chancectrl import (
    CostSpec,
    GaussianNoise,
    GmmNoise,
    LtiSystem,
    MpcController,
    NoiseInjection,
    QuadraticConstraint,
    make_rng,
    plan,
    scenario_cost,
    solve_riccati,
    stage_quadratic,
)
from chancectrl.riccati import lqr_policy

A2 = [[1.0, 0.3], [0.3, 1.1]]
B2 = [[0.9, 0.5], [0.1, 1.2]]
W2 = np.array([[1.5, 0.25], [0.25, 2.5]])
U2 = np.diag([40.0, 70.0])


def second_order():
    return LtiSystem(A2, B2), CostSpec(W2, U2)


def tiny_noise(dim=2):
    return GaussianNoise(np.zeros(dim), 1e-12 * np.eye(dim))


def finite_horizon_optimum(system, cost, x0, horizon):
    """Dynamic-programming oracle: exact finite-horizon cost for the
    deterministic plant with stage cost f and no terminal cost."""
    A, B, W, U = system.A, system.B, cost.W, cost.U
    # backward Riccati recursion with zero terminal weight beyond the horizon
    S = np.zeros_like(W)
    gains = []
    for _ in range(horizon):
        K = -np.linalg.solve(B.T @ S @ B + U, B.T @ S @ A)
        S = W + K.T @ U @ K + (A + B @ K).T @ S @ (A + B @ K)
        gains.append(K)
    gains.reverse()
    x = np.asarray(x0, dtype=float)
    total = 0.0
    for K in gains:
        u = K @ x
        total += stage_quadratic(cost, x, u)
        x = A @ x + B @ u
    return total


class TestScenarioCost:
    def test_zero_everything(self):
        system, cost = second_order()
        u_seq = np.zeros((3, 2))
        noise_seqs = np.zeros((4, 3, 2))
        assert scenario_cost(system, cost, None, [0.0, 0.0], u_seq, noise_seqs, 0.0) == 0.0

    def test_single_stage_reduction(self):
        system, cost = second_order()
        con = QuadraticConstraint(np.eye(2), threshold=0.5, delta=0.1)
        x0 = [1.0, -1.0]
        u = np.array([[0.3, 0.2]])
        noise_seqs = np.zeros((1, 1, 2))
        x1 = system.step(x0, u[0], [0.0, 0.0])
        expected = stage_quadratic(cost, x0, u[0]) + 7.0 * float(con.violated(x1))
        assert scenario_cost(system, cost, con, x0, u, noise_seqs, 7.0) == pytest.approx(expected)

    def test_scenario_order_invariance(self):
        system, cost = second_order()
        con = QuadraticConstraint(np.eye(2), threshold=1.0, delta=0.1)
        rng = make_rng(3)
        u_seq = rng.normal(size=(5, 2))
        noise_seqs = rng.normal(size=(6, 5, 2))
        a = scenario_cost(system, cost, con, [0.5, 0.5], u_seq, noise_seqs, 4.0)
        b = scenario_cost(system, cost, con, [0.5, 0.5], u_seq, noise_seqs[::-1], 4.0)
        assert a == pytest.approx(b, rel=1e-14)

    def test_cem_reaches_dynamic_programming_cost(self):
        system, cost = second_order()
        x0 = [2.0, -1.0]
        horizon = 5
        optimum = finite_horizon_optimum(system, cost, x0, horizon)
        u, info = plan(system, tiny_noise(), cost, None, x0, make_rng(5),
                       scenarios=1, horizon=horizon, penalty=0.0,
                       warm_start=None)
        assert info.best_cost <= 1.02 * optimum


class TestPlan:
    def test_deterministic_given_rng_state(self):
        system, cost = second_order()
        noise = GaussianNoise([0.0, 0.0], 0.5 * np.eye(2))
        u1, _ = plan(system, noise, cost, None, [1.0, 0.0], make_rng(11))
        u2, _ = plan(system, noise, cost, None, [1.0, 0.0], make_rng(11))
        np.testing.assert_array_equal(u1, u2)

    def test_zero_state_zero_mean_noise_plans_near_zero(self):
        system, cost = second_order()
        sol = solve_riccati(system, cost)
        u, _ = plan(system, tiny_noise(), cost, None, [0.0, 0.0], make_rng(2),
                    warm_start=lqr_policy(sol))
        assert np.abs(u).max() < 0.05

    def test_matches_lqr_for_long_horizon(self):
        system, cost = second_order()
        sol = solve_riccati(system, cost)
        x0 = np.array([1.0, 0.0])
        expected = sol.K @ x0
        u, _ = plan(system, tiny_noise(), cost, None, x0, make_rng(4),
                    horizon=25, penalty=0.0, warm_start=lqr_policy(sol))
        np.testing.assert_allclose(u, expected, atol=0.05 * max(1e-2, np.abs(expected).max()))

    def test_more_iterations_never_worse(self):
        system, cost = second_order()
        noise = GaussianNoise([0.0, 0.0], 0.5 * np.eye(2))
        con = QuadraticConstraint(3.0 * W2, threshold=95.0, delta=0.1)
        costs = []
        for iters in (1, 5, 15, 25):
            _, info = plan(system, noise, cost, con, [3.0, 1.0], make_rng(9),
                           penalty=4.0, iterations=iters, warm_start=None)
            costs.append(info.best_cost)
        assert all(a >= b for a, b in zip(costs, costs[1:]))

    def test_huge_inactive_penalty_equals_zero_penalty(self):
        system, cost = second_order()
        con = QuadraticConstraint(np.eye(2), threshold=1e6, delta=0.1)
        u0, _ = plan(system, tiny_noise(), cost, con, [0.1, 0.1], make_rng(8), penalty=0.0)
        u1, _ = plan(system, tiny_noise(), cost, con, [0.1, 0.1], make_rng(8), penalty=1e6)
        np.testing.assert_array_equal(u0, u1)


class TestMpcController:
    def test_repeated_fit_reproduces_actions(self):
        system, cost = second_order()
        noise = GaussianNoise([0.0, 0.0], 0.5 * np.eye(2))
        ctl = MpcController(cost, scenarios=4, horizon=3, population=40, iterations=4, seed=3)
        a = ctl.fit(system, noise).predict([1.0, -2.0])
        b = ctl.fit(system, noise).predict([1.0, -2.0])
        np.testing.assert_array_equal(a, b)

    def test_unfitted_raises(self):
        _, cost = second_order()
        with pytest.raises(RuntimeError, match="not fitted"):
            MpcController(cost).predict([0.0, 0.0])

    def test_batch_predict_shape(self):
        system, cost = second_order()
        noise = GaussianNoise([0.0, 0.0], 0.5 * np.eye(2))
        ctl = MpcController(cost, scenarios=2, horizon=2, population=20, iterations=2, seed=0)
        out = ctl.fit(system, noise).predict(np.zeros((3, 2)))
        assert out.shape == (3, 2)
        assert len(ctl.plan_infos_) == 3

    def test_gmm_through_input_plant(self):
        system = LtiSystem(
            [[1.0, 0.5, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.5],
             [0.0, 0.0, 0.0, 1.0]],
            [[0.125, 0.0], [0.5, 0.0], [0.0, 0.125], [0.0, 0.5]],
            NoiseInjection.THROUGH_INPUT,
        )
        noise = GmmNoise(weights=[0.2, 0.8], means=[[3.0, 0.0], [8.0, 0.0]],
                         covs=[np.diag([30.0, 0.01]), np.diag([60.0, 0.01])])
        cost = CostSpec(np.diag([1.0, 0.1, 2.0, 0.2]), np.eye(2))
        con = QuadraticConstraint(2.0 * np.diag([1.0, 0.1, 2.0, 0.2]), threshold=80.0, delta=0.05)
        ctl = MpcController(cost, con, scenarios=5, horizon=3, penalty=5.0,
                            population=50, iterations=3, seed=1)
        u = ctl.fit(system, noise).predict(np.zeros(4))
        assert u.shape == (2,)
        assert np.all(np.isfinite(u))

    def test_per_call_runtime_grows_with_workload(self):
        system, cost = second_order()
        noise = GaussianNoise([0.0, 0.0], 0.5 * np.eye(2))

        def mean_runtime(scenarios, horizon, repeats=5):
            ctl = MpcController(cost, scenarios=scenarios, horizon=horizon,
                                population=100, iterations=8, seed=0)
            ctl.fit(system, noise)
            t0 = time.perf_counter()
            for i in range(repeats):
                ctl.predict([1.0, float(i)])
            return (time.perf_counter() - t0) / repeats

        small = mean_runtime(2, 2)
        large = mean_runtime(20, 10)
        # workload ratio is ~50x; demand only a loose monotone trend
        assert large > 1.5 * small
