import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chancectrl import (
    AffinePolicy,
    GaussianNoise,
    GmmNoise,
    LtiSystem,
    NoiseInjection,
    make_rng,
    rollout,
    sample_noise,
    split_rngs,
)

SECOND_ORDER_A = [[1.0, 0.3], [0.3, 1.1]]
SECOND_ORDER_B = [[0.9, 0.5], [0.1, 1.2]]
UAV_A = [[1.0, 0.5, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.5], [0.0, 0.0, 0.0, 1.0]]
UAV_B = [[0.125, 0.0], [0.5, 0.0], [0.0, 0.125], [0.0, 0.5]]

UAV_WEIGHTS = [0.2, 0.8]
UAV_MEANS = [[3.0, 0.0], [8.0, 0.0]]
UAV_COVS = [np.diag([30.0, 0.01]), np.diag([60.0, 0.01])]


def uav_noise():
    return GmmNoise(weights=UAV_WEIGHTS, means=UAV_MEANS, covs=UAV_COVS)


class TestNoiseModels:
    def test_degenerate_variance_gaussian_samples_near_zero(self):
        noise = GaussianNoise(mean=[0.0, 0.0], cov=1e-12 * np.eye(2))
        draw = sample_noise(noise, make_rng(7))
        assert np.all(np.abs(draw) < 1e-5)

    def test_single_component_gmm_matches_gaussian_stream(self):
        mean = [1.0, -2.0]
        cov = [[2.0, 0.3], [0.3, 1.0]]
        gaussian = GaussianNoise(mean=mean, cov=cov)
        mixture = GmmNoise(weights=[1.0], means=[mean], covs=[cov])
        ga, gb = make_rng(123), make_rng(123)
        for _ in range(50):
            np.testing.assert_array_equal(gaussian.sample(ga), mixture.sample(gb))
        ga, gb = make_rng(5), make_rng(5)
        np.testing.assert_array_equal(gaussian.sample_n(ga, 100), mixture.sample_n(gb, 100))

    def test_uav_mixture_sample_mean(self):
        # mixture mean = sum_j pi_j mu_j = 0.2*(3,0) + 0.8*(8,0) = (7, 0)
        noise = uav_noise()
        np.testing.assert_allclose(noise.mean_vector, [7.0, 0.0])
        draws = noise.sample_n(make_rng(42), 1_000_000)
        np.testing.assert_allclose(draws.mean(axis=0), [7.0, 0.0], atol=0.03)

    def test_gmm_component_frequencies_match_weights(self):
        noise = uav_noise()
        rng = make_rng(11)
        n = 100_000
        idx = rng.choice(2, size=n, p=noise.weights)
        # independent draw of the selector stream, same distribution law
        freq = np.bincount(idx, minlength=2) / n
        for j, w in enumerate(noise.weights):
            se = np.sqrt(w * (1 - w) / n)
            assert abs(freq[j] - w) < 3 * se

    def test_gmm_weight_validation(self):
        with pytest.raises(ValueError, match="sum to 1"):
            GmmNoise(weights=[0.5, 0.4], means=[[0.0], [1.0]], covs=[[[1.0]], [[1.0]]])
        with pytest.raises(ValueError, match=r"\(0, 1\]"):
            GmmNoise(weights=[1.2, -0.2], means=[[0.0], [1.0]], covs=[[[1.0]], [[1.0]]])

    def test_covariance_must_be_spd(self):
        with pytest.raises(ValueError, match="positive definite"):
            GaussianNoise(mean=[0.0], cov=[[-1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            GaussianNoise(mean=[0.0, 0.0], cov=[[1.0, 0.5], [0.0, 1.0]])


class TestStep:
    def test_identity_zero_input(self):
        sys = LtiSystem(np.eye(2), np.eye(2))
        np.testing.assert_array_equal(sys.step([1.0, 2.0], [0.0, 0.0], [0.0, 0.0]), [1.0, 2.0])

    def test_second_order_first_column(self):
        sys = LtiSystem(SECOND_ORDER_A, SECOND_ORDER_B)
        np.testing.assert_allclose(sys.step([1.0, 0.0], [0.0, 0.0], [0.0, 0.0]), [1.0, 0.3])

    def test_through_input_noise_term(self):
        sys = LtiSystem(UAV_A, UAV_B, NoiseInjection.THROUGH_INPUT)
        out = sys.step([0.0] * 4, [0.0, 0.0], [1.0, 0.0])
        np.testing.assert_allclose(out, [0.125, 0.5, 0.0, 0.0])

    def test_dimension_mismatch_raises(self):
        sys = LtiSystem(SECOND_ORDER_A, SECOND_ORDER_B)
        with pytest.raises(ValueError):
            sys.step([1.0, 0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            sys.step([1.0, 0.0], [0.0], [0.0, 0.0])

    @given(
        x1=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
        x2=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
        u1=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
        u2=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
        w1=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
        w2=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
    )
    @settings(max_examples=50, deadline=None)
    def test_step_linearity_exact_on_dyadic_inputs(self, x1, x2, u1, u2, w1, w2):
        # dyadic matrix entries and integer vectors make every product exact,
        # so linearity holds bitwise under the fixed evaluation order
        sys = LtiSystem([[1.0, 0.5], [0.25, 1.0]], [[0.5, 0.0], [0.0, 2.0]])
        x1, x2 = np.array(x1, float), np.array(x2, float)
        u1, u2 = np.array(u1, float), np.array(u2, float)
        w1, w2 = np.array(w1, float), np.array(w2, float)
        lhs = sys.step(x1 + x2, u1 + u2, w1 + w2)
        rhs = sys.step(x1, u1, w1) + sys.step(x2, u2, w2) - sys.step(x1 * 0, u1 * 0, w1 * 0)
        np.testing.assert_array_equal(lhs, rhs)


class TestRollout:
    def test_stable_system_decays_monotonically(self):
        sys = LtiSystem([[0.5, 0.1], [0.0, 0.6]], np.eye(2))
        noise = GaussianNoise([0.0, 0.0], 1e-12 * np.eye(2))
        result = rollout(sys, noise, AffinePolicy(np.zeros((2, 2))), [1.0, 1.0], 20, make_rng(0))
        norms = [np.linalg.norm(t.x) for t in result.transitions]
        assert not result.diverged
        assert all(a > b for a, b in zip(norms, norms[1:]))

    def test_single_step(self):
        sys = LtiSystem(SECOND_ORDER_A, SECOND_ORDER_B)
        noise = GaussianNoise([0.0, 0.0], np.eye(2))
        rng = make_rng(3)
        result = rollout(sys, noise, AffinePolicy(np.zeros((2, 2))), [1.0, 0.0], 1, rng)
        assert len(result.transitions) == 1
        t = result.transitions[0]
        np.testing.assert_allclose(t.x_next, sys.A @ t.x + sys.B @ t.u + (t.x_next - sys.A @ t.x - sys.B @ t.u))

    def test_open_loop_unstable_growth(self):
        # dominant eigenvalue of the second-order A is (2.1 + sqrt(0.37))/2 ~ 1.354
        eigs = np.linalg.eigvals(np.array(SECOND_ORDER_A))
        assert abs(eigs).max() == pytest.approx(1.3541381, abs=1e-6)
        sys = LtiSystem(SECOND_ORDER_A, SECOND_ORDER_B)
        noise = GaussianNoise([0.0, 0.0], 1e-12 * np.eye(2))
        result = rollout(sys, noise, AffinePolicy(np.zeros((2, 2))), [1.0, 1.0], 30, make_rng(0))
        norms = [np.linalg.norm(t.x) for t in result.transitions]
        assert norms[-1] > norms[0]

    def test_divergence_truncates_with_flag(self):
        sys = LtiSystem([[10.0]], [[1.0]])
        noise = GaussianNoise([0.0], [[1e-6]])
        result = rollout(sys, noise, AffinePolicy([[0.0]]), [1.0], 50, make_rng(0))
        assert result.diverged
        assert len(result.transitions) < 50

    def test_reproducible_trajectories(self):
        sys = LtiSystem(SECOND_ORDER_A, SECOND_ORDER_B)
        noise = GaussianNoise([0.0, 0.0], 2.0 * np.eye(2))
        pol = AffinePolicy([[-0.2, -0.2], [-0.2, -0.3]])
        a = rollout(sys, noise, pol, [1.0, 0.0], 40, make_rng(99))
        b = rollout(sys, noise, pol, [1.0, 0.0], 40, make_rng(99))
        np.testing.assert_array_equal(a.states(), b.states())
        np.testing.assert_array_equal(a.inputs(), b.inputs())

    def test_split_streams_are_independent_of_order(self):
        noise = GaussianNoise([0.0, 0.0], np.eye(2))
        draws_a = [noise.sample(r) for r in split_rngs(17, 4)]
        draws_b = [noise.sample(r) for r in reversed(split_rngs(17, 4))]
        for a, b in zip(draws_a, reversed(draws_b)):
            np.testing.assert_array_equal(a, b)

    def test_reward_fn_fills_rewards(self):
        sys = LtiSystem(SECOND_ORDER_A, SECOND_ORDER_B)
        noise = GaussianNoise([0.0, 0.0], np.eye(2))
        result = rollout(sys, noise, AffinePolicy(np.zeros((2, 2))), [1.0, 0.0], 5,
                         make_rng(1), reward_fn=lambda x, u, xn: -float(x @ x))
        assert result.transitions[0].reward == -1.0
