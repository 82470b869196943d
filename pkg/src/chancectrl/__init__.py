"""Chance-constrained optimal control for discrete-time LTI systems.

Controllers follow the scikit-learn estimator convention: configure in the
constructor, ``fit(system, noise)`` to solve or train, ``predict(states)``
to map states to inputs. Any object with that ``predict`` method works as a
policy for the simulation and evaluation helpers.
"""

from .bounds import (
    ChernoffEvaluator,
    LinearConstraint,
    QuadraticConstraint,
    chernoff_quadratic,
    constraint_probability,
    gaussian_quadform_mgf,
    predict_mean,
    standard_normal_cdf,
    tail_linear,
)
from .costs import (
    CostSpec,
    RewardMode,
    discounted_return,
    make_reward_fn,
    reward,
    stage_penalized_known,
    stage_penalized_unknown,
    stage_quadratic,
)
from .ddpg import DdpgController, ReplayBuffer, TrainingDivergedError, TrainingLog
from .dynamics import (
    DIVERGENCE_LIMIT,
    GaussianNoise,
    GmmNoise,
    LtiSystem,
    NoiseInjection,
    Rollout,
    Transition,
    make_rng,
    rollout,
    sample_noise,
    split_rngs,
)
from .evaluation import (
    EvalProtocol,
    EvalReport,
    evaluate,
    grid_search_penalty,
    state_input_sweep,
)
from .mpc import MpcController, plan, scenario_cost
from .networks import Mlp, MlpPolicy, load_mlp, load_policy, save_mlp
from .riccati import AffinePolicy, LqrController, LqrSolution, RiccatiError, lqr_policy, solve_riccati

__version__ = "0.1.0"

__all__ = [
    "AffinePolicy",
    "ChernoffEvaluator",
    "CostSpec",
    "DIVERGENCE_LIMIT",
    "DdpgController",
    "EvalProtocol",
    "EvalReport",
    "GaussianNoise",
    "GmmNoise",
    "LinearConstraint",
    "LqrController",
    "LqrSolution",
    "LtiSystem",
    "Mlp",
    "MlpPolicy",
    "MpcController",
    "NoiseInjection",
    "QuadraticConstraint",
    "ReplayBuffer",
    "RewardMode",
    "RiccatiError",
    "Rollout",
    "TrainingDivergedError",
    "TrainingLog",
    "Transition",
    "chernoff_quadratic",
    "constraint_probability",
    "discounted_return",
    "evaluate",
    "gaussian_quadform_mgf",
    "grid_search_penalty",
    "load_mlp",
    "load_policy",
    "lqr_policy",
    "make_reward_fn",
    "make_rng",
    "plan",
    "predict_mean",
    "reward",
    "rollout",
    "sample_noise",
    "save_mlp",
    "scenario_cost",
    "solve_riccati",
    "split_rngs",
    "stage_penalized_known",
    "stage_penalized_unknown",
    "stage_quadratic",
    "standard_normal_cdf",
    "state_input_sweep",
    "tail_linear",
]
