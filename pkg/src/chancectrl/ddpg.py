"""Deterministic policy gradient actor-critic trained from scratch.

One training step per environment step: act with additive Gaussian
exploration noise, store the transition, sample a minibatch, take one
critic descent step on the bootstrapped squared error, one actor ascent
step through the frozen critic, then blend the target networks. The
exploration variance decays geometrically across episodes between its
initial and final values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .bounds import ConstraintSpec
from .costs import CostSpec, RewardMode, make_reward_fn
from .dynamics import LtiSystem, NoiseModel, make_rng
from .networks import Adam, Mlp, MlpPolicy
from .riccati import AffinePolicy, RiccatiError, lqr_policy, solve_riccati
from .validation import as_vector


class TrainingDivergedError(RuntimeError):
    """Training aborted on non-finite loss or parameters; carries the partial log."""

    def __init__(self, message: str, log: "TrainingLog"):
        super().__init__(message)
        self.log = log


class ReplayBuffer:
    """Fixed-capacity ring store of transitions; oldest entries evict first."""

    def __init__(self, capacity: int, state_dim: int, input_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.x = np.zeros((capacity, state_dim))
        self.u = np.zeros((capacity, input_dim))
        self.r = np.zeros(capacity)
        self.x_next = np.zeros((capacity, state_dim))
        self.size = 0
        self._head = 0

    def __len__(self) -> int:
        return self.size

    def push(self, x, u, r: float, x_next) -> None:
        i = self._head
        self.x[i] = x
        self.u[i] = u
        self.r[i] = r
        self.x_next[i] = x_next
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return np.roll(np.arange(self.capacity), -self._head)

    def contents(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Stored transitions, oldest first."""
        idx = self._order()
        return self.x[idx], self.u[idx], self.r[idx], self.x_next[idx]

    def sample(self, rng: np.random.Generator, n: int):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=n)
        return self.x[idx], self.u[idx], self.r[idx], self.x_next[idx]


@dataclass(eq=False)
class ActorCriticState:
    """Main and target networks plus their optimizer accumulators."""

    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    actor_opt: Adam
    critic_opt: Adam
    step_count: int = 0

    @classmethod
    def init(cls, state_dim: int, input_dim: int, hidden, actor_lr: float,
             critic_lr: float, rng: np.random.Generator) -> "ActorCriticState":
        actor = Mlp.init([state_dim, *hidden, input_dim], rng)
        critic = Mlp.init([state_dim + input_dim, *hidden, 1], rng)
        return cls(
            actor=actor,
            critic=critic,
            target_actor=actor.copy(),
            target_critic=critic.copy(),
            actor_opt=Adam(actor.parameters(), lr=actor_lr),
            critic_opt=Adam(critic.parameters(), lr=critic_lr),
        )


def critic_update(state: ActorCriticState, batch, gamma: float) -> float:
    """One descent step on the bootstrapped squared error; returns the pre-step loss."""
    x, u, r, x_next = batch
    n = x.shape[0]
    target_u = state.target_actor.forward(x_next)
    target_q = state.target_critic.forward(np.hstack([x_next, target_u]))[:, 0]
    y = r + gamma * target_q
    q, cache = state.critic.forward_cached(np.hstack([x, u]))
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise ArithmeticError(f"non-finite critic loss {loss}")
    grad_out = (2.0 / n) * err[:, None]
    wg, bg, _ = state.critic.backward(cache, grad_out)
    state.critic_opt.step(state.critic.parameters(), wg + bg)
    return loss


def actor_update(state: ActorCriticState, batch) -> float:
    """One ascent step on mean Q(x, actor(x)) through the frozen critic.

    Returns the Euclidean norm of the actor gradient.
    """
    x = batch[0]
    n = x.shape[0]
    u, actor_cache = state.actor.forward_cached(x)
    _, critic_cache = state.critic.forward_cached(np.hstack([x, u]))
    state_dim = x.shape[1]
    grad_q = np.full((n, 1), 1.0 / n)
    _, _, grad_in = state.critic.backward(critic_cache, grad_q)
    grad_u = grad_in[:, state_dim:]
    wg, bg, _ = state.actor.backward(actor_cache, grad_u)
    grads = wg + bg
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if not np.isfinite(norm):
        raise ArithmeticError(f"non-finite actor gradient norm {norm}")
    # Adam minimizes, so feed the negated gradient to ascend.
    state.actor_opt.step(state.actor.parameters(), [-g for g in grads])
    return norm


def soft_update(state: ActorCriticState, tau: float) -> None:
    """Blend main parameters into the targets: target <- tau*main + (1-tau)*target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for main, target in ((state.actor, state.target_actor), (state.critic, state.target_critic)):
        for p_main, p_target in zip(main.parameters(), target.parameters()):
            p_target *= 1.0 - tau
            p_target += tau * p_main


@dataclass
class TrainingLog:
    """Per-episode training diagnostics; serializes to a fixed-column CSV."""

    episode: list[int] = field(default_factory=list)
    mean_reward: list[float] = field(default_factory=list)
    critic_loss: list[float] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)
    exploration_var: list[float] = field(default_factory=list)

    COLUMNS = ("episode", "mean_reward", "critic_loss", "violations", "exploration_var")

    def append(self, episode, mean_reward, critic_loss, violations, exploration_var):
        self.episode.append(int(episode))
        self.mean_reward.append(float(mean_reward))
        self.critic_loss.append(float(critic_loss))
        self.violations.append(int(violations))
        self.exploration_var.append(float(exploration_var))

    def __len__(self) -> int:
        return len(self.episode)

    def rows(self):
        for i in range(len(self.episode)):
            yield (self.episode[i], self.mean_reward[i], self.critic_loss[i],
                   self.violations[i], self.exploration_var[i])


def exploration_schedule(initial: float, final: float, episodes: int) -> np.ndarray:
    """Geometric per-episode interpolation from the initial to the final variance."""
    if episodes <= 0:
        return np.array([])
    if episodes == 1:
        return np.array([initial])
    frac = np.arange(episodes) / (episodes - 1)
    return initial * (final / initial) ** frac


class DdpgController(BaseEstimator):
    """Actor-critic controller trained against the plant with the selected reward.

    Parameters mirror the training loop: ``tau`` soft-update rate, learning
    rates, minibatch size, episode/step counts, the exploration variance
    schedule endpoints, buffer capacity, and the seed. The discount comes from
    ``cost.gamma``. When the state leaves the safety region
    (inf-norm above ``safety_threshold``), model-based reward modes fall back
    to the LQR backup gain for the rest of the episode, while the model-free
    mode ends the episode after recording the diverging transition.
    """

    def __init__(
        self,
        cost: CostSpec,
        constraint: ConstraintSpec | None = None,
        reward_mode: RewardMode = RewardMode.RISK_NEUTRAL,
        hidden=(10, 100),
        actor_lr: float = 1e-3,
        critic_lr: float = 1e-3,
        tau: float = 0.005,
        batch_size: int = 64,
        episodes: int = 300,
        steps_per_episode: int = 200,
        exploration_initial: float = 5.0,
        exploration_final: float = 0.01,
        buffer_capacity: int = 100_000,
        safety_threshold: float = 1e3,
        x0=None,
        seed: int = 0,
    ):
        self.cost = cost
        self.constraint = constraint
        self.reward_mode = reward_mode
        self.hidden = hidden
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.tau = tau
        self.batch_size = batch_size
        self.episodes = episodes
        self.steps_per_episode = steps_per_episode
        self.exploration_initial = exploration_initial
        self.exploration_final = exploration_final
        self.buffer_capacity = buffer_capacity
        self.safety_threshold = safety_threshold
        self.x0 = x0
        self.seed = seed

    def _validate(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.actor_lr <= 0.0 or self.critic_lr <= 0.0:
            raise ValueError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.exploration_final >= self.exploration_initial:
            raise ValueError("exploration variance must decrease from initial to final")
        if self.reward_mode is not RewardMode.RISK_NEUTRAL and self.constraint is None:
            raise ValueError(f"{self.reward_mode.value} training requires a constraint")

    def fit(self, system: LtiSystem, noise: NoiseModel):
        self._validate()
        system.check_noise(noise)
        rng = make_rng(self.seed)
        state = ActorCriticState.init(
            system.n, system.p, self.hidden, self.actor_lr, self.critic_lr, rng
        )
        reward_fn = make_reward_fn(
            self.reward_mode, self.cost, system=system, noise=noise, constraint=self.constraint
        )
        backup = self._backup_policy(system, noise)
        buffer = ReplayBuffer(self.buffer_capacity, system.n, system.p)
        log = TrainingLog()
        schedule = exploration_schedule(
            self.exploration_initial, self.exploration_final, self.episodes
        )
        x0 = np.zeros(system.n) if self.x0 is None else as_vector(self.x0, system.n, "x0")

        for episode in range(self.episodes):
            std = float(np.sqrt(schedule[episode]))
            x = x0.copy()
            on_backup = False
            reward_sum = 0.0
            loss_sum = 0.0
            n_steps = 0
            n_updates = 0
            n_violations = 0
            for _ in range(self.steps_per_episode):
                if on_backup:
                    u = backup.predict(x)
                else:
                    u = state.actor.forward(x) + std * rng.standard_normal(system.p)
                w = noise.sample(rng)
                x_next = system.step(x, u, w)
                terminal = not np.all(np.isfinite(x_next))
                if not terminal:
                    r = reward_fn(x, u, x_next)
                    buffer.push(x, u, r, x_next)
                    reward_sum += r
                    n_steps += 1
                    if self.constraint is not None and self.constraint.violated(x_next):
                        n_violations += 1
                if len(buffer) >= self.batch_size:
                    batch = buffer.sample(rng, self.batch_size)
                    try:
                        loss_sum += critic_update(state, batch, self.cost.gamma)
                        actor_update(state, batch)
                    except ArithmeticError as exc:
                        raise TrainingDivergedError(
                            f"training aborted at episode {episode + 1}: {exc}", log
                        ) from exc
                    soft_update(state, self.tau)
                    n_updates += 1
                    state.step_count += 1
                if terminal:
                    break
                if np.abs(x_next).max() > self.safety_threshold:
                    if backup is not None:
                        on_backup = True
                    else:
                        # Model-free mode: the diverging transition is stored
                        # with its penalty and the episode ends.
                        break
                x = x_next
            log.append(
                episode + 1,
                reward_sum / max(1, n_steps),
                loss_sum / n_updates if n_updates else 0.0,
                n_violations,
                schedule[episode],
            )

        self.system_ = system
        self.state_ = state
        self.actor_ = state.actor
        self.policy_ = MlpPolicy(state.actor)
        self.log_ = log
        self.buffer_ = buffer
        return self

    def _backup_policy(self, system, noise) -> AffinePolicy | None:
        if self.reward_mode is RewardMode.UNKNOWN_MODEL:
            return None
        try:
            return lqr_policy(solve_riccati(system, self.cost, noise))
        except (RiccatiError, ValueError):
            return None

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "policy_"):
            raise RuntimeError("DdpgController is not fitted; call fit(system, noise) first")
        return self.policy_.predict(X)

    def episode_stage_cost(self) -> np.ndarray:
        """Mean quadratic stage cost per logged episode (risk-neutral reward only)."""
        if self.reward_mode is not RewardMode.RISK_NEUTRAL:
            raise ValueError("episode stage cost is only the negated reward in risk-neutral mode")
        return -np.asarray(self.log_.mean_reward)
