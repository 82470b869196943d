"""Experiment configuration: a nested key-value text format with matrix literals.

A config file collects the plant, noise model, constraint, cost weights, and
per-method settings for one experiment. Files are YAML; matrices are nested
lists of reals, row-major. ``validate_config`` reports every violated
invariant with its field path before any object is built, and the resolved
config (defaults filled in) can be echoed back to disk for provenance.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .bounds import LinearConstraint, QuadraticConstraint
from .costs import CostSpec, RewardMode
from .ddpg import DdpgController
from .dynamics import GaussianNoise, GmmNoise, LtiSystem, NoiseInjection
from .evaluation import EvalProtocol
from .mpc import MpcController
from .riccati import LqrController

DDPG_DEFAULTS = {
    "reward_mode": "unknown_model",
    "hidden": [10, 100],
    "actor_lr": 0.001,
    "critic_lr": 0.001,
    "tau": 0.005,
    "batch_size": 64,
    "episodes": 300,
    "steps_per_episode": 200,
    "exploration_initial": 5.0,
    "exploration_final": 0.01,
    "buffer_capacity": 100000,
    "safety_threshold": 30.0,
    "seed": None,
}

MPC_DEFAULTS = {
    "scenarios": 20,
    "horizon": 5,
    "penalty": 0.0,
    "population": 200,
    "elite_frac": 0.1,
    "iterations": 15,
    "init_std": 2.0,
    "seed": None,
}

EVAL_DEFAULTS = {"trials": 100, "steps": 1000, "seed": None}

COST_DEFAULTS = {"penalty": 0.0, "gamma": 0.99}


class ConfigError(ValueError):
    """Raised when a config file cannot be parsed or fails validation."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _deep_update(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(item: str) -> tuple[list[str], object]:
    """Parse one ``dotted.path=value`` override; values go through YAML."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' must look like key.path=value")
    key, raw = item.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(f"override '{item}' has an empty key path")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{item}' has an unparseable value: {exc}") from None
    return path, value


def apply_overrides(raw: dict, overrides) -> dict:
    out = copy.deepcopy(raw)
    for item in overrides:
        path, value = parse_override(item)
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{item}' descends into a non-mapping")
        node[path[-1]] = value
    return out


def load_raw(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise ConfigError(f"config parse error{where}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return raw


def shipped_config_path(name: str) -> Path:
    """Path of a config shipped with the package (``second_order`` or ``uav``)."""
    candidate = resources.files("chancectrl").joinpath("configs", f"{name}.cfg")
    with resources.as_file(candidate) as path:
        return Path(path)


def _is_matrix(value) -> bool:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        return False
    return arr.ndim == 2 and np.all(np.isfinite(arr))


def _is_vector(value) -> bool:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        return False
    return arr.ndim == 1 and np.all(np.isfinite(arr))


def _check_spd(value) -> bool:
    arr = np.asarray(value, dtype=float)
    if arr.shape[0] != arr.shape[1]:
        return False
    if np.abs(arr - arr.T).max() > 1e-12 * max(1.0, np.abs(arr).max()):
        return False
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        return False
    return True


def validate_raw(raw: dict) -> list[str]:
    """Every violated invariant, named by its field path; empty when valid."""
    errs: list[str] = []

    system = raw.get("system")
    n = p = None
    if not isinstance(system, dict):
        errs.append("system: block is required")
    else:
        if not _is_matrix(system.get("A")):
            errs.append("system.A: must be a finite matrix")
        elif np.asarray(system["A"]).shape[0] != np.asarray(system["A"]).shape[1]:
            errs.append("system.A: must be square")
        else:
            n = np.asarray(system["A"]).shape[0]
        if not _is_matrix(system.get("B")):
            errs.append("system.B: must be a finite matrix")
        elif n is not None and np.asarray(system["B"]).shape[0] != n:
            errs.append(f"system.B: must have {n} rows")
        else:
            p = np.asarray(system["B"]).shape[1] if _is_matrix(system.get("B")) else None
        injection = system.get("noise_injection", "state_additive")
        if injection not in ("state_additive", "through_input"):
            errs.append("system.noise_injection: must be state_additive or through_input")

    noise_dim = None
    if n is not None and p is not None and isinstance(system, dict):
        noise_dim = n if system.get("noise_injection", "state_additive") == "state_additive" else p

    noise = raw.get("noise")
    if not isinstance(noise, dict):
        errs.append("noise: block is required")
    else:
        kind = noise.get("kind")
        if kind == "gaussian":
            if not _is_vector(noise.get("mean")):
                errs.append("noise.mean: must be a finite vector")
            if not _is_matrix(noise.get("cov")) or not _check_spd(noise["cov"]):
                errs.append("noise.cov: must be symmetric positive definite")
            if noise_dim is not None and _is_vector(noise.get("mean")) \
                    and len(noise["mean"]) != noise_dim:
                errs.append(f"noise.mean: must have length {noise_dim}")
        elif kind == "gmm":
            weights = noise.get("weights")
            means = noise.get("means")
            covs = noise.get("covs")
            if not _is_vector(weights):
                errs.append("noise.weights: must be a vector")
            else:
                w = np.asarray(weights, dtype=float)
                if np.any(w <= 0) or np.any(w > 1):
                    errs.append("noise.weights: entries must lie in (0, 1]")
                if abs(w.sum() - 1.0) > 1e-12:
                    errs.append("noise.weights: must sum to 1 within 1e-12")
            if not isinstance(means, list) or not all(_is_vector(m) for m in means):
                errs.append("noise.means: must be a list of vectors")
            if not isinstance(covs, list) or not all(
                _is_matrix(c) and _check_spd(c) for c in covs
            ):
                errs.append("noise.covs: must be a list of SPD matrices")
            if (_is_vector(weights) and isinstance(means, list) and isinstance(covs, list)
                    and not (len(weights) == len(means) == len(covs))):
                errs.append("noise: weights, means, and covs must have equal length")
        else:
            errs.append("noise.kind: must be gaussian or gmm")

    constraint = raw.get("constraint")
    if constraint is not None:
        if not isinstance(constraint, dict):
            errs.append("constraint: must be a mapping")
        else:
            kind = constraint.get("kind")
            if kind == "quadratic":
                if not _is_matrix(constraint.get("Q")) or not _check_spd(constraint["Q"]):
                    errs.append("constraint.Q: must be symmetric positive definite")
            elif kind == "linear":
                if not _is_vector(constraint.get("q")):
                    errs.append("constraint.q: must be a finite vector")
            else:
                errs.append("constraint.kind: must be quadratic or linear")
            threshold = constraint.get("threshold")
            if not isinstance(threshold, (int, float)) or not threshold > 0:
                errs.append("constraint.threshold: must be > 0")
            delta = constraint.get("delta", 0.1)
            if not isinstance(delta, (int, float)) or not 0 < delta < 1:
                errs.append("constraint.delta: must lie in (0, 1)")

    cost = raw.get("cost")
    if not isinstance(cost, dict):
        errs.append("cost: block is required")
    else:
        for key in ("W", "U"):
            if not _is_matrix(cost.get(key)) or not _check_spd(cost[key]):
                errs.append(f"cost.{key}: must be symmetric positive definite")
        if n is not None and _is_matrix(cost.get("W")) and np.asarray(cost["W"]).shape != (n, n):
            errs.append(f"cost.W: must be {n}x{n}")
        if p is not None and _is_matrix(cost.get("U")) and np.asarray(cost["U"]).shape != (p, p):
            errs.append(f"cost.U: must be {p}x{p}")
        penalty = cost.get("penalty", COST_DEFAULTS["penalty"])
        if not isinstance(penalty, (int, float)) or penalty < 0:
            errs.append("cost.penalty: must be >= 0")
        gamma = cost.get("gamma", COST_DEFAULTS["gamma"])
        if not isinstance(gamma, (int, float)) or not 0 < gamma < 1:
            errs.append("cost.gamma: must lie in (0, 1)")

    ddpg = raw.get("ddpg", {})
    if not isinstance(ddpg, dict):
        errs.append("ddpg: must be a mapping")
    else:
        merged = {**DDPG_DEFAULTS, **ddpg}
        if merged["reward_mode"] not in ("risk_neutral", "known_model", "unknown_model"):
            errs.append("ddpg.reward_mode: must be risk_neutral, known_model, or unknown_model")
        if not 0 < merged["tau"] <= 1:
            errs.append("ddpg.tau: must lie in (0, 1]")
        if merged["actor_lr"] <= 0 or merged["critic_lr"] <= 0:
            errs.append("ddpg.actor_lr/critic_lr: must be > 0")
        if merged["exploration_final"] >= merged["exploration_initial"]:
            errs.append("ddpg.exploration_final: must be below exploration_initial")

    mpc = raw.get("mpc", {})
    if not isinstance(mpc, dict):
        errs.append("mpc: must be a mapping")
    else:
        merged = {**MPC_DEFAULTS, **mpc}
        if merged["scenarios"] < 1 or merged["horizon"] < 1:
            errs.append("mpc.scenarios/horizon: must be >= 1")
        if merged["penalty"] < 0:
            errs.append("mpc.penalty: must be >= 0")

    ev = raw.get("eval", {})
    if not isinstance(ev, dict):
        errs.append("eval: must be a mapping")
    else:
        merged = {**EVAL_DEFAULTS, **ev}
        if merged["trials"] < 1 or merged["steps"] < 1:
            errs.append("eval.trials/steps: must be >= 1")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errs.append("seed: must be a nonnegative integer")
    return errs


def validate_config(path, overrides=()) -> list[str]:
    """Violations for a config file after applying overrides; [] when valid."""
    try:
        raw = apply_overrides(load_raw(path), overrides)
    except ConfigError as exc:
        return exc.violations
    return validate_raw(raw)


@dataclass
class ExperimentConfig:
    """Validated, default-filled experiment description with object builders."""

    resolved: dict

    @classmethod
    def from_raw(cls, raw: dict) -> "ExperimentConfig":
        errs = validate_raw(raw)
        if errs:
            raise ConfigError(errs)
        resolved = copy.deepcopy(raw)
        resolved["seed"] = raw.get("seed", 0)
        resolved.setdefault("system", {}).setdefault("noise_injection", "state_additive")
        resolved["cost"] = {**COST_DEFAULTS, **raw.get("cost", {})}
        if "constraint" in resolved and resolved["constraint"] is not None:
            resolved["constraint"].setdefault("delta", 0.1)
        resolved["ddpg"] = {**DDPG_DEFAULTS, **raw.get("ddpg", {})}
        resolved["mpc"] = {**MPC_DEFAULTS, **raw.get("mpc", {})}
        resolved["eval"] = {**EVAL_DEFAULTS, **raw.get("eval", {})}
        # Block seeds inherit the top-level seed unless set explicitly.
        for block in ("ddpg", "mpc", "eval"):
            if resolved[block].get("seed") is None:
                resolved[block]["seed"] = resolved["seed"]
        return cls(resolved=resolved)

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentConfig":
        return cls.from_raw(apply_overrides(load_raw(path), overrides))

    def echo(self, path) -> None:
        """Write the resolved config, stable key order, for provenance."""
        Path(path).write_text(
            yaml.safe_dump(self.resolved, sort_keys=True, default_flow_style=None),
            encoding="utf-8",
        )

    @property
    def seed(self) -> int:
        return int(self.resolved["seed"])

    def build_system(self) -> LtiSystem:
        block = self.resolved["system"]
        return LtiSystem(
            A=block["A"], B=block["B"],
            noise_injection=NoiseInjection(block["noise_injection"]),
        )

    def build_noise(self):
        block = self.resolved["noise"]
        if block["kind"] == "gaussian":
            return GaussianNoise(mean=block["mean"], cov=block["cov"])
        return GmmNoise(weights=block["weights"], means=block["means"], covs=block["covs"])

    def build_constraint(self):
        block = self.resolved.get("constraint")
        if block is None:
            return None
        if block["kind"] == "quadratic":
            return QuadraticConstraint(Q=block["Q"], threshold=block["threshold"],
                                       delta=block["delta"])
        return LinearConstraint(q=block["q"], threshold=block["threshold"],
                                delta=block["delta"])

    def build_cost(self, penalty: float | None = None) -> CostSpec:
        block = self.resolved["cost"]
        return CostSpec(
            W=block["W"], U=block["U"],
            penalty=block["penalty"] if penalty is None else penalty,
            gamma=block["gamma"],
        )

    def build_lqr(self) -> LqrController:
        return LqrController(self.build_cost())

    def build_ddpg(self, reward_mode: str | None = None) -> DdpgController:
        block = dict(self.resolved["ddpg"])
        mode = RewardMode(reward_mode if reward_mode is not None else block["reward_mode"])
        return DdpgController(
            cost=self.build_cost(),
            constraint=self.build_constraint(),
            reward_mode=mode,
            hidden=tuple(block["hidden"]),
            actor_lr=block["actor_lr"],
            critic_lr=block["critic_lr"],
            tau=block["tau"],
            batch_size=block["batch_size"],
            episodes=block["episodes"],
            steps_per_episode=block["steps_per_episode"],
            exploration_initial=block["exploration_initial"],
            exploration_final=block["exploration_final"],
            buffer_capacity=block["buffer_capacity"],
            safety_threshold=block["safety_threshold"],
            seed=block["seed"],
        )

    def build_mpc(self) -> MpcController:
        block = self.resolved["mpc"]
        return MpcController(
            cost=self.build_cost(),
            constraint=self.build_constraint(),
            scenarios=block["scenarios"],
            horizon=block["horizon"],
            penalty=block["penalty"],
            population=block["population"],
            elite_frac=block["elite_frac"],
            iterations=block["iterations"],
            init_std=block["init_std"],
            seed=block["seed"],
        )

    def build_protocol(self, trials: int | None = None, steps: int | None = None,
                       seed: int | None = None) -> EvalProtocol:
        block = self.resolved["eval"]
        return EvalProtocol(
            trials=block["trials"] if trials is None else trials,
            steps=block["steps"] if steps is None else steps,
            x0=block.get("x0"),
            seed=block["seed"] if seed is None else seed,
        )
