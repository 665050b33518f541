"""Experiment configuration: schema-validated JSON documents and seeded game
construction from declared parameter families."""

import json
import os

import numpy as np

from .errors import ConfigurationError, MissingArtifactError
from .games import (
    KIND_DECOMPOSABLE,
    KIND_GENERIC,
    KIND_REVERSE_ENGINEERED,
    AffineAgentReward,
    DecomposedAffineQ,
    DeltaKernel,
    GameSpec,
    JointGaussianKernel,
    LocalGaussianComponent,
    MatchingActionsReward,
    UniformComponent,
    UniformJointKernel,
    game_from_dict,
    make_decomposable_game,
    make_generic_game,
    make_reverse_engineered_game,
)

CONFIG_SCHEMA_VERSION = 1

# Allowed keys per config section; unknown keys are hard errors so typos in
# sweep configs fail loudly instead of silently using defaults.
_SCHEMA = {
    "schema_version": None,
    "seed": None,
    "out": None,
    "timing": None,
    "game": {
        "file": None,
        "kind": None,
        "n_agents": None,
        "state_dim": None,
        "actions_per_agent": None,
        "gamma": None,
        "r_max": None,
        "reward": None,
        "reward_scale": None,
        "qstar_scale": None,
        "kernel": {
            "family": None,
            "width": None,
            "uniform_mix": None,
            "scale_range": None,
            "map": None,
        },
    },
    "oracle": {
        "resolution": None,
        "tol": None,
    },
    "fqi": {
        "iterations": None,
        "samples_per_iter": None,
        "width": None,
        "epochs": None,
        "batch_size": None,
        "lr": None,
        "path_norm_budget": None,
        "penalty_weight": None,
        "warm_start": None,
        "target_clamp": None,
    },
    "analysis": {
        "bounds": None,
        "delta": None,
        "phi": None,
        "run_dir": None,
        "rademacher": {
            "budget": None,
            "n": None,
            "input_dim": None,
            "candidates": None,
            "sign_draws": None,
            "net_width": None,
        },
        "generalization": {
            "seeds": None,
            "n_train": None,
            "n_fresh": None,
            "input_dim": None,
            "teacher_width": None,
            "student_width": None,
            "loss_bound": None,
            "rho": None,
        },
        "lipschitz": {
            "cases": None,
            "dims": None,
            "resolution": None,
        },
    },
}


def _validate_keys(section, schema, path=""):
    if not isinstance(section, dict):
        raise ConfigurationError(f"config section '{path or '<root>'}' must be an object")
    for key, value in section.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigurationError(f"unknown config key: {where}")
        sub = schema[key]
        if isinstance(sub, dict) and isinstance(value, dict):
            _validate_keys(value, sub, where)


def load_config(path):
    if not os.path.exists(path):
        raise MissingArtifactError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    _validate_keys(doc, _SCHEMA)
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigurationError(
            f"schema_version: expected {CONFIG_SCHEMA_VERSION}, got {version}")
    return doc


# ---------------------------------------------------------------------------
# Seeded game construction
# ---------------------------------------------------------------------------

def _spec_from_cfg(game_cfg, kind):
    for field in ("n_agents", "state_dim", "actions_per_agent", "gamma", "r_max"):
        if field not in game_cfg:
            raise ConfigurationError(f"game.{field} is required")
    return GameSpec(
        n_agents=game_cfg["n_agents"], state_dim=game_cfg["state_dim"],
        actions_per_agent=tuple(game_cfg["actions_per_agent"]),
        gamma=game_cfg["gamma"], r_max=game_cfg["r_max"], kind=kind)


def _kernel_from_cfg(kernel_cfg, spec, rng):
    family = kernel_cfg.get("family")
    if family == "uniform_joint":
        return UniformJointKernel(spec.joint_dim)
    if family == "delta":
        return DeltaKernel(spec.joint_dim, kernel_cfg.get("map", "identity"))
    if family == "joint_gaussian":
        lo, hi = kernel_cfg.get("scale_range", (-0.4, 0.4))
        return JointGaussianKernel(
            bases=rng.uniform(0.2, 0.8, size=(spec.n_joint_actions, spec.joint_dim)),
            scales=rng.uniform(lo, hi, size=spec.n_joint_actions),
            width=kernel_cfg.get("width", 0.25),
            uniform_mix=kernel_cfg.get("uniform_mix", 0.3),
            actions_per_agent=spec.actions_per_agent)
    raise ConfigurationError(f"game.kernel.family: unknown family {family!r}")


def build_decomposable_game(game_cfg, seed):
    """Sample per-agent affine rewards and local Gaussian-mixture kernels.

    Reward coefficients are scaled so each agent's reward is bounded by
    r_max / N with the requested slack.
    """
    spec = _spec_from_cfg(game_cfg, KIND_DECOMPOSABLE)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6A3E]))
    scale = game_cfg.get("reward_scale", 0.9)
    kernel_cfg = game_cfg.get("kernel", {})
    width = kernel_cfg.get("width", 0.3)
    mix = kernel_cfg.get("uniform_mix", 0.5)
    d = spec.state_dim
    unit = scale * spec.r_max / (spec.n_agents * (d + 0.5))
    components = []
    for i in range(spec.n_agents):
        m = spec.actions_per_agent[i]
        reward = AffineAgentReward(
            coefs=rng.uniform(-unit, unit, size=(m, d)),
            biases=rng.uniform(-unit / 2, unit / 2, size=m))
        kernel = LocalGaussianComponent(
            centers=rng.uniform(0.2, 0.8, size=(m, spec.joint_dim)),
            scales=rng.uniform(-0.3, 0.3, size=m),
            width=width, uniform_mix=mix, n_agents=spec.n_agents)
        components.append((reward, kernel))
    return make_decomposable_game(components, spec)


def build_reverse_engineered_game(game_cfg, seed):
    """Sample a bounded additive affine Q*, then define the reward so Q* is
    the optimal Q-function of the returned game."""
    spec = _spec_from_cfg(game_cfg, KIND_REVERSE_ENGINEERED)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x12E7]))
    qstar_scale = game_cfg.get("qstar_scale", 0.8)
    # |R| <= (1 + gamma) * sup|Q*|; keep the audit below r_max.
    bound = qstar_scale * spec.r_max / (1.0 + spec.gamma)
    d = spec.state_dim
    unit = bound / (spec.n_agents * (d + 0.5))
    coefs, biases = [], []
    for i in range(spec.n_agents):
        m = spec.actions_per_agent[i]
        coefs.append(rng.uniform(-unit, unit, size=(m, d)))
        biases.append(rng.uniform(-unit / 2, unit / 2, size=m))
    qstar = DecomposedAffineQ(coefs, biases, d)
    kernel = _kernel_from_cfg(game_cfg.get("kernel", {"family": "joint_gaussian"}),
                              spec, rng)
    return make_reverse_engineered_game(qstar, kernel, spec)


def build_generic_game(game_cfg, seed):
    spec = _spec_from_cfg(game_cfg, KIND_GENERIC)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E21]))
    reward_name = game_cfg.get("reward", "matching_actions")
    if reward_name != "matching_actions":
        raise ConfigurationError(f"game.reward: unknown reward {reward_name!r}")
    reward = MatchingActionsReward(high=spec.r_max, low=0.0)
    kernel = _kernel_from_cfg(game_cfg.get("kernel", {"family": "uniform_joint"}),
                              spec, rng)
    return make_generic_game(reward, kernel, spec)


def build_game(game_cfg, seed):
    if "file" in game_cfg:
        path = game_cfg["file"]
        if not os.path.exists(path):
            raise MissingArtifactError(f"game file not found: {path}")
        with open(path) as fh:
            return game_from_dict(json.load(fh))
    kind = game_cfg.get("kind")
    if kind == KIND_DECOMPOSABLE:
        return build_decomposable_game(game_cfg, seed)
    if kind == KIND_REVERSE_ENGINEERED:
        return build_reverse_engineered_game(game_cfg, seed)
    if kind == KIND_GENERIC:
        return build_generic_game(game_cfg, seed)
    raise ConfigurationError(f"game.kind: unknown kind {kind!r}")
