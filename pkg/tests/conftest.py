"""Shared builders for test games."""

import numpy as np
import pytest

from mafqi.games import (
    AffineAgentReward,
    DecomposedAffineQ,
    GameSpec,
    JointGaussianKernel,
    LocalGaussianComponent,
    MatchingActionsReward,
    UniformJointKernel,
    make_decomposable_game,
    make_generic_game,
    make_reverse_engineered_game,
)


def random_decomposable_game(seed, n_agents=2, gamma=0.9, width=0.3,
                             uniform_mix=0.5, reward_scale=1.0):
    """N-agent decomposable game with affine rewards and local Gaussian-mix
    kernels, reward bounded by r_max = 1."""
    rng = np.random.default_rng(seed)
    spec = GameSpec(n_agents, 1, (2,) * n_agents, gamma, 1.0)
    unit = reward_scale / (n_agents * 1.5)
    components = []
    for _ in range(n_agents):
        reward = AffineAgentReward(
            coefs=rng.uniform(-unit, unit, size=(2, 1)) / 2,
            biases=rng.uniform(-unit / 2, unit / 2, size=2))
        kernel = LocalGaussianComponent(
            centers=rng.uniform(0.2, 0.8, size=(2, n_agents)),
            scales=rng.uniform(-0.3, 0.3, size=2),
            width=width, uniform_mix=uniform_mix, n_agents=n_agents)
        components.append((reward, kernel))
    return make_decomposable_game(components, spec)


def xnor_game(gamma=0.9):
    """Single joint reward table [[1,0],[0,1]]: pays 1 iff actions match."""
    spec = GameSpec(2, 1, (2, 2), gamma, 1.0)
    return make_generic_game(MatchingActionsReward(1.0, 0.0),
                             UniformJointKernel(2), spec)


def random_reverse_engineered_game(seed, gamma=0.05):
    rng = np.random.default_rng(seed)
    spec = GameSpec(2, 1, (2, 2), gamma, 1.0)
    bound = 0.8 / (1.0 + gamma)
    unit = bound / 3.0
    qstar = DecomposedAffineQ(
        coefs=[rng.uniform(-unit, unit, size=(2, 1)) for _ in range(2)],
        biases=[rng.uniform(-unit / 2, unit / 2, size=2) for _ in range(2)],
        state_dim=1)
    kernel = JointGaussianKernel(
        bases=rng.uniform(0.2, 0.8, size=(4, 2)),
        scales=rng.uniform(-0.4, 0.4, size=4),
        width=0.25, uniform_mix=0.3, actions_per_agent=(2, 2))
    return make_reverse_engineered_game(qstar, kernel, spec), qstar


@pytest.fixture
def small_decomposable_game():
    return random_decomposable_game(0)
