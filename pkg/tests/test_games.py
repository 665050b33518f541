"""Game construction, kernels, rewards, sampling, and serialization."""

import json

import numpy as np
import pytest
from scipy import stats

from conftest import random_decomposable_game, random_reverse_engineered_game
from mafqi.errors import (BoundViolationError, ConfigurationError,
                          InvalidKernelError)
from mafqi.games import (AffineAgentReward, ConstantQ, DecomposedAffineQ,
                         DeltaKernel, GameSpec, LocalGaussianComponent,
                         UniformComponent, UniformJointKernel, game_from_dict,
                         game_to_dict, make_decomposable_game,
                         make_generic_game, make_reverse_engineered_game,
                         sample_transition)
from mafqi.grids import midpoint_grid


class TestGameSpec:
    def test_valid_spec(self):
        spec = GameSpec(2, 1, (2, 3), 0.9, 1.0)
        assert spec.n_joint_actions == 6
        assert spec.joint_dim == 2
        assert np.isclose(spec.q_max, 10.0)

    @pytest.mark.parametrize("kwargs", [
        dict(n_agents=0, state_dim=1, actions_per_agent=(), gamma=0.9, r_max=1.0),
        dict(n_agents=1, state_dim=0, actions_per_agent=(2,), gamma=0.9, r_max=1.0),
        dict(n_agents=2, state_dim=1, actions_per_agent=(2,), gamma=0.9, r_max=1.0),
        dict(n_agents=1, state_dim=1, actions_per_agent=(0,), gamma=0.9, r_max=1.0),
        dict(n_agents=1, state_dim=1, actions_per_agent=(2,), gamma=1.0, r_max=1.0),
        dict(n_agents=1, state_dim=1, actions_per_agent=(2,), gamma=-0.1, r_max=1.0),
        dict(n_agents=1, state_dim=1, actions_per_agent=(2,), gamma=0.9, r_max=0.0),
    ])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ConfigurationError):
            GameSpec(**kwargs)


class TestMakeDecomposableGame:
    def test_zero_rewards_sum_to_zero(self):
        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        zero = AffineAgentReward(np.zeros((2, 1)), np.zeros(2))
        comps = [(zero, UniformComponent(2)), (zero, UniformComponent(2))]
        game = make_decomposable_game(comps, spec)
        S = np.random.default_rng(0).uniform(size=(20, 2))
        A = np.random.default_rng(1).integers(0, 2, size=(20, 2))
        assert np.all(game.reward(S, A) == 0.0)

    def test_direct_summation(self):
        # R_1 = s_1 * a_1 / 2, R_2 = -s_2 / 2 at ((.5,.5),(1,0)) gives 0.
        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        r1 = AffineAgentReward(np.array([[0.0], [0.5]]), np.zeros(2))
        r2 = AffineAgentReward(np.array([[-0.5], [-0.5]]), np.zeros(2))
        comps = [(r1, UniformComponent(2)), (r2, UniformComponent(2))]
        game = make_decomposable_game(comps, spec)
        assert game.reward_at(np.array([0.5, 0.5]), np.array([1, 0])) == pytest.approx(0.0)
        assert game.reward_at(np.array([0.5, 0.5]), np.array([1, 1])) == pytest.approx(0.0)

    def test_uniform_components_give_unit_density(self):
        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        zero = AffineAgentReward(np.zeros((2, 1)), np.zeros(2))
        comps = [(zero, UniformComponent(2)), (zero, UniformComponent(2))]
        game = make_decomposable_game(comps, spec)
        grid = midpoint_grid(32, 2)
        dens = game.kernel.density(grid, np.array([0.3, 0.7]), np.array([0, 1]))
        assert np.allclose(dens, 1.0)
        assert abs(dens.mean() - 1.0) <= 1e-9  # midpoint quadrature on 32^{Nd}

    def test_component_count_mismatch(self):
        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        zero = AffineAgentReward(np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(ConfigurationError):
            make_decomposable_game([(zero, UniformComponent(2))], spec)

    def test_unnormalized_kernel_rejected(self):
        class BadKernel(UniformComponent):
            def normalization(self, s_local, a_local):
                return 1.5

        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        zero = AffineAgentReward(np.zeros((2, 1)), np.zeros(2))
        comps = [(zero, BadKernel(2)), (zero, UniformComponent(2))]
        with pytest.raises(InvalidKernelError):
            make_decomposable_game(comps, spec)

    def test_per_agent_reward_bound_enforced(self):
        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        big = AffineAgentReward(np.full((2, 1), 0.9), np.zeros(2))  # bound 0.9 > 0.5
        zero = AffineAgentReward(np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(BoundViolationError):
            make_decomposable_game(
                [(big, UniformComponent(2)), (zero, UniformComponent(2))], spec)

    def test_decomposition_reassembly(self):
        game = random_decomposable_game(3)
        rng = np.random.default_rng(4)
        S = rng.uniform(size=(50, 2))
        A = rng.integers(0, 2, size=(50, 2))
        manual = np.zeros(50)
        for i, rc in enumerate(game.decomposition.rewards):
            manual += rc(S[:, i:i + 1], A[:, i])
        assert np.max(np.abs(manual - game.reward(S, A))) <= 1e-12

        pts = rng.uniform(size=(64, 2))
        dens = game.kernel.density(pts, S[0], A[0])
        manual_d = np.zeros(64)
        for i, kc in enumerate(game.decomposition.kernels):
            manual_d += kc.density(pts, S[0, i:i + 1], A[0, i])
        assert np.max(np.abs(manual_d / 2 - dens)) <= 1e-12

    def test_kernel_normalization_by_quadrature(self):
        game = random_decomposable_game(5)
        axis = (np.arange(8192) + 0.5) / 8192
        kc = game.decomposition.kernels[0]
        for a in range(2):
            z = kc.normalization(np.array([0.4]), a)
            assert abs(z - 1.0) <= 1e-6


class TestReverseEngineeredGame:
    def test_gamma_zero_reward_is_qstar(self):
        rng = np.random.default_rng(0)
        spec = GameSpec(2, 1, (2, 2), 0.0, 1.0)
        qstar = DecomposedAffineQ([rng.uniform(-0.2, 0.2, (2, 1))] * 2,
                                  [rng.uniform(-0.1, 0.1, 2)] * 2, 1)
        game = make_reverse_engineered_game(qstar, UniformJointKernel(2), spec)
        S = rng.uniform(size=(30, 2))
        A = rng.integers(0, 2, size=(30, 2))
        assert np.max(np.abs(game.reward(S, A) - qstar.eval(S, A))) == 0.0

    def test_constant_qstar_gives_constant_reward(self):
        spec = GameSpec(2, 1, (2, 2), 0.3, 1.0)
        game = make_reverse_engineered_game(ConstantQ(0.5), UniformJointKernel(2), spec)
        rng = np.random.default_rng(1)
        S = rng.uniform(size=(20, 2))
        A = rng.integers(0, 2, size=(20, 2))
        assert np.allclose(game.reward(S, A), 0.5 * (1.0 - 0.3), atol=1e-9)

    def test_qstar_exceeding_qmax_rejected(self):
        spec = GameSpec(2, 1, (2, 2), 0.5, 1.0)  # q_max = 2
        with pytest.raises(BoundViolationError):
            make_reverse_engineered_game(ConstantQ(3.0), UniformJointKernel(2), spec)

    def test_reward_exceeding_rmax_rejected(self):
        # Per-agent head values {-0.95, +0.95}: Q* stays within q_max = 2 but
        # R(s, (0,0)) = -1.9 - gamma * 1.9 falls below -r_max.
        spec = GameSpec(2, 1, (2, 2), 0.5, 1.0)
        qstar = DecomposedAffineQ([np.zeros((2, 1))] * 2,
                                  [np.array([-0.95, 0.95])] * 2, 1)
        with pytest.raises(BoundViolationError):
            make_reverse_engineered_game(qstar, UniformJointKernel(2), spec)

    def test_delta_kernel_continuation(self):
        # With s' = (s1*s2, s1*s2) the continuation is max_a' Q*(s',a') exactly.
        rng = np.random.default_rng(2)
        spec = GameSpec(2, 1, (2, 2), 0.4, 1.0)
        qstar = DecomposedAffineQ([np.array([[0.0], [0.3]])] * 2,
                                  [np.zeros(2)] * 2, 1)
        game = make_reverse_engineered_game(qstar, DeltaKernel(2, "product"), spec)
        S = rng.uniform(size=(10, 2))
        A = rng.integers(0, 2, size=(10, 2))
        prod = np.prod(S, axis=1)
        nxt = np.stack([prod, prod], axis=1)
        expected = qstar.eval(S, A) - 0.4 * qstar.max_joint(nxt)
        assert np.max(np.abs(game.reward(S, A) - expected)) <= 1e-12


class TestSampleTransition:
    def test_identity_delta_returns_state(self):
        spec = GameSpec(2, 1, (2, 2), 0.9, 1.0)
        game = make_generic_game(
            AffineAgentReward(np.zeros((2, 1)), np.zeros(2)),
            DeltaKernel(2, "identity"), spec)
        s = np.array([0.25, 0.75])
        out = sample_transition(game, s, np.array([0, 1]),
                                np.random.default_rng(0))
        assert np.array_equal(out, s)

    def test_same_seed_same_draw(self):
        game = random_decomposable_game(6)
        s = np.array([0.4, 0.6])
        a = np.array([1, 0])
        d1 = sample_transition(game, s, a, np.random.default_rng(123))
        d2 = sample_transition(game, s, a, np.random.default_rng(123))
        assert np.array_equal(d1, d2)

    def test_draws_stay_in_box(self):
        game = random_decomposable_game(7)
        rng = np.random.default_rng(0)
        S = rng.uniform(size=(200, 2))
        A = rng.integers(0, 2, size=(200, 2))
        out = game.kernel.sample_batch(S, A, rng)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)

    def test_chi_square_against_density(self):
        """Empirical histogram of 1e5 draws matches the kernel density."""
        game = random_decomposable_game(8)
        s = np.array([0.3, 0.7])
        a = np.array([0, 1])
        rng = np.random.default_rng(9)
        n = 100_000
        draws = game.kernel.sample_batch(np.repeat(s[None, :], n, axis=0),
                                         np.repeat(a[None, :], n, axis=0), rng)
        bins = 8
        counts, _, _ = np.histogram2d(draws[:, 0], draws[:, 1], bins=bins,
                                      range=[[0, 1], [0, 1]])
        # Expected mass per cell by fine quadrature of the density.
        res = 16  # 16 quadrature points per histogram cell side
        grid = midpoint_grid(bins * res, 2)
        dens = game.kernel.density(grid, s, a).reshape(bins * res, bins * res)
        cell_mass = dens.reshape(bins, res, bins, res).mean(axis=(1, 3)) / bins ** 2
        expected = cell_mass * n
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        p = 1.0 - stats.chi2.cdf(chi2, df=bins * bins - 1)
        assert p > 0.01


class TestRewardBound:
    def test_reward_bounded_on_samples(self):
        for seed in range(3):
            game = random_decomposable_game(seed)
            rng = np.random.default_rng(seed + 100)
            S = rng.uniform(size=(500, 2))
            A = rng.integers(0, 2, size=(500, 2))
            assert np.max(np.abs(game.reward(S, A))) <= game.spec.r_max + 1e-12


class TestSerialization:
    def test_decomposable_round_trip(self):
        game = random_decomposable_game(10)
        doc = json.loads(json.dumps(game_to_dict(game)))
        rebuilt = game_from_dict(doc)
        rng = np.random.default_rng(11)
        S = rng.uniform(size=(40, 2))
        A = rng.integers(0, 2, size=(40, 2))
        assert np.array_equal(rebuilt.reward(S, A), game.reward(S, A))
        pts = rng.uniform(size=(20, 2))
        assert np.array_equal(rebuilt.kernel.density(pts, S[0], A[0]),
                              game.kernel.density(pts, S[0], A[0]))
        assert rebuilt.decomposition is not None

    def test_reverse_engineered_round_trip(self):
        game, _ = random_reverse_engineered_game(12)
        rebuilt = game_from_dict(json.loads(json.dumps(game_to_dict(game))))
        rng = np.random.default_rng(13)
        S = rng.uniform(size=(25, 2))
        A = rng.integers(0, 2, size=(25, 2))
        assert np.array_equal(rebuilt.reward(S, A), game.reward(S, A))

    def test_unknown_schema_rejected(self):
        game = random_decomposable_game(14)
        doc = game_to_dict(game)
        doc["schema_version"] = 999
        with pytest.raises(ConfigurationError):
            game_from_dict(doc)
