"""Bound checkers: known-value arithmetic, trivial cases, and hand-built
witnesses for holds / fails / not-applicable verdicts."""

import json
import math

import numpy as np
import pytest

from conftest import xnor_game
from mafqi.bounds import (BoundReport, check_cumulative_recursion,
                          check_policy_gap, empirical_rademacher,
                          error_propagation_report, fit_log_decay,
                          generalization_gap_check, lipschitz_l2_linf_check,
                          sample_path_norm_net, summarize_reports)
from mafqi.errors import ConfigurationError
from mafqi.networks import path_norm
from mafqi.tabular import discretize, value_iteration


class TestBoundReport:
    def test_margin_and_json(self):
        rep = BoundReport(name="x", lhs=1.0, rhs=3.0, holds=True)
        assert rep.margin == 2.0
        payload = json.loads(rep.to_json())
        assert payload["name"] == "x" and payload["margin"] == 2.0


class TestPolicyGap:
    def test_exact_critic_zero_gap(self):
        tg = discretize(xnor_game(0.9), 4)
        qstar = value_iteration(tg, tol=1e-12)
        rep = check_policy_gap(qstar, qstar, tg)
        assert rep.holds is True
        assert rep.lhs <= 1e-9 and rep.rhs <= 1e-8

    def test_perturbed_critic_holds(self):
        tg = discretize(xnor_game(0.9), 4)
        qstar = value_iteration(tg, tol=1e-12)
        rng = np.random.default_rng(0)
        for _ in range(20):
            qtilde = qstar + rng.uniform(-0.5, 0.5, size=qstar.shape)
            rep = check_policy_gap(qstar, qtilde, tg)
            assert rep.holds is True

    def test_inputs_recorded(self):
        tg = discretize(xnor_game(0.5), 4)
        qstar = value_iteration(tg, tol=1e-12)
        rep = check_policy_gap(qstar, qstar + 0.1, tg)
        assert rep.inputs["gamma"] == 0.5
        assert rep.inputs["critic_sup_err"] == pytest.approx(0.1)


class TestCumulativeRecursion:
    def test_arithmetic(self):
        # eps 0, gamma 0.5, N 0 (eta 0.5), K 10: rhs = 4 * 0.5^10 / 0.25.
        rep = check_cumulative_recursion(0.01, 0.0, 0.5, 0, 1.0, 10)
        assert rep.rhs == pytest.approx(4.0 * 0.5 ** 10 / 0.25)
        assert rep.rhs == pytest.approx(0.015625)
        assert rep.holds is True

    def test_eps_term(self):
        # eta = 3 * 0.2 = 0.6 -> eps term eps/(0.4).
        rep = check_cumulative_recursion(0.0, 0.2, 0.2, 2, 1.0, 50)
        assert rep.rhs == pytest.approx(0.2 / 0.4 + 4 * 0.2 ** 50 / 0.64)

    def test_vacuous_when_eta_ge_one(self):
        rep = check_cumulative_recursion(5.0, 0.1, 0.5, 2, 1.0, 10)
        assert rep.inputs["eta"] == pytest.approx(1.5)
        assert rep.holds is None and rep.rhs == math.inf

    def test_violation_detected(self):
        rep = check_cumulative_recursion(10.0, 0.0, 0.1, 2, 1.0, 30)
        assert rep.holds is False


class TestErrorPropagation:
    def test_arithmetic(self):
        # phi 1, gamma 0.5, eps 0, K 10: rhs = 4 * 0.5^11 / 0.25.
        rep = error_propagation_report(0.001, 0.0, 0.5, 1.0, 10, 1.0)
        assert rep.rhs == pytest.approx(0.0078125)
        assert rep.holds is True

    def test_term_split(self):
        rep = error_propagation_report(0.0, 0.3, 0.5, 2.0, 5, 2.0)
        assert rep.inputs["stat_term"] == pytest.approx(2 * 2 * 0.5 * 0.3 / 0.25)
        assert rep.inputs["algo_term"] == pytest.approx(4 * 0.5 ** 6 * 2 / 0.25)
        assert rep.rhs == pytest.approx(rep.inputs["stat_term"]
                                        + rep.inputs["algo_term"])

    def test_rejects_nonpositive_phi(self):
        with pytest.raises(ConfigurationError):
            error_propagation_report(0.0, 0.0, 0.5, 1.0, 1, 0.0)


class TestFitLogDecay:
    def test_exact_geometric(self):
        errs = 3.0 * 0.8 ** np.arange(1, 11)
        slope, r2 = fit_log_decay(errs)
        assert slope == pytest.approx(np.log(0.8))
        assert r2 == pytest.approx(1.0)

    def test_constant_sequence(self):
        slope, r2 = fit_log_decay(np.ones(5))
        assert slope == pytest.approx(0.0)
        assert r2 == 1.0


class TestRademacher:
    def test_singleton_class_near_zero(self):
        # One candidate: E sup = E |sum xi f| / n style cancellation -> small.
        f = lambda X: np.ones(X.shape[0])
        X = np.random.default_rng(0).uniform(size=(256, 3))
        est, bound, rep = empirical_rademacher([f], X, 4.0, 2000,
                                               np.random.default_rng(1))
        assert abs(est) <= 3 * rep.inputs["ci95"] + 0.01

    def test_sign_pair_massart_value(self):
        # {f, -f} with f = 1: estimate is E |mean xi| ~ sqrt(2/(pi n)).
        f = lambda X: np.ones(X.shape[0])
        g = lambda X: -np.ones(X.shape[0])
        n = 256
        X = np.zeros((n, 2))
        est, _, rep = empirical_rademacher([f, g], X, 4.0, 4000,
                                           np.random.default_rng(2))
        expected = math.sqrt(2.0 / (math.pi * n))
        assert est == pytest.approx(expected, rel=0.15)

    def test_bound_formula(self):
        f = lambda X: np.zeros(X.shape[0])
        X = np.zeros((256, 3))
        _, bound, _ = empirical_rademacher([f], X, 4.0, 100,
                                           np.random.default_rng(3))
        assert bound == pytest.approx(8.0 * math.sqrt(2 * math.log(6) / 256))

    def test_path_norm_candidates_below_bound(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, size=(256, 3))
        nets = [sample_path_norm_net(4.0, 16, 3, rng) for _ in range(50)]
        for net in nets:
            assert path_norm(net) == pytest.approx(4.0)
        cands = [lambda Z, net=net: net.raw(Z)[:, 0] for net in nets]
        est, bound, rep = empirical_rademacher(cands, X, 4.0, 500,
                                               np.random.default_rng(5))
        assert rep.holds is True
        assert est < bound

    def test_rejects_few_draws(self):
        with pytest.raises(ConfigurationError):
            empirical_rademacher([lambda X: np.zeros(X.shape[0])],
                                 np.zeros((4, 1)), 1.0, 10,
                                 np.random.default_rng(0))


class TestGeneralizationGap:
    def test_zero_net_zero_targets(self):
        X = np.random.default_rng(0).uniform(size=(512, 2))
        zero = lambda Z: np.zeros(Z.shape[0])
        rep = generalization_gap_check(zero, 0.0, (X, np.zeros(512)),
                                       (X, np.zeros(512)), 4.0, 4.0, 0.1)
        assert rep.lhs == 0.0 and rep.holds is True

    def test_bound_shrinks_with_n(self):
        rng = np.random.default_rng(1)
        zero = lambda Z: np.zeros(Z.shape[0])
        rhs = []
        for n in (128, 512, 2048):
            X = rng.uniform(size=(n, 2))
            rep = generalization_gap_check(zero, 2.0, (X, np.zeros(n)),
                                           (X, np.zeros(n)), 4.0, 4.0, 0.1)
            rhs.append(rep.rhs)
        assert rhs[0] > rhs[1] > rhs[2]

    def test_formula_constant(self):
        X = np.zeros((100, 2))
        zero = lambda Z: np.zeros(Z.shape[0])
        rep = generalization_gap_check(zero, 1.0, (X, np.zeros(100)),
                                       (X, np.zeros(100)), 3.0, 2.0, 0.5)
        c = math.pi ** 2 / 6
        expected = (4 * 2.0 * 2.0 * math.sqrt(2 * math.log(4) / 100)
                    + 3.0 * math.sqrt(2 * math.log(2 * c * 4 / 0.5) / 100))
        assert rep.rhs == pytest.approx(expected)


class TestLipschitzL2Linf:
    @staticmethod
    def _grid(res, dim):
        ax = (np.arange(res) + 0.5) / res
        if dim == 1:
            return ax[:, None]
        mesh = np.meshgrid(*([ax] * dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def test_zero_function(self):
        nodes = self._grid(64, 1)
        rep = lipschitz_l2_linf_check(np.zeros(64), nodes, 1.0, 1)
        assert rep.holds is True and rep.lhs == 0.0

    def test_tent_equality_1d(self):
        """Centered tent max(0, h - L|x - x0|): the 1-D bound 2h^3/(3L) is met
        with equality when x0 sits on a grid node."""
        res = 4096
        nodes = self._grid(res, 1)
        L, h = 2.0, 0.5
        x0 = (math.floor(0.5 * res) + 0.5) / res
        f = np.maximum(0.0, h - L * np.abs(nodes[:, 0] - x0))
        rep = lipschitz_l2_linf_check(f, nodes, L, 1, slack=0.0)
        expected = h ** 3 * math.pi ** 0.5 / (3 * L * math.gamma(1.5))
        assert expected == pytest.approx(2 * h ** 3 / (3 * L))
        assert rep.lhs == pytest.approx(rep.rhs, abs=1e-6)
        assert rep.holds is True

    def test_cone_cases_hold_2d(self):
        rng = np.random.default_rng(0)
        nodes = self._grid(128, 2)
        for _ in range(20):
            L = rng.uniform(1.0, 3.0)
            h = rng.uniform(0.05, 0.2)
            margin = h / L + 0.05
            x0 = rng.uniform(margin, 1 - margin, size=2)
            f = np.maximum(0.0, h - L * np.linalg.norm(nodes - x0, axis=1))
            rep = lipschitz_l2_linf_check(f, nodes, L, 2)
            assert rep.holds is True

    def test_boundary_maximizer_not_applicable(self):
        nodes = self._grid(256, 1)
        f = np.maximum(0.0, 0.5 - 2.0 * nodes[:, 0])  # peak at the left edge
        rep = lipschitz_l2_linf_check(f, nodes, 2.0, 1)
        assert rep.holds is None
        assert "boundary" in rep.note

    def test_rejects_nonpositive_lipschitz(self):
        with pytest.raises(ConfigurationError):
            lipschitz_l2_linf_check(np.zeros(8), self._grid(8, 1), 0.0, 1)


class TestSummarize:
    def test_counts_rates_margins(self):
        reps = [
            BoundReport("a", 1.0, 2.0, holds=True),
            BoundReport("a", 3.0, 2.0, holds=False),
            BoundReport("a", 0.0, math.inf, holds=None),
            BoundReport("b", 0.0, 1.0, holds=True),
        ]
        rows = summarize_reports(reps)
        by_name = {r["name"]: r for r in rows}
        assert by_name["a"]["checked"] == 2
        assert by_name["a"]["hold_rate"] == 0.5
        assert by_name["a"]["worst_margin"] == -1.0
        assert by_name["a"]["not_applicable"] == 1
        assert by_name["b"]["hold_rate"] == 1.0
