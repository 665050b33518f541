"""Fitted Q-iteration with an additive per-agent critic.

Each round draws fresh samples from a separable distribution over joint
states and actions, builds bootstrapped regression targets with the
decentralized (per-agent) argmax, and fits the critic by least squares inside
the additive class.  The returned policy is the product of the per-agent
greedy rules.
"""

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .networks import DecomposedQ, FitConfig, fit_least_squares
from .tabular import bellman_apply, exact_decomposable_projection, value_iteration

CSV_COLUMNS = ["k", "train_loss", "eps_k", "sup_err", "l1_mu_err",
               "path_norm_max", "wall_seconds"]


@dataclass
class FqiConfig:
    iterations: int = 10
    samples_per_iter: int = 1024
    width: int = 64
    fit: FitConfig = field(default_factory=FitConfig)
    seed: int = 0
    target_clamp: bool = True
    warm_start: bool = True
    heldout_samples: int = 512
    heldout_inner_draws: int = 32

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.samples_per_iter < 1:
            raise ConfigurationError("samples_per_iter must be >= 1")
        if self.width < 1:
            raise ConfigurationError("width must be >= 1")


@dataclass
class IterationRecord:
    k: int
    train_loss: float
    eps_k: float
    eps_estimator: str
    eps_proj_k: float
    sup_err: float
    l1_mu_err: float
    path_norm_max: float
    wall_seconds: float
    qtable: object = None  # critic values on the oracle grid, when available


@dataclass
class ConvergenceReport:
    seed: int
    records: list = field(default_factory=list)

    def to_csv(self, path_or_buf, timing=False):
        """One row per iteration with the frozen column set.

        Timing is zeroed unless requested so reports are byte-reproducible.
        """
        own = isinstance(path_or_buf, str)
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.records:
                writer.writerow([
                    r.k,
                    f"{r.train_loss:.17g}",
                    f"{r.eps_k:.17g}",
                    f"{r.sup_err:.17g}" if np.isfinite(r.sup_err) else "",
                    f"{r.l1_mu_err:.17g}" if np.isfinite(r.l1_mu_err) else "",
                    f"{r.path_norm_max:.17g}",
                    f"{r.wall_seconds:.6f}" if timing else "0.0",
                ])
        finally:
            if own:
                fh.close()

    def csv_text(self, timing=False):
        buf = io.StringIO()
        self.to_csv(buf, timing=timing)
        return buf.getvalue()

    def eps_max(self):
        return max((r.eps_k for r in self.records), default=0.0)

    def eps_proj_max(self):
        vals = [r.eps_proj_k for r in self.records if np.isfinite(r.eps_proj_k)]
        return max(vals, default=0.0)

    def sup_errors(self):
        return np.array([r.sup_err for r in self.records])


class GreedyJointPolicy:
    """Product of per-agent greedy rules of an additive critic."""

    def __init__(self, critic):
        self.critic = critic

    def act(self, S):
        return self.critic.igm_argmax(S)


def sample_sigma(game, n, rng):
    """Draw (s, a) i.i.d. from the uniform product distribution, evaluate the
    reward, and draw one next state per pair.  Returns (S, A, R, S_next)."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    spec = game.spec
    S = rng.uniform(size=(n, spec.joint_dim))
    A = np.stack([rng.integers(m, size=n) for m in spec.actions_per_agent], axis=1)
    R = np.asarray(game.reward(S, A), dtype=float)
    S_next = game.kernel.sample_batch(S, A, rng)
    return S, A, R, S_next


def compute_targets(critic, batch, gamma, q_max, clamp=True):
    """Y_j = R_j + gamma * Q_tot(s'_j, per-agent argmax), clamped to +/- q_max."""
    _, _, R, S_next = batch
    y = R + gamma * critic.max_tot(S_next)
    if clamp:
        y = np.clip(y, -q_max, q_max)
    return y


class NetworkFitter:
    """Default regression step: deterministic mini-batch least squares."""

    def __init__(self, cfg, spec):
        self.cfg = cfg
        self.spec = spec

    def initial_critic(self):
        return DecomposedQ.zeros(self.spec.n_agents, self.spec.actions_per_agent,
                                 self.cfg.width, self.spec.state_dim,
                                 clamp=self.spec.q_max / self.spec.n_agents)

    def fit(self, batch, targets, prev_critic, k):
        S, A, _, _ = batch
        if self.cfg.warm_start and k > 1:
            template = prev_critic
        else:
            rng = np.random.default_rng(np.random.SeedSequence(
                [self.cfg.fit.seed, k, 0x5EED]))
            template = DecomposedQ.random(
                self.spec.n_agents, self.spec.actions_per_agent, self.cfg.width,
                self.spec.state_dim, self.spec.q_max / self.spec.n_agents, rng)
        fit_cfg = FitConfig(
            epochs=self.cfg.fit.epochs, batch_size=self.cfg.fit.batch_size,
            lr=self.cfg.fit.lr, path_norm_budget=self.cfg.fit.path_norm_budget,
            penalty_weight=self.cfg.fit.penalty_weight,
            seed=self.cfg.fit.seed + k, early_stop_tol=self.cfg.fit.early_stop_tol,
            lr_schedule=self.cfg.fit.lr_schedule)
        critic, losses = fit_least_squares((S, A, targets), fit_cfg, template)
        return critic, losses[-1]


class TabularExactFitter:
    """Test hook: replaces the regression by the exact Bellman image on a
    tabular game, reducing fitted Q-iteration to value iteration."""

    def __init__(self, tg):
        self.tg = tg

    def initial_critic(self):
        return TableCritic(np.zeros((self.tg.n_nodes, self.tg.n_actions)), self.tg)

    def fit(self, batch, targets, prev_critic, k):
        table = bellman_apply(prev_critic.table, self.tg)
        return TableCritic(table, self.tg), 0.0


class TableCritic:
    """Critic backed by a dense Q table over a tabular game's grid.

    Off-grid states are mapped to the nearest grid node, so the table also
    serves as a (piecewise-constant) critic for sampled data.
    """

    def __init__(self, table, tg):
        self.table = np.asarray(table, dtype=float)
        self.tg = tg

    def _node_index(self, S):
        res = self.tg.resolution
        dim = self.tg.nodes.shape[1]
        cells = np.clip((np.atleast_2d(S) * res).astype(int), 0, res - 1)
        return np.ravel_multi_index(tuple(cells.T), (res,) * dim)

    def eval_all_joint(self, S, joint_actions):
        return self.table[self._node_index(S)]

    def max_tot(self, S):
        return self.table[self._node_index(S)].max(axis=1)

    def igm_argmax(self, S):
        best = self.table[self._node_index(S)].argmax(axis=1)
        return self.tg.joint_actions[best]

    def path_norm_max(self):
        return 0.0


def critic_to_table(critic, tg):
    """Evaluate a critic at every (grid node, joint action)."""
    if isinstance(critic, TableCritic):
        return critic.table.copy()
    return critic.eval_all_joint(tg.nodes, tg.joint_actions)


def run_mafqi(game, cfg, tabular=None, qstar_table=None, fitter=None):
    """Run fitted Q-iteration for cfg.iterations rounds.

    When a tabular discretization is supplied, per-iteration diagnostics are
    measured on its grid: eps_k (sigma-weighted L2 distance between the
    Bellman image of the previous critic and the new one), the sup-norm
    distance from the projected Bellman image, and sup/mean errors against
    the value-iteration solution.  Without it, eps_k falls back to a held-out
    Monte-Carlo estimate and oracle errors are reported as NaN.

    Returns (final critic, greedy product policy, ConvergenceReport).
    """
    spec = game.spec
    if fitter is None:
        fitter = NetworkFitter(cfg, spec)
    if tabular is not None and qstar_table is None:
        qstar_table = value_iteration(tabular, tol=1e-9)

    critic = fitter.initial_critic()
    report = ConvergenceReport(seed=cfg.seed)
    seeds = np.random.SeedSequence(cfg.seed).spawn(max(1, cfg.iterations) * 2)

    prev_table = critic_to_table(critic, tabular) if tabular is not None else None

    for k in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng(seeds[2 * (k - 1)])
        batch = sample_sigma(game, cfg.samples_per_iter, rng)
        targets = compute_targets(critic, batch, spec.gamma, spec.q_max,
                                  clamp=cfg.target_clamp)
        new_critic, train_loss = fitter.fit(batch, targets, critic, k)

        if tabular is not None:
            new_table = critic_to_table(new_critic, tabular)
            tq_prev = bellman_apply(prev_table, tabular)
            eps_k = float(np.sqrt(np.mean((tq_prev - new_table) ** 2)))
            eps_estimator = "grid"
            proj_tq, _ = exact_decomposable_projection(tq_prev, tabular)
            eps_proj_k = float(np.max(np.abs(new_table - proj_tq)))
            sup_err = float(np.max(np.abs(qstar_table - new_table)))
            l1_mu_err = float(np.mean(np.abs(qstar_table - new_table)))
            prev_table = new_table
        else:
            hrng = np.random.default_rng(seeds[2 * (k - 1) + 1])
            eps_k = _heldout_eps(game, critic, new_critic, cfg, hrng)
            eps_estimator = "held_out_mc"
            eps_proj_k = float("nan")
            sup_err = float("nan")
            l1_mu_err = float("nan")

        critic = new_critic
        report.records.append(IterationRecord(
            k=k, train_loss=train_loss, eps_k=eps_k, eps_estimator=eps_estimator,
            eps_proj_k=eps_proj_k, sup_err=sup_err, l1_mu_err=l1_mu_err,
            path_norm_max=critic.path_norm_max(),
            wall_seconds=time.perf_counter() - t0,
            qtable=prev_table if tabular is not None else None))

    return critic, GreedyJointPolicy(critic), report


def _heldout_eps(game, prev_critic, new_critic, cfg, rng):
    """Held-out sigma-sample estimate of ||T Q_prev - Q_new||_sigma.

    The inner expectation over next states is approximated with a small
    number of kernel draws per held-out pair.
    """
    spec = game.spec
    n = cfg.heldout_samples
    S = rng.uniform(size=(n, spec.joint_dim))
    A = np.stack([rng.integers(m, size=n) for m in spec.actions_per_agent], axis=1)
    R = np.asarray(game.reward(S, A), dtype=float)
    cont = np.zeros(n)
    for _ in range(cfg.heldout_inner_draws):
        nxt = game.kernel.sample_batch(S, A, rng)
        cont += prev_critic.max_tot(nxt)
    cont /= cfg.heldout_inner_draws
    tq = R + spec.gamma * cont
    qn = new_critic.eval(S, A)
    return float(np.sqrt(np.mean((tq - qn) ** 2)))
