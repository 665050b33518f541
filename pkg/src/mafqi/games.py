"""Cooperative Markov games on continuous state boxes with finite joint actions.

States live in [0,1]^(N*d) (d coordinates per agent), actions are finite per
agent.  Games are built from parametric reward and transition-kernel families
so that every constructed game can be serialized to JSON and rebuilt
bit-exactly.  Decomposable games carry an explicit per-agent decomposition of
reward and kernel; reverse-engineered games are built from a chosen optimal
Q-function so that the Bellman optimality equation holds by construction.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import BoundViolationError, ConfigurationError, InvalidKernelError
from .grids import midpoint_grid

KIND_DECOMPOSABLE = "decomposable"
KIND_REVERSE_ENGINEERED = "reverse_engineered"
KIND_GENERIC = "generic"

_KINDS = (KIND_DECOMPOSABLE, KIND_REVERSE_ENGINEERED, KIND_GENERIC)


@dataclass(frozen=True)
class GameSpec:
    """Static structure of a cooperative Markov game."""

    n_agents: int
    state_dim: int
    actions_per_agent: tuple
    gamma: float
    r_max: float
    kind: str = KIND_GENERIC

    def __post_init__(self):
        object.__setattr__(self, "actions_per_agent", tuple(int(m) for m in self.actions_per_agent))
        if self.n_agents < 1:
            raise ConfigurationError("n_agents must be >= 1")
        if self.state_dim < 1:
            raise ConfigurationError("state_dim must be >= 1")
        if len(self.actions_per_agent) != self.n_agents:
            raise ConfigurationError("actions_per_agent must have one entry per agent")
        if any(m < 1 for m in self.actions_per_agent):
            raise ConfigurationError("every action-set size must be >= 1")
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigurationError("gamma must lie in [0, 1)")
        if self.r_max <= 0.0:
            raise ConfigurationError("r_max must be positive")
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown game kind {self.kind!r}")

    @property
    def joint_dim(self):
        return self.n_agents * self.state_dim

    @property
    def n_joint_actions(self):
        return int(np.prod(self.actions_per_agent))

    @property
    def q_max(self):
        return self.r_max / (1.0 - self.gamma)

    def joint_action_index(self, actions):
        """Row-major index of a joint action (agent 0 varies slowest)."""
        actions = np.asarray(actions, dtype=int)
        return np.ravel_multi_index(tuple(actions.T), self.actions_per_agent)

    def to_dict(self):
        return {
            "n_agents": self.n_agents,
            "state_dim": self.state_dim,
            "actions_per_agent": list(self.actions_per_agent),
            "gamma": self.gamma,
            "r_max": self.r_max,
            "kind": self.kind,
        }

    @staticmethod
    def from_dict(d):
        return GameSpec(
            n_agents=d["n_agents"],
            state_dim=d["state_dim"],
            actions_per_agent=tuple(d["actions_per_agent"]),
            gamma=d["gamma"],
            r_max=d["r_max"],
            kind=d.get("kind", KIND_GENERIC),
        )


# ---------------------------------------------------------------------------
# Truncated product-Gaussian helpers (densities on [0,1] per coordinate)
# ---------------------------------------------------------------------------

def _trunc_pdf(x, mu, width):
    z = (x - mu) / width
    norm = ndtr((1.0 - mu) / width) - ndtr(-mu / width)
    return np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * width * norm)


def _trunc_sample(mu, width, rng):
    lo = ndtr(-mu / width)
    hi = ndtr((1.0 - mu) / width)
    u = rng.uniform(size=np.shape(mu))
    return np.clip(mu + width * ndtri(lo + u * (hi - lo)), 0.0, 1.0)


def _product_gaussian_density(points, mu, width, uniform_mix):
    """Density of mix*Uniform + (1-mix)*TruncGauss(mu, width) at `points`.

    points: (..., D), mu broadcastable to points.  Returns (...,).
    """
    pdf = _trunc_pdf(points, mu, width)
    return uniform_mix + (1.0 - uniform_mix) * np.prod(pdf, axis=-1)


def _product_gaussian_sample(mu, width, uniform_mix, rng):
    """One draw per row of mu (n, D)."""
    mu = np.atleast_2d(mu)
    n, dim = mu.shape
    out = _trunc_sample(mu, width, rng)
    pick_uniform = rng.uniform(size=n) < uniform_mix
    if np.any(pick_uniform):
        out[pick_uniform] = rng.uniform(size=(int(pick_uniform.sum()), dim))
    return out


# ---------------------------------------------------------------------------
# Per-agent kernel components (densities over the JOINT state box)
# ---------------------------------------------------------------------------

class UniformComponent:
    """Component density that is uniform on the joint box for every input."""

    family = "uniform"

    def __init__(self, joint_dim):
        self.joint_dim = joint_dim

    def density(self, points, s_local, a_local):
        points = np.atleast_2d(points)
        return np.ones(points.shape[0])

    def sample(self, s_local, a_local, rng):
        return rng.uniform(size=self.joint_dim)

    def normalization(self, s_local, a_local):
        return 1.0

    def params(self):
        return {"family": self.family, "joint_dim": self.joint_dim}


class LocalGaussianComponent:
    """Truncated product-Gaussian (mixed with uniform) whose center follows
    the component's local state and action.

    center(s_i, a_i) = clip01(centers[a_i] + scales[a_i] * tile(s_i, N)).
    """

    family = "local_gaussian"

    def __init__(self, centers, scales, width, uniform_mix, n_agents):
        self.centers = np.asarray(centers, dtype=float)
        self.scales = np.asarray(scales, dtype=float)
        self.width = float(width)
        self.uniform_mix = float(uniform_mix)
        self.n_agents = int(n_agents)
        if self.width <= 0:
            raise ConfigurationError("kernel width must be positive")
        if not (0.0 <= self.uniform_mix <= 1.0):
            raise ConfigurationError("uniform_mix must lie in [0, 1]")
        self.joint_dim = self.centers.shape[1]

    def center(self, s_local, a_local):
        tiled = np.tile(np.atleast_1d(s_local), self.n_agents)
        return np.clip(self.centers[a_local] + self.scales[a_local] * tiled, 0.0, 1.0)

    def density(self, points, s_local, a_local):
        points = np.atleast_2d(points)
        mu = self.center(s_local, a_local)
        return _product_gaussian_density(points, mu, self.width, self.uniform_mix)

    def sample(self, s_local, a_local, rng):
        mu = self.center(s_local, a_local)
        return _product_gaussian_sample(mu[None, :], self.width, self.uniform_mix, rng)[0]

    def sample_rows(self, centers, rng):
        return _product_gaussian_sample(centers, self.width, self.uniform_mix, rng)

    def normalization(self, s_local, a_local, resolution=8192):
        # Product structure: integrate each coordinate with a fine 1-D
        # midpoint rule instead of a joint grid.
        mu = self.center(s_local, a_local)
        axis = (np.arange(resolution) + 0.5) / resolution
        per_dim = np.array([_trunc_pdf(axis, m, self.width).mean() for m in mu])
        return self.uniform_mix + (1.0 - self.uniform_mix) * float(np.prod(per_dim))

    def params(self):
        return {
            "family": self.family,
            "centers": self.centers.tolist(),
            "scales": self.scales.tolist(),
            "width": self.width,
            "uniform_mix": self.uniform_mix,
            "n_agents": self.n_agents,
        }


# ---------------------------------------------------------------------------
# Joint kernels
# ---------------------------------------------------------------------------

class UniformJointKernel:
    family = "uniform_joint"

    def __init__(self, joint_dim):
        self.joint_dim = joint_dim
        self.has_density = True

    def density(self, points, s, a):
        points = np.atleast_2d(points)
        return np.ones(points.shape[0])

    def density_batch(self, points, S, A):
        return np.ones((np.atleast_2d(S).shape[0], np.atleast_2d(points).shape[0]))

    def sample(self, s, a, rng):
        return rng.uniform(size=self.joint_dim)

    def sample_batch(self, S, A, rng):
        return rng.uniform(size=np.atleast_2d(S).shape)

    def params(self):
        return {"family": self.family, "joint_dim": self.joint_dim}


class JointGaussianKernel:
    """Non-decomposable kernel: truncated product-Gaussian whose center
    depends on the product of all state coordinates and the joint action.

    center(s, a) = clip01(bases[idx(a)] + scales[idx(a)] * prod(s)).
    """

    family = "joint_gaussian"

    def __init__(self, bases, scales, width, uniform_mix, actions_per_agent):
        self.bases = np.asarray(bases, dtype=float)
        self.scales = np.asarray(scales, dtype=float)
        self.width = float(width)
        self.uniform_mix = float(uniform_mix)
        self.actions_per_agent = tuple(int(m) for m in actions_per_agent)
        self.joint_dim = self.bases.shape[1]
        self.has_density = True

    def _centers(self, S, A):
        S = np.atleast_2d(S)
        A = np.atleast_2d(A)
        idx = np.ravel_multi_index(tuple(A.T), self.actions_per_agent)
        prod = np.prod(S, axis=1)
        return np.clip(self.bases[idx] + self.scales[idx, None] * prod[:, None], 0.0, 1.0)

    def density(self, points, s, a):
        mu = self._centers(np.atleast_2d(s), np.atleast_2d(a))[0]
        return _product_gaussian_density(np.atleast_2d(points), mu, self.width, self.uniform_mix)

    def density_batch(self, points, S, A):
        mu = self._centers(S, A)  # (n, D)
        points = np.atleast_2d(points)  # (q, D)
        return _product_gaussian_density(points[None, :, :], mu[:, None, :], self.width, self.uniform_mix)

    def sample(self, s, a, rng):
        mu = self._centers(np.atleast_2d(s), np.atleast_2d(a))
        return _product_gaussian_sample(mu, self.width, self.uniform_mix, rng)[0]

    def sample_batch(self, S, A, rng):
        mu = self._centers(S, A)
        return _product_gaussian_sample(mu, self.width, self.uniform_mix, rng)

    def params(self):
        return {
            "family": self.family,
            "bases": self.bases.tolist(),
            "scales": self.scales.tolist(),
            "width": self.width,
            "uniform_mix": self.uniform_mix,
            "actions_per_agent": list(self.actions_per_agent),
        }


class DeltaKernel:
    """Deterministic kernel: the next state is a fixed map of the current one.

    Supported maps: "identity" (s' = s) and "product" (every coordinate of s'
    equals the product of the coordinates of s).
    """

    family = "delta"

    def __init__(self, joint_dim, map_name="identity"):
        if map_name not in ("identity", "product"):
            raise ConfigurationError(f"unsupported delta map {map_name!r}")
        self.joint_dim = joint_dim
        self.map_name = map_name
        self.has_density = False

    def next_state(self, S, A=None):
        S = np.atleast_2d(S)
        if self.map_name == "identity":
            return S.copy()
        prod = np.prod(S, axis=1)
        return np.repeat(prod[:, None], self.joint_dim, axis=1)

    def sample(self, s, a, rng):
        return self.next_state(np.atleast_2d(s))[0]

    def sample_batch(self, S, A, rng):
        return self.next_state(S)

    def params(self):
        return {"family": self.family, "joint_dim": self.joint_dim, "map": self.map_name}


class ComponentMixtureKernel:
    """Joint kernel of a decomposable game: (1/N) * sum of component densities.

    Each component is a full probability density over the joint box that
    depends only on its own agent's (s_i, a_i), so the uniform mixture is a
    valid kernel whose summands F_i := density_i / N add up to it.
    """

    family = "component_mixture"

    def __init__(self, components, state_dim):
        self.components = list(components)
        self.state_dim = state_dim
        self.n_agents = len(self.components)
        self.joint_dim = self.n_agents * state_dim
        self.has_density = True

    def _local(self, s, i):
        return np.asarray(s)[i * self.state_dim:(i + 1) * self.state_dim]

    def density(self, points, s, a):
        points = np.atleast_2d(points)
        a = np.asarray(a, dtype=int)
        total = np.zeros(points.shape[0])
        for i, comp in enumerate(self.components):
            total += comp.density(points, self._local(s, i), int(a[i]))
        return total / self.n_agents

    def density_batch(self, points, S, A):
        S = np.atleast_2d(S)
        A = np.atleast_2d(A)
        out = np.zeros((S.shape[0], np.atleast_2d(points).shape[0]))
        for row in range(S.shape[0]):
            out[row] = self.density(points, S[row], A[row])
        return out

    def sample(self, s, a, rng):
        i = int(rng.integers(self.n_agents))
        return self.components[i].sample(self._local(s, i), int(np.asarray(a)[i]), rng)

    def sample_batch(self, S, A, rng):
        S = np.atleast_2d(S)
        A = np.atleast_2d(A)
        n = S.shape[0]
        which = rng.integers(self.n_agents, size=n)
        out = np.empty((n, self.joint_dim))
        # Draw the per-row uniforms in a fixed order so results do not depend
        # on how rows are grouped.
        for row in range(n):
            i = int(which[row])
            out[row] = self.components[i].sample(
                S[row, i * self.state_dim:(i + 1) * self.state_dim], int(A[row, i]), rng
            )
        return out

    def params(self):
        return {
            "family": self.family,
            "state_dim": self.state_dim,
            "components": [c.params() for c in self.components],
        }


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

class AffineAgentReward:
    """Per-agent reward r_i(s_i, a_i) = coefs[a_i] . s_i + biases[a_i]."""

    family = "affine"

    def __init__(self, coefs, biases):
        self.coefs = np.asarray(coefs, dtype=float)
        self.biases = np.asarray(biases, dtype=float)

    def __call__(self, S_local, a):
        S_local = np.atleast_2d(S_local)
        a = np.asarray(a, dtype=int)
        return np.einsum("nd,nd->n", S_local, self.coefs[a]) + self.biases[a]

    def bound(self):
        """Exact sup of |r_i| (affine in s on the unit box: extremes at corners)."""
        pos = np.clip(self.coefs, 0.0, None).sum(axis=1) + self.biases
        neg = np.clip(self.coefs, None, 0.0).sum(axis=1) + self.biases
        return float(np.max(np.abs(np.concatenate([pos, neg]))))

    def params(self):
        return {"family": self.family, "coefs": self.coefs.tolist(), "biases": self.biases.tolist()}


class SumOfAgentRewards:
    family = "sum_affine"

    def __init__(self, components, state_dim):
        self.components = list(components)
        self.state_dim = state_dim

    def __call__(self, S, A):
        S = np.atleast_2d(S)
        A = np.atleast_2d(A)
        total = np.zeros(S.shape[0])
        for i, comp in enumerate(self.components):
            total += comp(S[:, i * self.state_dim:(i + 1) * self.state_dim], A[:, i])
        return total

    def params(self):
        return {
            "family": self.family,
            "state_dim": self.state_dim,
            "components": [c.params() for c in self.components],
        }


class MatchingActionsReward:
    """Pays `high` when all agents pick the same action index, else `low`.

    For two agents with two actions each this is the XNOR reward table.
    """

    family = "matching_actions"

    def __init__(self, high=1.0, low=0.0):
        self.high = float(high)
        self.low = float(low)

    def __call__(self, S, A):
        A = np.atleast_2d(A)
        same = np.all(A == A[:, :1], axis=1)
        return np.where(same, self.high, self.low)

    def params(self):
        return {"family": self.family, "high": self.high, "low": self.low}


class ReverseEngineeredReward:
    """R(s,a) = Q*(s,a) - gamma * E_{s'}[max_a' Q*(s',a')] for a chosen Q*.

    The continuation expectation uses a fixed midpoint node set (cached at
    construction) when the kernel has a density, the deterministic image for
    delta kernels, and seeded Monte-Carlo draws otherwise, so the reward is
    deterministic and re-evaluable.
    """

    family = "reverse_engineered"

    def __init__(self, qstar, kernel, gamma, spec, quad_resolution, mc_draws=4096):
        self.qstar = qstar
        self.kernel = kernel
        self.gamma = float(gamma)
        self.spec = spec
        self.quad_resolution = int(quad_resolution)
        self.mc_draws = int(mc_draws)
        if getattr(kernel, "has_density", False):
            self.quad_nodes = midpoint_grid(self.quad_resolution, spec.joint_dim)
            self.maxq_quad = qstar.max_joint(self.quad_nodes)
        else:
            self.quad_nodes = None
            self.maxq_quad = None

    def _continuation(self, S, A):
        S = np.atleast_2d(S)
        A = np.atleast_2d(A)
        if isinstance(self.kernel, DeltaKernel):
            nxt = self.kernel.next_state(S, A)
            return self.qstar.max_joint(nxt)
        if self.quad_nodes is not None:
            w = self.kernel.density_batch(self.quad_nodes, S, A)
            w = w / w.sum(axis=1, keepdims=True)
            return w @ self.maxq_quad
        out = np.empty(S.shape[0])
        for row in range(S.shape[0]):
            seed = _stable_seed(S[row], A[row])
            rng = np.random.default_rng(seed)
            draws = np.stack(
                [self.kernel.sample(S[row], A[row], rng) for _ in range(self.mc_draws)]
            )
            out[row] = self.qstar.max_joint(draws).mean()
        return out

    def __call__(self, S, A):
        return self.qstar.eval(np.atleast_2d(S), np.atleast_2d(A)) - self.gamma * self._continuation(S, A)

    def params(self):
        return {
            "family": self.family,
            "qstar": self.qstar.params(),
            "quad_resolution": self.quad_resolution,
            "mc_draws": self.mc_draws,
        }


def _stable_seed(s, a):
    payload = np.ascontiguousarray(s, dtype=float).tobytes() + np.ascontiguousarray(a, dtype=np.int64).tobytes()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


# ---------------------------------------------------------------------------
# Exact Q-functions for reverse engineering
# ---------------------------------------------------------------------------

class DecomposedAffineQ:
    """Q*(s,a) = sum_i (coefs_i[a_i] . s_i + biases_i[a_i])."""

    family = "decomposed_affine"

    def __init__(self, coefs, biases, state_dim):
        self.coefs = [np.asarray(c, dtype=float) for c in coefs]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.state_dim = state_dim

    def eval(self, S, A):
        S = np.atleast_2d(S)
        A = np.atleast_2d(A)
        total = np.zeros(S.shape[0])
        for i, (c, b) in enumerate(zip(self.coefs, self.biases)):
            s_i = S[:, i * self.state_dim:(i + 1) * self.state_dim]
            a_i = A[:, i].astype(int)
            total += np.einsum("nd,nd->n", s_i, c[a_i]) + b[a_i]
        return total

    def max_joint(self, S):
        S = np.atleast_2d(S)
        total = np.zeros(S.shape[0])
        for i, (c, b) in enumerate(zip(self.coefs, self.biases)):
            s_i = S[:, i * self.state_dim:(i + 1) * self.state_dim]
            vals = s_i @ c.T + b  # (n, n_actions_i)
            total += vals.max(axis=1)
        return total

    def bound(self):
        total = 0.0
        for c, b in zip(self.coefs, self.biases):
            pos = np.clip(c, 0.0, None).sum(axis=1) + b
            neg = np.clip(c, None, 0.0).sum(axis=1) + b
            total += float(np.max(np.abs(np.concatenate([pos, neg]))))
        return total

    def params(self):
        return {
            "family": self.family,
            "coefs": [c.tolist() for c in self.coefs],
            "biases": [b.tolist() for b in self.biases],
            "state_dim": self.state_dim,
        }


class ConstantQ:
    family = "constant"

    def __init__(self, value):
        self.value = float(value)

    def eval(self, S, A):
        return np.full(np.atleast_2d(S).shape[0], self.value)

    def max_joint(self, S):
        return np.full(np.atleast_2d(S).shape[0], self.value)

    def bound(self):
        return abs(self.value)

    def params(self):
        return {"family": self.family, "value": self.value}


# ---------------------------------------------------------------------------
# The Game object and constructors
# ---------------------------------------------------------------------------

@dataclass
class Decomposition:
    rewards: list
    kernels: list


@dataclass
class Game:
    spec: GameSpec
    reward: object  # callable (S (n,D), A (n,N)) -> (n,)
    kernel: object
    decomposition: Decomposition = None
    provenance: dict = field(default_factory=dict)

    def reward_at(self, s, a):
        return float(self.reward(np.atleast_2d(s), np.atleast_2d(a))[0])

    def kernel_density(self, points, s, a):
        if not getattr(self.kernel, "has_density", False):
            return None
        return self.kernel.density(points, s, a)

    def init_sample(self, n, rng):
        """Initial-state distribution: uniform on the joint box."""
        return rng.uniform(size=(n, self.spec.joint_dim))


def sample_transition(game, s, a, rng):
    """Draw s' ~ P(.|s,a) from the game's kernel using the given stream."""
    return game.kernel.sample(np.asarray(s, dtype=float), np.asarray(a, dtype=int), rng)


def make_decomposable_game(components, spec, normalization_tol=1e-6, probe_points=3):
    """Build a decomposable game from (reward component, kernel component) pairs.

    The joint kernel density is the uniform mixture (1/N) * sum density_i and
    the joint reward is the component sum.  Every kernel component must be a
    valid probability density over the joint box; normalization is checked by
    quadrature at a few probe inputs.
    """
    if len(components) != spec.n_agents:
        raise ConfigurationError(
            f"expected {spec.n_agents} component pairs, got {len(components)}"
        )
    reward_comps = [rc for rc, _ in components]
    kernel_comps = [kc for _, kc in components]

    probes = np.linspace(0.15, 0.85, probe_points)
    for i, kc in enumerate(kernel_comps):
        for a in range(spec.actions_per_agent[i]):
            for p in probes:
                s_local = np.full(spec.state_dim, p)
                z = kc.normalization(s_local, a)
                if abs(z - 1.0) > normalization_tol:
                    raise InvalidKernelError(
                        f"component {i}, action {a}: density integrates to {z:.9f}"
                    )

    bound_sum = sum(rc.bound() for rc in reward_comps)
    if bound_sum > spec.r_max + 1e-12:
        raise BoundViolationError(
            f"component rewards sum to bound {bound_sum:.6f} > r_max {spec.r_max}"
        )
    per_agent_cap = spec.r_max / spec.n_agents
    for i, rc in enumerate(reward_comps):
        if rc.bound() > per_agent_cap + 1e-12:
            raise BoundViolationError(
                f"reward component {i} bound {rc.bound():.6f} exceeds r_max/N"
            )

    spec = GameSpec(spec.n_agents, spec.state_dim, spec.actions_per_agent,
                    spec.gamma, spec.r_max, KIND_DECOMPOSABLE)
    return Game(
        spec=spec,
        reward=SumOfAgentRewards(reward_comps, spec.state_dim),
        kernel=ComponentMixtureKernel(kernel_comps, spec.state_dim),
        decomposition=Decomposition(rewards=reward_comps, kernels=kernel_comps),
    )


def make_reverse_engineered_game(qstar, kernel, spec, quad_resolution=None,
                                 audit_resolution=16, mc_draws=4096):
    """Build a game whose optimal Q-function equals `qstar` by construction.

    The reward is R(s,a) = Q*(s,a) - gamma * E[max_a' Q*(s',a')], so Q*
    satisfies the Bellman optimality equation and is the unique fixed point.
    Raises BoundViolationError if |R| exceeds r_max on the audit grid.
    """
    if qstar.bound() > spec.q_max + 1e-9:
        raise BoundViolationError("qstar exceeds q_max; rescale it first")
    if quad_resolution is None:
        quad_resolution = max(2, int(round(4096 ** (1.0 / spec.joint_dim))))
    reward = ReverseEngineeredReward(qstar, kernel, spec.gamma, spec,
                                     quad_resolution, mc_draws)

    audit_res = audit_resolution
    while audit_res ** spec.joint_dim > 65536:
        audit_res //= 2
    nodes = midpoint_grid(audit_res, spec.joint_dim)
    worst = 0.0
    for a_idx in range(spec.n_joint_actions):
        a = np.array(np.unravel_index(a_idx, spec.actions_per_agent))
        A = np.repeat(a[None, :], nodes.shape[0], axis=0)
        worst = max(worst, float(np.max(np.abs(reward(nodes, A)))))
    if worst > spec.r_max + 1e-9:
        raise BoundViolationError(
            f"reverse-engineered reward reaches {worst:.6f} > r_max {spec.r_max}; "
            "rescale qstar"
        )

    spec = GameSpec(spec.n_agents, spec.state_dim, spec.actions_per_agent,
                    spec.gamma, spec.r_max, KIND_REVERSE_ENGINEERED)
    return Game(spec=spec, reward=reward, kernel=kernel,
                provenance={"reward_sup_on_audit_grid": worst,
                            "audit_resolution": audit_res})


def make_generic_game(reward, kernel, spec):
    spec = GameSpec(spec.n_agents, spec.state_dim, spec.actions_per_agent,
                    spec.gamma, spec.r_max, KIND_GENERIC)
    return Game(spec=spec, reward=reward, kernel=kernel)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


def _kernel_from_params(p, spec):
    family = p["family"]
    if family == "uniform_joint":
        return UniformJointKernel(p["joint_dim"])
    if family == "joint_gaussian":
        return JointGaussianKernel(p["bases"], p["scales"], p["width"],
                                   p["uniform_mix"], p["actions_per_agent"])
    if family == "delta":
        return DeltaKernel(p["joint_dim"], p["map"])
    if family == "component_mixture":
        comps = [_component_from_params(cp) for cp in p["components"]]
        return ComponentMixtureKernel(comps, p["state_dim"])
    raise ConfigurationError(f"unknown kernel family {family!r}")


def _component_from_params(p):
    family = p["family"]
    if family == "uniform":
        return UniformComponent(p["joint_dim"])
    if family == "local_gaussian":
        return LocalGaussianComponent(p["centers"], p["scales"], p["width"],
                                      p["uniform_mix"], p["n_agents"])
    raise ConfigurationError(f"unknown kernel component family {family!r}")


def _qstar_from_params(p):
    family = p["family"]
    if family == "decomposed_affine":
        return DecomposedAffineQ(p["coefs"], p["biases"], p["state_dim"])
    if family == "constant":
        return ConstantQ(p["value"])
    raise ConfigurationError(f"unknown qstar family {family!r}")


def game_to_dict(game):
    doc = {
        "format": "mafqi-game",
        "schema_version": SCHEMA_VERSION,
        "spec": game.spec.to_dict(),
        "kernel": game.kernel.params(),
        "reward": game.reward.params(),
    }
    if game.provenance:
        doc["provenance"] = dict(game.provenance)
    return doc


def game_from_dict(doc):
    if doc.get("format") != "mafqi-game":
        raise ConfigurationError("not a game document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported game schema version {doc.get('schema_version')}")
    spec = GameSpec.from_dict(doc["spec"])
    kernel = _kernel_from_params(doc["kernel"], spec)
    rp = doc["reward"]
    family = rp["family"]
    if family == "sum_affine":
        comps = [AffineAgentReward(cp["coefs"], cp["biases"]) for cp in rp["components"]]
        decomposition = None
        if spec.kind == KIND_DECOMPOSABLE and isinstance(kernel, ComponentMixtureKernel):
            decomposition = Decomposition(rewards=comps, kernels=kernel.components)
        return Game(spec=spec, reward=SumOfAgentRewards(comps, rp["state_dim"]),
                    kernel=kernel, decomposition=decomposition,
                    provenance=doc.get("provenance", {}))
    if family == "matching_actions":
        return Game(spec=spec, reward=MatchingActionsReward(rp["high"], rp["low"]),
                    kernel=kernel, provenance=doc.get("provenance", {}))
    if family == "reverse_engineered":
        qstar = _qstar_from_params(rp["qstar"])
        reward = ReverseEngineeredReward(qstar, kernel, spec.gamma, spec,
                                         rp["quad_resolution"], rp["mc_draws"])
        return Game(spec=spec, reward=reward, kernel=kernel,
                    provenance=doc.get("provenance", {}))
    raise ConfigurationError(f"unknown reward family {family!r}")
