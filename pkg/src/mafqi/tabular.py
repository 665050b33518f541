"""Brute-force ground truth on midpoint-grid discretizations of a game.

Provides dense tabular games, Bellman-operator application, value iteration,
policy evaluation, and the exact weighted least-squares projection onto the
class of additive (per-agent-summed) Q tables, in both closed form and as a
normal-equations solve used to cross-check it.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError, SizeError
from .games import ComponentMixtureKernel, DeltaKernel
from .grids import midpoint_grid

DEFAULT_MEM_CAP_BYTES = 2 << 30


def joint_action_table(actions_per_agent):
    """All joint actions, row-major (agent 0 varies slowest): (n_actions, N)."""
    n = int(np.prod(actions_per_agent))
    return np.stack(np.unravel_index(np.arange(n), actions_per_agent), axis=1)


# ---------------------------------------------------------------------------
# Transition representations
# ---------------------------------------------------------------------------

class DenseTransition:
    """Full row-stochastic table P of shape (n_nodes, n_actions, n_nodes)."""

    def __init__(self, P):
        self.P = np.asarray(P, dtype=float)

    def expect(self, v):
        """E_{s'~P(.|s,a)}[v(s')] for all (s,a): shape (n_nodes, n_actions)."""
        return self.P @ v

    def dense(self):
        return self.P

    def row_sum_error(self):
        return float(np.max(np.abs(self.P.sum(axis=2) - 1.0)))


class DeterministicTransition:
    """Kernel concentrated on one node per (s, a)."""

    def __init__(self, next_idx, n_nodes):
        self.next_idx = np.asarray(next_idx, dtype=int)
        self.n_nodes = n_nodes

    def expect(self, v):
        return v[self.next_idx]

    def dense(self):
        n_nodes, n_actions = self.next_idx.shape
        P = np.zeros((n_nodes, n_actions, n_nodes))
        s = np.repeat(np.arange(n_nodes), n_actions)
        a = np.tile(np.arange(n_actions), n_nodes)
        P[s, a, self.next_idx[s, a]] = 1.0
        return P

    def row_sum_error(self):
        return 0.0


class DecomposedTransition:
    """P = (1/N) * sum_i D_i where D_i depends only on agent i's (s_i, a_i).

    components[i] has shape (n_local_states, |A_i|, n_nodes), each row a
    distribution over joint next-state nodes.  local_idx[i] maps a joint node
    index to agent i's local state index; action_dec is the joint-action table.
    """

    def __init__(self, components, local_idx, action_dec, n_nodes):
        self.components = [np.asarray(c, dtype=float) for c in components]
        self.local_idx = [np.asarray(l, dtype=int) for l in local_idx]
        self.action_dec = np.asarray(action_dec, dtype=int)
        self.n_nodes = n_nodes
        self.n_agents = len(self.components)

    def expect(self, v):
        n_actions = self.action_dec.shape[0]
        out = np.zeros((self.n_nodes, n_actions))
        for i, D in enumerate(self.components):
            e = D @ v  # (n_local, |A_i|)
            out += e[self.local_idx[i]][:, self.action_dec[:, i]]
        return out / self.n_agents

    def dense(self):
        n_actions = self.action_dec.shape[0]
        P = np.zeros((self.n_nodes, n_actions, self.n_nodes))
        for i, D in enumerate(self.components):
            P += D[self.local_idx[i]][:, self.action_dec[:, i], :]
        return P / self.n_agents

    def component_dense(self, i):
        """The i-th summand D_i expanded over joint nodes and joint actions."""
        return self.components[i][self.local_idx[i]][:, self.action_dec[:, i], :] / self.n_agents

    def row_sum_error(self):
        sums = self.expect(np.ones(self.n_nodes))
        return float(np.max(np.abs(sums - 1.0)))


# ---------------------------------------------------------------------------
# TabularGame
# ---------------------------------------------------------------------------

@dataclass
class TabularGame:
    resolution: int
    nodes: np.ndarray            # (n_nodes, N*d)
    joint_actions: np.ndarray    # (n_actions, N)
    transition: object
    R: np.ndarray                # (n_nodes, n_actions)
    gamma: float
    r_max: float
    spec: object = None
    local_idx: list = field(default_factory=list)  # per-agent node -> local state

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_actions(self):
        return self.joint_actions.shape[0]

    @property
    def q_max(self):
        return self.r_max / (1.0 - self.gamma)

    def local_states(self):
        """Per-agent local state grid: (n_local, d)."""
        d = self.nodes.shape[1] // self.joint_actions.shape[1]
        return midpoint_grid(self.resolution, d)


def _local_index_maps(resolution, n_agents, d):
    """For each agent, map joint node index -> local state index (row-major)."""
    joint_dim = n_agents * d
    n_nodes = resolution ** joint_dim
    dim_idx = np.unravel_index(np.arange(n_nodes), (resolution,) * joint_dim)
    dim_idx = np.stack(dim_idx, axis=1)  # (n_nodes, joint_dim)
    maps = []
    for i in range(n_agents):
        cols = dim_idx[:, i * d:(i + 1) * d]
        maps.append(np.ravel_multi_index(tuple(cols.T), (resolution,) * d))
    return maps


def discretize(game, resolution, mem_cap_bytes=DEFAULT_MEM_CAP_BYTES):
    """Midpoint-grid discretization of a game into a TabularGame.

    Transition rows are kernel densities at the nodes, renormalized to be
    exactly stochastic.  Decomposable games are discretized component-wise so
    the tabular kernel is exactly the average of per-agent summands; delta
    kernels map each node to the nearest grid node.
    """
    spec = game.spec
    n_nodes = resolution ** spec.joint_dim
    n_actions = spec.n_joint_actions
    nodes = midpoint_grid(resolution, spec.joint_dim)
    actions = joint_action_table(spec.actions_per_agent)
    local_idx = _local_index_maps(resolution, spec.n_agents, spec.state_dim)

    if n_nodes * n_actions * 8 > mem_cap_bytes:
        raise SizeError(
            f"reward table alone needs {n_nodes * n_actions * 8} bytes > cap"
        )

    kernel = game.kernel
    if isinstance(kernel, DeltaKernel):
        transition = _discretize_delta(kernel, nodes, actions, resolution, spec)
    elif game.decomposition is not None and isinstance(kernel, ComponentMixtureKernel):
        transition = _discretize_components(kernel, nodes, actions, resolution,
                                            spec, local_idx, mem_cap_bytes)
    else:
        if n_nodes * n_actions * n_nodes * 8 > mem_cap_bytes:
            raise SizeError(
                f"dense transition table needs {n_nodes * n_actions * n_nodes * 8} bytes > cap"
            )
        transition = _discretize_dense(kernel, nodes, actions)

    R = np.empty((n_nodes, n_actions))
    for a_idx in range(n_actions):
        A = np.repeat(actions[a_idx][None, :], n_nodes, axis=0)
        R[:, a_idx] = game.reward(nodes, A)
    if np.max(np.abs(R)) > spec.r_max + 1e-9:
        raise ConfigurationError("discretized reward exceeds r_max")

    return TabularGame(resolution=resolution, nodes=nodes, joint_actions=actions,
                       transition=transition, R=R, gamma=spec.gamma,
                       r_max=spec.r_max, spec=spec, local_idx=local_idx)


def _nearest_node_index(points, resolution, joint_dim):
    cells = np.clip((points * resolution).astype(int), 0, resolution - 1)
    return np.ravel_multi_index(tuple(cells.T), (resolution,) * joint_dim)


def _discretize_delta(kernel, nodes, actions, resolution, spec):
    n_nodes, n_actions = nodes.shape[0], actions.shape[0]
    next_idx = np.empty((n_nodes, n_actions), dtype=int)
    for a_idx in range(n_actions):
        A = np.repeat(actions[a_idx][None, :], n_nodes, axis=0)
        nxt = kernel.next_state(nodes, A)
        next_idx[:, a_idx] = _nearest_node_index(nxt, resolution, spec.joint_dim)
    return DeterministicTransition(next_idx, n_nodes)


def _discretize_components(kernel, nodes, actions, resolution, spec,
                           local_idx, mem_cap_bytes):
    n_nodes = nodes.shape[0]
    n_local = resolution ** spec.state_dim
    local_grid = midpoint_grid(resolution, spec.state_dim)
    comps = []
    total = 0
    for i, comp in enumerate(kernel.components):
        n_a = spec.actions_per_agent[i]
        total += n_local * n_a * n_nodes * 8
        if total > mem_cap_bytes:
            raise SizeError("component transition tables exceed memory cap")
        D = np.empty((n_local, n_a, n_nodes))
        for li in range(n_local):
            for a in range(n_a):
                row = comp.density(nodes, local_grid[li], a)
                D[li, a] = row / row.sum()
        comps.append(D)
    return DecomposedTransition(comps, local_idx, actions, n_nodes)


def _discretize_dense(kernel, nodes, actions):
    n_nodes, n_actions = nodes.shape[0], actions.shape[0]
    P = np.empty((n_nodes, n_actions, n_nodes))
    for a_idx in range(n_actions):
        A = np.repeat(actions[a_idx][None, :], n_nodes, axis=0)
        rows = kernel.density_batch(nodes, nodes, A)
        P[:, a_idx, :] = rows / rows.sum(axis=1, keepdims=True)
    return DenseTransition(P)


# ---------------------------------------------------------------------------
# Bellman machinery
# ---------------------------------------------------------------------------

def _check_shape(q, tg):
    if q.shape != (tg.n_nodes, tg.n_actions):
        raise ShapeError(f"Q table shape {q.shape} does not match game "
                         f"({tg.n_nodes}, {tg.n_actions})")


def bellman_apply(q, tg):
    """[TQ](s,a) = R(s,a) + gamma * E_{s'}[max_{a'} q(s',a')]."""
    q = np.asarray(q, dtype=float)
    _check_shape(q, tg)
    v = q.max(axis=1)
    return tg.R + tg.gamma * tg.transition.expect(v)


def value_iteration(tg, tol=1e-9, max_iters=None):
    """Iterate T from the zero table until the Bellman residual is <= tol."""
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    if max_iters is None:
        if tg.gamma > 0:
            max_iters = int(np.ceil(np.log(2 * tg.q_max / tol) / np.log(1 / tg.gamma))) + 2
        else:
            max_iters = 2
    q = np.zeros((tg.n_nodes, tg.n_actions))
    for _ in range(max_iters):
        nxt = bellman_apply(q, tg)
        if np.max(np.abs(nxt - q)) <= tol:
            return nxt
        q = nxt
    return q


def greedy_policy(q, tg):
    """Per-node joint-action index, ties broken by lowest index."""
    q = np.asarray(q, dtype=float)
    _check_shape(q, tg)
    return q.argmax(axis=1)


def policy_eval(tg, policy, tol=1e-10, max_iters=None):
    """Q^pi: fixed point of Q = R + gamma * P [Q(., pi(.))], solved by iteration."""
    policy = np.asarray(policy, dtype=int)
    if policy.shape != (tg.n_nodes,):
        raise ShapeError("policy must assign one joint action per node")
    if max_iters is None:
        if tg.gamma > 0:
            max_iters = int(np.ceil(np.log(2 * tg.q_max / max(tol, 1e-300))
                                    / np.log(1 / tg.gamma))) + 2
        else:
            max_iters = 2
    rows = np.arange(tg.n_nodes)
    v = np.zeros(tg.n_nodes)
    r_pi = tg.R[rows, policy]
    for _ in range(max_iters):
        nxt = r_pi + tg.gamma * tg.transition.expect(v)[rows, policy]
        if np.max(np.abs(nxt - v)) <= tol:
            v = nxt
            break
        v = nxt
    return tg.R + tg.gamma * tg.transition.expect(v)


def greedy_backup(q, v, tg):
    """E[max_a' q(s', a')] (greedy) and E[q(s', pi(s'))] pieces are both
    expressible through transition.expect; this helper returns the greedy one."""
    return tg.transition.expect(np.asarray(q).max(axis=1))


def policy_backup(q, policy, tg):
    rows = np.arange(tg.n_nodes)
    return tg.transition.expect(np.asarray(q)[rows, np.asarray(policy, dtype=int)])


# ---------------------------------------------------------------------------
# Projection onto additive (decomposable) tables
# ---------------------------------------------------------------------------

class SeparableWeights:
    """Product weights over (node, joint action): w = prod_i w_i(l_i, a_i).

    Each marginal is a (n_local_states, |A_i|) array of nonnegative weights
    normalized to sum to 1.
    """

    def __init__(self, marginals):
        self.marginals = []
        for w in marginals:
            w = np.asarray(w, dtype=float)
            if np.any(w < 0):
                raise ConfigurationError("weights must be nonnegative")
            total = w.sum()
            if total <= 0:
                raise ConfigurationError("weights must have positive mass")
            self.marginals.append(w / total)

    @staticmethod
    def uniform(tg):
        n_local = tg.resolution ** (tg.nodes.shape[1] // tg.joint_actions.shape[1])
        return SeparableWeights([
            np.ones((n_local, m)) for m in tg.spec.actions_per_agent
        ])

    def full_tensor(self):
        """Product weight tensor with axes (l_1, a_1, l_2, a_2, ...)."""
        out = self.marginals[0]
        for w in self.marginals[1:]:
            out = np.multiply.outer(out, w)
        return out


def _q_to_tensor(q, tg):
    """Reshape (n_nodes, n_actions) into axes (l_1, ..., l_N, a_1, ..., a_N)
    then reorder to (l_1, a_1, l_2, a_2, ...)."""
    n = tg.spec.n_agents
    n_local = tg.resolution ** tg.spec.state_dim
    shape = (n_local,) * n + tuple(tg.spec.actions_per_agent)
    t = np.asarray(q, dtype=float).reshape(shape)
    order = []
    for i in range(n):
        order += [i, n + i]
    return np.transpose(t, order)


def _tensor_to_q(t, tg):
    n = tg.spec.n_agents
    order = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    t = np.transpose(t, order)
    return t.reshape(tg.n_nodes, tg.n_actions)


def exact_decomposable_projection(q, tg, sigma=None):
    """Weighted L2 projection of a Q table onto additive per-agent tables.

    Uses the closed form Proj(f) = sum_i E_{x_{-i}}[f] - (N-1) * E[f], which
    is the least-squares projection under separable weights.  Returns the
    projected table and the sigma-weighted L2 residual ||q - Proj(q)||_sigma.
    """
    q = np.asarray(q, dtype=float)
    _check_shape(q, tg)
    if sigma is None:
        sigma = SeparableWeights.uniform(tg)
    if not isinstance(sigma, SeparableWeights):
        raise ConfigurationError("sigma must be separable product weights")
    n = tg.spec.n_agents
    t = _q_to_tensor(q, tg)

    # Per-agent conditional means f_i(l_i, a_i) = E over all other agents.
    letters = "abcdefghijkl"
    subs = "".join(letters[:2 * n])
    marginals = []
    total_mean = None
    for i in range(n):
        keep = subs[2 * i:2 * i + 2]
        operands = [t]
        script = subs
        for j in range(n):
            if j == i:
                continue
            operands.append(sigma.marginals[j])
            script += "," + subs[2 * j:2 * j + 2]
        f_i = np.einsum(script + "->" + keep, *operands)
        marginals.append(f_i)
        if total_mean is None:
            total_mean = float(np.einsum("xy,xy->", f_i, sigma.marginals[i]))

    proj = np.zeros_like(t)
    for i in range(n):
        shape = [1] * (2 * n)
        shape[2 * i] = marginals[i].shape[0]
        shape[2 * i + 1] = marginals[i].shape[1]
        proj = proj + marginals[i].reshape(shape)
    proj = proj - (n - 1) * total_mean

    w = sigma.full_tensor()
    residual = float(np.sqrt(np.sum(w * (t - proj) ** 2)))
    return _tensor_to_q(proj, tg), residual


def decomposable_projection_lstsq(q, tg, sigma=None):
    """Normal-equations least-squares projection onto additive tables.

    Independent cross-check for exact_decomposable_projection: builds the
    one-hot design over per-agent (local state, action) features and solves
    the sqrt-weighted system directly.
    """
    q = np.asarray(q, dtype=float)
    _check_shape(q, tg)
    if sigma is None:
        sigma = SeparableWeights.uniform(tg)
    n = tg.spec.n_agents
    n_rows = tg.n_nodes * tg.n_actions
    w = sigma.full_tensor()
    w_flat = _tensor_to_q(w, tg).reshape(n_rows)

    blocks = []
    for i in range(n):
        n_local = sigma.marginals[i].shape[0]
        n_a = tg.spec.actions_per_agent[i]
        li = np.repeat(tg.local_idx[i], tg.n_actions)
        ai = np.tile(tg.joint_actions[:, i], tg.n_nodes)
        block = np.zeros((n_rows, n_local * n_a))
        block[np.arange(n_rows), li * n_a + ai] = 1.0
        blocks.append(block)
    X = np.concatenate(blocks, axis=1)

    sw = np.sqrt(w_flat)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], q.reshape(n_rows) * sw, rcond=None)
    proj = (X @ beta).reshape(tg.n_nodes, tg.n_actions)
    residual = float(np.sqrt(np.sum(w_flat * (q.reshape(n_rows) - X @ beta) ** 2)))
    return proj, residual


def tq_decomposability_residual(q, tg, sigma=None):
    """Sigma-weighted L2 distance of TQ from the additive class.

    For discretizations of decomposable games this is ~0 for every Q; a
    strictly positive value for some Q witnesses non-decomposability.
    """
    tq = bellman_apply(np.asarray(q, dtype=float), tg)
    _, residual = exact_decomposable_projection(tq, tg, sigma)
    return residual


# ---------------------------------------------------------------------------
# QTable export
# ---------------------------------------------------------------------------

_QTABLE_MAGIC = b"MAQT"
QTABLE_FORMAT_VERSION = 1


def save_qtable(path, q):
    """Flat binary layout: magic, version, shape, little-endian float64 data."""
    q = np.ascontiguousarray(q, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_QTABLE_MAGIC)
        fh.write(np.array([QTABLE_FORMAT_VERSION, q.shape[0], q.shape[1]],
                          dtype="<u4").tobytes())
        fh.write(q.tobytes())


def load_qtable(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _QTABLE_MAGIC:
            raise ConfigurationError("not a Q-table file")
        version, rows, cols = np.frombuffer(fh.read(12), dtype="<u4")
        if version != QTABLE_FORMAT_VERSION:
            raise ConfigurationError(f"unsupported Q-table version {version}")
        data = np.frombuffer(fh.read(int(rows) * int(cols) * 8), dtype="<f8")
    return data.reshape(int(rows), int(cols)).copy()


def save_qtable_csv(path, q):
    np.savetxt(path, np.asarray(q, dtype=float), delimiter=",", fmt="%.17g")
