"""Two-layer ReLU networks and the additive per-agent critic.

Covers path-norm accounting, truncated multi-head nets, the sum-of-agents
critic with decentralized argmax, deterministic mini-batch least-squares
fitting with a path-norm budget, Monte-Carlo projection onto additive
functions, and the constructive width-m approximation of targets with finite
spectral norm.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError, UnsupportedTargetError

# ---------------------------------------------------------------------------
# TwoLayerNet
# ---------------------------------------------------------------------------

class TwoLayerNet:
    """Width-M ReLU network with one output head per local action.

    Head h computes sum_k a[h,k] * relu(b[h,k] . x + c[h,k]); outputs are
    truncated to [-clamp, clamp] when a clamp level is set.
    """

    def __init__(self, a, b, c, clamp=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.clamp = None if clamp is None else float(clamp)

    @property
    def n_heads(self):
        return self.a.shape[0]

    @property
    def width(self):
        return self.a.shape[1]

    @property
    def input_dim(self):
        return self.b.shape[2]

    @classmethod
    def zeros(cls, n_heads, width, input_dim, clamp=None):
        return cls(np.zeros((n_heads, width)),
                   np.zeros((n_heads, width, input_dim)),
                   np.zeros((n_heads, width)), clamp)

    @classmethod
    def random(cls, n_heads, width, input_dim, clamp, rng):
        scale = 1.0 / np.sqrt(input_dim * width)
        a = rng.uniform(-scale, scale, size=(n_heads, width))
        b = rng.uniform(-scale, scale, size=(n_heads, width, input_dim))
        c = np.zeros((n_heads, width))
        return cls(a, b, c, clamp)

    def raw(self, x):
        """Untruncated head outputs: (n, n_heads)."""
        x = np.atleast_2d(x)
        hidden = np.maximum(0.0, np.einsum("nd,hmd->nhm", x, self.b) + self.c)
        return np.einsum("nhm,hm->nh", hidden, self.a)

    def forward(self, x):
        out = self.raw(x)
        if self.clamp is not None:
            out = np.clip(out, -self.clamp, self.clamp)
        return out

    def head_path_norms(self):
        return np.sum(np.abs(self.a) * (np.abs(self.b).sum(axis=2) + np.abs(self.c)),
                      axis=1)

    def copy(self):
        return TwoLayerNet(self.a.copy(), self.b.copy(), self.c.copy(), self.clamp)


def path_norm(net):
    """Max over output heads of sum_k |a_k| (||b_k||_1 + |c_k|)."""
    norms = net.head_path_norms()
    return float(norms.max()) if norms.size else 0.0


# ---------------------------------------------------------------------------
# Additive per-agent critic
# ---------------------------------------------------------------------------

class DecomposedQ:
    """Q_tot(s, a) = sum_i Q_i(s_i, a_i) with per-agent truncated nets."""

    def __init__(self, nets, state_dim):
        self.nets = list(nets)
        self.state_dim = int(state_dim)

    @property
    def n_agents(self):
        return len(self.nets)

    @property
    def actions_per_agent(self):
        return tuple(net.n_heads for net in self.nets)

    @property
    def q_max(self):
        return sum(net.clamp if net.clamp is not None else np.inf
                   for net in self.nets)

    @classmethod
    def zeros(cls, n_agents, actions_per_agent, width, state_dim, clamp):
        nets = [TwoLayerNet.zeros(actions_per_agent[i], width, state_dim, clamp)
                for i in range(n_agents)]
        return cls(nets, state_dim)

    @classmethod
    def random(cls, n_agents, actions_per_agent, width, state_dim, clamp, rng):
        nets = [TwoLayerNet.random(actions_per_agent[i], width, state_dim, clamp, rng)
                for i in range(n_agents)]
        return cls(nets, state_dim)

    def copy(self):
        return DecomposedQ([net.copy() for net in self.nets], self.state_dim)

    def _local(self, S, i):
        return np.atleast_2d(S)[:, i * self.state_dim:(i + 1) * self.state_dim]

    def per_agent_values(self, S):
        """Clamped per-agent head tables: list of (n, |A_i|)."""
        return [net.forward(self._local(S, i)) for i, net in enumerate(self.nets)]

    def eval(self, S, A):
        S = np.atleast_2d(S)
        A = np.atleast_2d(np.asarray(A, dtype=int))
        rows = np.arange(S.shape[0])
        total = np.zeros(S.shape[0])
        for i, net in enumerate(self.nets):
            total += net.forward(self._local(S, i))[rows, A[:, i]]
        return total

    def igm_argmax(self, S):
        """Concatenated per-agent argmaxes, ties broken by lowest index."""
        vals = self.per_agent_values(S)
        return np.stack([v.argmax(axis=1) for v in vals], axis=1)

    def max_tot(self, S):
        vals = self.per_agent_values(S)
        return sum(v.max(axis=1) for v in vals)

    def eval_all_joint(self, S, joint_actions):
        """Q_tot at every joint action: (n, n_joint_actions)."""
        vals = self.per_agent_values(S)
        out = np.zeros((np.atleast_2d(S).shape[0], joint_actions.shape[0]))
        for i, v in enumerate(vals):
            out += v[:, joint_actions[:, i]]
        return out

    def path_norm_max(self):
        return max((path_norm(net) for net in self.nets), default=0.0)


def joint_enumeration_argmax(q, S, joint_actions):
    """Brute-force argmax of Q_tot over all joint actions (lowest-index ties)."""
    return joint_actions[q.eval_all_joint(S, joint_actions).argmax(axis=1)]


# ---------------------------------------------------------------------------
# Least-squares fitting
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 0.05
    path_norm_budget: float = 100.0
    penalty_weight: float = 1e-3
    seed: int = 0
    early_stop_tol: float = 0.0
    lr_schedule: str = "cosine"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.lr <= 0 or self.path_norm_budget <= 0 or self.penalty_weight < 0:
            raise ConfigurationError("lr, budget must be positive; penalty >= 0")


def _penalty_grads(net, budget, weight):
    """Subgradients of weight * sum_h max(0, pn_h - budget)^2."""
    norms = net.head_path_norms()
    excess = np.maximum(0.0, norms - budget)
    if not np.any(excess > 0):
        return None
    coef = 2.0 * weight * excess  # (H,)
    reach = np.abs(net.b).sum(axis=2) + np.abs(net.c)  # (H, M)
    da = coef[:, None] * np.sign(net.a) * reach
    db = (coef[:, None] * np.abs(net.a))[:, :, None] * np.sign(net.b)
    dc = coef[:, None] * np.abs(net.a) * np.sign(net.c)
    return da, db, dc


def _rescale_to_budget(net, budget):
    """Scale output weights per head so the path norm is <= budget exactly."""
    norms = net.head_path_norms()
    over = norms > budget
    if np.any(over):
        factors = np.where(over, budget / np.where(norms > 0, norms, 1.0), 1.0)
        net.a = net.a * factors[:, None]


def fit_least_squares(dataset, cfg, template):
    """Mini-batch gradient descent on the empirical squared loss.

    dataset is (S, A, y); template is a DecomposedQ whose parameters seed the
    optimization (pass a zero or random critic for a cold start).  Returns
    (fitted critic, list of per-epoch mean losses).  The path-norm budget is
    enforced by penalty during training and exact output-weight rescaling at
    the end.
    """
    S, A, y = dataset
    S = np.atleast_2d(np.asarray(S, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=int))
    y = np.asarray(y, dtype=float)
    n = S.shape[0]
    if n == 0:
        raise ConfigurationError("dataset must be nonempty")

    q = template.copy()
    rng = np.random.default_rng(cfg.seed)
    n_batches = int(np.ceil(n / cfg.batch_size))
    total_steps = cfg.epochs * n_batches
    step = 0
    epoch_losses = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for bi in range(n_batches):
            idx = order[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
            # Overflow is detected via the loss and raised as DivergenceError.
            with np.errstate(over="ignore", invalid="ignore"):
                loss = _gd_step(q, S[idx], A[idx], y[idx], cfg, step,
                                total_steps)
            if not np.isfinite(loss):
                raise DivergenceError("non-finite training loss", step=step)
            losses.append(loss)
            step += 1
        epoch_losses.append(float(np.mean(losses)))
        if epoch_losses[-1] <= cfg.early_stop_tol:
            break

    for net in q.nets:
        _rescale_to_budget(net, cfg.path_norm_budget)
    return q, epoch_losses


def _gd_step(q, S, A, y, cfg, step, total_steps):
    nb = S.shape[0]
    rows = np.arange(nb)
    if cfg.lr_schedule == "cosine":
        lr = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * step / max(1, total_steps)))
    else:
        lr = cfg.lr

    # Forward pass, keeping per-agent intermediates for the backward pass.
    pred = np.zeros(nb)
    cache = []
    for i, net in enumerate(q.nets):
        x = q._local(S, i)
        heads = A[:, i]
        bh = net.b[heads]            # (nb, M, d)
        ch = net.c[heads]            # (nb, M)
        ah = net.a[heads]            # (nb, M)
        pre = np.einsum("nd,nmd->nm", x, bh) + ch
        hid = np.maximum(0.0, pre)
        raw = np.einsum("nm,nm->n", hid, ah)
        if net.clamp is not None:
            out = np.clip(raw, -net.clamp, net.clamp)
            mask = np.abs(raw) < net.clamp
        else:
            out = raw
            mask = np.ones(nb, dtype=bool)
        pred += out
        cache.append((x, heads, pre, hid, ah, mask))

    resid = pred - y
    loss = float(np.mean(resid ** 2))
    g = 2.0 * resid / nb

    for i, net in enumerate(q.nets):
        x, heads, pre, hid, ah, mask = cache[i]
        go = g * mask
        da = np.zeros_like(net.a)
        db = np.zeros_like(net.b)
        dc = np.zeros_like(net.c)
        np.add.at(da, heads, go[:, None] * hid)
        dhid = (go[:, None] * ah) * (pre > 0)
        np.add.at(db, heads, dhid[:, :, None] * x[:, None, :])
        np.add.at(dc, heads, dhid)
        pen = _penalty_grads(net, cfg.path_norm_budget, cfg.penalty_weight)
        if pen is not None:
            da += pen[0]
            db += pen[1]
            dc += pen[2]
        net.a -= lr * da
        net.b -= lr * db
        net.c -= lr * dc
    return loss


# ---------------------------------------------------------------------------
# Monte-Carlo projection onto additive functions
# ---------------------------------------------------------------------------

class McProjection:
    """Projection components estimated by Monte-Carlo marginalization.

    Shares one set of complementary-coordinate draws across all evaluation
    points of each marginal (common random numbers), so projection errors are
    dominated by the shared noise rather than per-point jitter.
    """

    def __init__(self, f, n_agents, state_dim, n_mc, rng, sampler=None):
        if n_mc < 2:
            raise ConfigurationError("n_mc must be at least 2")
        self.f = f
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.n_mc = n_mc
        joint_dim = n_agents * state_dim
        if sampler is None:
            self.draws = rng.uniform(size=(n_mc, joint_dim))
        else:
            self.draws = np.asarray(sampler(n_mc, rng), dtype=float)
        center_vals = np.asarray(f(self.draws), dtype=float)
        self.c = float(center_vals.mean())
        self.c_stderr = float(center_vals.std(ddof=1) / np.sqrt(n_mc))

    def component(self, i, X_i):
        """(estimate of E_{x_{-i}}[f] at each query, per-query standard error)."""
        X_i = np.atleast_2d(X_i)
        m = X_i.shape[0]
        means = np.empty(m)
        stderrs = np.empty(m)
        lo = i * self.state_dim
        hi = lo + self.state_dim
        pts = self.draws.copy()
        for row in range(m):
            pts[:, lo:hi] = X_i[row]
            vals = np.asarray(self.f(pts), dtype=float)
            means[row] = vals.mean()
            stderrs[row] = vals.std(ddof=1) / np.sqrt(self.n_mc)
        return means, stderrs

    def proj(self, X):
        """Estimated projection sum_i f_i(x_i) - (N-1) C at joint points X."""
        X = np.atleast_2d(X)
        total = np.zeros(X.shape[0])
        worst_stderr = self.c_stderr
        for i in range(self.n_agents):
            lo = i * self.state_dim
            vals, errs = self.component(i, X[:, lo:lo + self.state_dim])
            total += vals
            worst_stderr = max(worst_stderr, float(errs.max()))
        return total - (self.n_agents - 1) * self.c, worst_stderr


def mc_project_decomposable(f, n_agents, state_dim, n_mc, rng, sampler=None):
    return McProjection(f, n_agents, state_dim, n_mc, rng, sampler)


# ---------------------------------------------------------------------------
# Spectral norm and the constructive approximation sampler
# ---------------------------------------------------------------------------

class CosineMixture:
    """f(x) = sum_j alpha_j cos(<omega_j, x> + phi_j).

    Its Fourier transform is a finite set of paired point masses, so the
    spectral norm and the neuron-sampling density are available in closed
    form.
    """

    def __init__(self, alphas, omegas, phases=None):
        self.alphas = np.asarray(alphas, dtype=float).reshape(-1)
        self.omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
        if self.alphas.size == 0:
            self.omegas = self.omegas.reshape(0, max(1, self.omegas.shape[-1]))
        if phases is None:
            phases = np.zeros(self.alphas.size)
        self.phases = np.asarray(phases, dtype=float).reshape(-1)
        if self.omegas.shape[0] != self.alphas.size or self.phases.size != self.alphas.size:
            raise ConfigurationError("alphas, omegas, phases must align")

    @property
    def dim(self):
        return self.omegas.shape[1]

    def __call__(self, x):
        x = np.atleast_2d(x)
        if self.alphas.size == 0:
            return np.zeros(x.shape[0])
        return np.cos(x @ self.omegas.T + self.phases) @ self.alphas

    def value0(self):
        return float(np.sum(self.alphas * np.cos(self.phases)))

    def grad0(self):
        if self.alphas.size == 0:
            return np.zeros(self.dim)
        return -(self.alphas * np.sin(self.phases)) @ self.omegas

    def lipschitz_bound(self):
        """sup ||grad f||_2 <= sum |alpha_j| ||omega_j||_2 (certified)."""
        return float(np.sum(np.abs(self.alphas)
                            * np.linalg.norm(self.omegas, axis=1)))


def spectral_norm_gamma(target):
    """sum_j |alpha_j| ||omega_j||_1^2: the point-mass value of the spectral
    integral for a finite cosine mixture."""
    if not isinstance(target, CosineMixture):
        raise UnsupportedTargetError(
            "spectral norm is only available for finite cosine mixtures"
        )
    if target.alphas.size == 0:
        return 0.0
    return float(np.sum(np.abs(target.alphas)
                        * np.abs(target.omegas).sum(axis=1) ** 2))


class BarronNet:
    """Width-m sampled net plus the f(0) and gradient-at-zero corrections."""

    def __init__(self, net, f0, grad0, v, rejection_rate):
        self.net = net
        self.f0 = float(f0)
        self.grad0 = np.asarray(grad0, dtype=float)
        self.v = float(v)
        self.rejection_rate = float(rejection_rate)

    def __call__(self, x):
        x = np.atleast_2d(x)
        return self.net.raw(x)[:, 0] + self.f0 + x @ self.grad0

    @property
    def path_norm(self):
        return path_norm(self.net)


def _atom_table(target, t_quad=16384):
    """Point masses of the neuron-sampling density for a cosine mixture.

    Each cosine term alpha cos(<w,x>+phi) contributes Fourier mass |alpha|/2
    at +/- w with phase +/- phi (shifted by pi when alpha < 0); atoms are
    (z, w) pairs with weight |f_hat(w)| ||w||_1^2 int_0^1 |cos(||w||_1 t - z b)| dt.
    """
    ts = (np.arange(t_quad) + 0.5) / t_quad
    atoms = []
    for alpha, omega, phi in zip(target.alphas, target.omegas, target.phases):
        if alpha == 0.0:
            continue
        l1 = float(np.abs(omega).sum())
        if l1 == 0.0:
            continue
        shift = np.pi if alpha < 0 else 0.0
        for w_sign in (1.0, -1.0):
            b = w_sign * phi + shift
            for z in (1.0, -1.0):
                mass = (abs(alpha) / 2.0) * l1 ** 2 * float(
                    np.mean(np.abs(np.cos(l1 * ts - z * b)))
                )
                atoms.append((z, w_sign * omega, l1, b, mass))
    return atoms


def barron_monte_carlo_net(target, m, rng):
    """Sample a width-m two-layer ReLU approximation of a cosine mixture.

    Neurons are drawn from the density proportional to
    |f_hat(w)| ||w||_1^2 |cos(||w||_1 t - z b(w))| over (z, t, w); each neuron
    is s * (z w.x/||w||_1 - t)_+ with s the negated sign of that cosine, and
    the empirical average is scaled by the density's normalizer v.  The
    sampled part has path norm <= 2v deterministically.
    """
    if not isinstance(target, CosineMixture):
        raise UnsupportedTargetError(
            "the constructive sampler supports only finite cosine mixtures"
        )
    if m < 1:
        raise ConfigurationError("width m must be at least 1")
    d = target.dim
    atoms = _atom_table(target)
    v = sum(a[4] for a in atoms)
    if v == 0.0:
        net = TwoLayerNet.zeros(1, m, d)
        return BarronNet(net, target.value0(), target.grad0(), 0.0, 0.0)

    probs = np.array([a[4] for a in atoms]) / v
    picks = rng.choice(len(atoms), size=m, p=probs)
    a_out = np.empty(m)
    b_out = np.empty((m, d))
    c_out = np.empty(m)
    proposals = 0
    for k in range(m):
        z, omega, l1, b_phase, _ = atoms[picks[k]]
        # Rejection sampling of t from |cos(l1 t - z b)| with unit envelope.
        while True:
            proposals += 1
            t = rng.uniform()
            if rng.uniform() < abs(np.cos(l1 * t - z * b_phase)):
                break
        s = -np.sign(np.cos(l1 * t - z * b_phase))
        a_out[k] = s * v / m
        b_out[k] = z * omega / l1
        c_out[k] = -t
    net = TwoLayerNet(a_out[None, :], b_out[None, :, :], c_out[None, :])
    rejection_rate = 1.0 - m / proposals
    return BarronNet(net, target.value0(), target.grad0(), v, rejection_rate)


# ---------------------------------------------------------------------------
# Checkpoint format
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"MANN"
CHECKPOINT_FORMAT_VERSION = 1


def save_decomposed(path, q):
    """Versioned binary checkpoint: JSON header + raw little-endian arrays."""
    header = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "state_dim": q.state_dim,
        "nets": [
            {
                "n_heads": net.n_heads,
                "width": net.width,
                "input_dim": net.input_dim,
                "clamp": net.clamp,
                "path_norm": path_norm(net),
            }
            for net in q.nets
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(np.array([len(blob)], dtype="<u4").tobytes())
        fh.write(blob)
        for net in q.nets:
            for arr in (net.a, net.b, net.c):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_decomposed(path, tol=1e-12):
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ConfigurationError("not a critic checkpoint")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode())
        if header["version"] != CHECKPOINT_FORMAT_VERSION:
            raise ConfigurationError("unsupported checkpoint version")
        nets = []
        for meta in header["nets"]:
            h, w, d = meta["n_heads"], meta["width"], meta["input_dim"]
            a = np.frombuffer(fh.read(h * w * 8), dtype="<f8").reshape(h, w).copy()
            b = np.frombuffer(fh.read(h * w * d * 8), dtype="<f8").reshape(h, w, d).copy()
            c = np.frombuffer(fh.read(h * w * 8), dtype="<f8").reshape(h, w).copy()
            net = TwoLayerNet(a, b, c, meta["clamp"])
            if abs(path_norm(net) - meta["path_norm"]) > tol:
                raise ConfigurationError("stored path norm does not match weights")
            nets.append(net)
    return DecomposedQ(nets, header["state_dim"])
