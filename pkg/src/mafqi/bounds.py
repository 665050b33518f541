"""Inequality checkers that compare measured oracle quantities to the
theoretical bounds: the greedy policy gap, the cumulative error recursion,
the error-propagation bound, Rademacher and posterior generalization bounds,
and the L2-vs-sup-norm lower bound for Lipschitz functions.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .networks import TwoLayerNet, path_norm
from .tabular import greedy_policy, policy_eval


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    inputs: dict = field(default_factory=dict)
    holds: object = None   # True / False / None (not applicable or vacuous)
    note: str = ""

    @property
    def margin(self):
        return self.rhs - self.lhs

    def to_json(self):
        return json.dumps({
            "name": self.name, "lhs": self.lhs, "rhs": self.rhs,
            "margin": self.margin, "holds": self.holds, "note": self.note,
            "inputs": self.inputs,
        }, sort_keys=True)


def _verdict(lhs, rhs, slack):
    return bool(lhs <= rhs + slack)


# ---------------------------------------------------------------------------
# Policy gap:  ||Q* - Q^pi||_inf <= (2 gamma / (1 - gamma)) ||Q* - Qtilde||_inf
# ---------------------------------------------------------------------------

def check_policy_gap(qstar, qtilde, tg, slack=1e-8):
    """Greedy-policy suboptimality versus critic error, both in sup norm."""
    gamma = tg.gamma
    policy = greedy_policy(qtilde, tg)
    q_pi = policy_eval(tg, policy)
    lhs = float(np.max(np.abs(qstar - q_pi)))
    critic_err = float(np.max(np.abs(qstar - qtilde)))
    rhs = (2.0 * gamma / (1.0 - gamma)) * critic_err
    return BoundReport(
        name="policy_gap", lhs=lhs, rhs=rhs,
        inputs={"gamma": gamma, "critic_sup_err": critic_err},
        holds=_verdict(lhs, rhs, slack))


# ---------------------------------------------------------------------------
# Cumulative recursion:
#   ||Q* - Qtilde_K||_inf <= eps_max/(1-eta) + 4 gamma^K R_max/(1-gamma)^2,
#   eta = (N+1) gamma, informative only when eta < 1.
# ---------------------------------------------------------------------------

def check_cumulative_recursion(final_sup_err, eps_proj_max, gamma, n_agents,
                               r_max, K, slack=1e-8):
    eta = (n_agents + 1) * gamma
    inputs = {"gamma": gamma, "N": n_agents, "K": K, "r_max": r_max,
              "eta": eta, "eps_max": eps_proj_max}
    if eta >= 1.0:
        return BoundReport(name="cumulative_recursion", lhs=final_sup_err,
                           rhs=float("inf"), inputs=inputs, holds=None,
                           note="vacuous: eta >= 1")
    rhs = eps_proj_max / (1.0 - eta) + 4.0 * gamma ** K * r_max / (1.0 - gamma) ** 2
    return BoundReport(name="cumulative_recursion", lhs=final_sup_err, rhs=rhs,
                       inputs=inputs, holds=_verdict(final_sup_err, rhs, slack))


# ---------------------------------------------------------------------------
# Error propagation:
#   ||Q* - Q^{pi_K}||_{1,mu} <= 2 phi gamma eps_max/(1-gamma)^2
#                               + 4 gamma^{K+1} R_max/(1-gamma)^2
# ---------------------------------------------------------------------------

def error_propagation_report(l1_policy_err, eps_max_sigma, gamma, r_max, K,
                             phi, slack=1e-8):
    """phi is the caller-supplied concentration coefficient (diagnostic only;
    the sup over policy sequences defining it is not computed here)."""
    if phi <= 0:
        raise ConfigurationError("phi must be positive")
    stat_term = 2.0 * phi * gamma * eps_max_sigma / (1.0 - gamma) ** 2
    algo_term = 4.0 * gamma ** (K + 1) * r_max / (1.0 - gamma) ** 2
    rhs = stat_term + algo_term
    return BoundReport(
        name="error_propagation", lhs=l1_policy_err, rhs=rhs,
        inputs={"gamma": gamma, "K": K, "r_max": r_max, "phi": phi,
                "eps_max": eps_max_sigma, "stat_term": stat_term,
                "algo_term": algo_term},
        holds=_verdict(l1_policy_err, rhs, slack))


def fit_log_decay(errors, ks=None, floor=1e-300):
    """Least-squares slope and R^2 of log(error) against the iteration index."""
    errors = np.asarray(errors, dtype=float)
    if ks is None:
        ks = np.arange(1, errors.size + 1)
    ks = np.asarray(ks, dtype=float)
    y = np.log(np.maximum(errors, floor))
    A = np.stack([ks, np.ones_like(ks)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


# ---------------------------------------------------------------------------
# Rademacher complexity of path-norm-bounded two-layer nets:
#   R(F_Q) <= 2 Q sqrt(2 log(2D) / n)
# ---------------------------------------------------------------------------

def sample_path_norm_net(budget, width, input_dim, rng):
    """Random single-head net rescaled to have path norm exactly `budget`."""
    a = rng.standard_normal(width)
    b = rng.standard_normal((width, input_dim))
    c = rng.standard_normal(width)
    net = TwoLayerNet(a[None, :], b[None, :, :], c[None, :])
    pn = path_norm(net)
    if pn > 0:
        net.a *= budget / pn
    return net


def empirical_rademacher(candidates, X, budget, sign_draws, rng, slack=1e-12):
    """Monte-Carlo estimate of (1/n) E_xi sup_f sum_i xi_i f(x_i) over a
    finite candidate set, compared against the class bound.

    The finite-set sup lower-bounds the class sup, so the estimate must sit
    below the bound (up to Monte-Carlo error, reported as a 95% CI).
    """
    X = np.atleast_2d(X)
    n, D = X.shape
    if sign_draws < 100:
        raise ConfigurationError("need at least 100 sign draws")
    vals = np.stack([np.asarray(f(X), dtype=float).reshape(-1) for f in candidates])
    sups = np.empty(sign_draws)
    for t in range(sign_draws):
        xi = rng.integers(0, 2, size=n) * 2.0 - 1.0
        sups[t] = (vals @ xi).max() / n
    estimate = float(sups.mean())
    ci = float(1.96 * sups.std(ddof=1) / np.sqrt(sign_draws))
    bound = 2.0 * budget * np.sqrt(2.0 * np.log(2.0 * D) / n)
    report = BoundReport(
        name="rademacher", lhs=estimate, rhs=bound,
        inputs={"Q": budget, "n": n, "D": D, "sign_draws": sign_draws,
                "ci95": ci},
        holds=_verdict(estimate, bound, slack))
    return estimate, float(bound), report


# ---------------------------------------------------------------------------
# Posterior generalization bound:
#   |L - L_hat| <= 4 rho (||f||_P + 1) sqrt(2 log(2d)/n)
#                + B_l sqrt(2 log(2 c (||f||_P + 1)^2 / delta) / n),  c = pi^2/6
# ---------------------------------------------------------------------------

def generalization_gap_check(net_eval, pn, train, fresh, loss_bound, rho,
                             delta, slack=1e-12):
    """Measured train/population loss gap versus the path-norm bound.

    net_eval maps inputs to predictions; the fresh set stands in for the
    population.  pn is the net's path norm.
    """
    X_tr, y_tr = train
    X_fr, y_fr = fresh
    X_tr = np.atleast_2d(X_tr)
    n, d = X_tr.shape
    l_tr = float(np.mean((net_eval(X_tr) - y_tr) ** 2))
    l_fr = float(np.mean((net_eval(np.atleast_2d(X_fr)) - y_fr) ** 2))
    gap = abs(l_tr - l_fr)
    c = math.pi ** 2 / 6.0
    rhs = (4.0 * rho * (pn + 1.0) * math.sqrt(2.0 * math.log(2.0 * d) / n)
           + loss_bound * math.sqrt(
               2.0 * math.log(2.0 * c * (pn + 1.0) ** 2 / delta) / n))
    return BoundReport(
        name="generalization_gap", lhs=gap, rhs=rhs,
        inputs={"path_norm": pn, "n": n, "d": d, "rho": rho,
                "loss_bound": loss_bound, "delta": delta,
                "train_loss": l_tr, "fresh_loss": l_fr},
        holds=_verdict(gap, rhs, slack))


# ---------------------------------------------------------------------------
# Lipschitz L2 / sup-norm lower bound:
#   ||f||_2^2 >= ||f||_inf^{d+2} pi^{d/2} / (3 L^d d^2 Gamma(d/2 + 1))
# ---------------------------------------------------------------------------

def lipschitz_l2_linf_check(values, nodes, lipschitz, dim, slack=None):
    """Grid-quadrature check of the L2 lower bound for Lipschitz functions.

    Requires the (grid) maximizer of |f| to be at distance >= ||f||_inf / L
    from the boundary of the unit box; otherwise the full-ball argument does
    not apply and the verdict is not-applicable.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    nodes = np.atleast_2d(nodes)
    if lipschitz <= 0:
        raise ConfigurationError("Lipschitz constant must be positive")
    f_inf = float(np.max(np.abs(values)))
    l2_sq = float(np.mean(values ** 2))  # unit-volume box quadrature
    rhs = (f_inf ** (dim + 2) * math.pi ** (dim / 2.0)
           / (3.0 * lipschitz ** dim * dim ** 2 * math.gamma(dim / 2.0 + 1.0)))
    inputs = {"L": lipschitz, "d": dim, "f_inf": f_inf}
    if f_inf > 0:
        x_star = nodes[int(np.argmax(np.abs(values)))]
        dist_to_boundary = float(np.minimum(x_star, 1.0 - x_star).min())
        inputs["boundary_distance"] = dist_to_boundary
        if dist_to_boundary < f_inf / lipschitz:
            return BoundReport(name="lipschitz_l2_linf", lhs=rhs, rhs=l2_sq,
                               inputs=inputs, holds=None,
                               note="maximizer too close to the boundary")
    if slack is None:
        # Midpoint quadrature error allowance for Lipschitz integrands.
        resolution = round(len(values) ** (1.0 / dim))
        slack = 4.0 * f_inf * lipschitz / resolution
    # The inequality lower-bounds the L2 mass: lhs is the bound, rhs the
    # measured mass.
    return BoundReport(name="lipschitz_l2_linf", lhs=rhs, rhs=l2_sq,
                       inputs=inputs, holds=bool(l2_sq >= rhs - slack))


# ---------------------------------------------------------------------------
# Aggregation for CLI bound suites
# ---------------------------------------------------------------------------

def summarize_reports(reports):
    """Per-bound hold rate and worst margin over a batch of reports."""
    summary = {}
    for rep in reports:
        entry = summary.setdefault(rep.name, {"checked": 0, "held": 0,
                                               "not_applicable": 0,
                                               "worst_margin": math.inf})
        if rep.holds is None:
            entry["not_applicable"] += 1
            continue
        entry["checked"] += 1
        entry["held"] += int(bool(rep.holds))
        if math.isfinite(rep.margin):
            entry["worst_margin"] = min(entry["worst_margin"], rep.margin)
    rows = []
    for name in sorted(summary):
        e = summary[name]
        rate = e["held"] / e["checked"] if e["checked"] else float("nan")
        worst = e["worst_margin"] if math.isfinite(e["worst_margin"]) else float("nan")
        rows.append({"name": name, "checked": e["checked"],
                     "hold_rate": rate, "worst_margin": worst,
                     "not_applicable": e["not_applicable"]})
    return rows
