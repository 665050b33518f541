"""Batch experiment front-end.

Subcommands:
  gen-game  -- construct a game from the config and write its JSON document
  solve     -- discretize a game and solve it by value iteration
  run       -- run fitted Q-iteration, oracle diagnostics, and bound checks
  bounds    -- run the configured bound suites and write a summary

Exit codes: 0 success, 2 configuration error, 3 missing artifact,
4 numerical divergence.
"""

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from . import figures
from .config import build_game, load_config
from .errors import ConfigurationError, DivergenceError, MissingArtifactError
from .fqi import FqiConfig, run_mafqi
from .games import KIND_REVERSE_ENGINEERED, game_to_dict
from .grids import midpoint_grid
from .networks import (DecomposedQ, FitConfig, fit_least_squares, path_norm,
                       save_decomposed)
from .bounds import (BoundReport, check_cumulative_recursion, check_policy_gap,
                     empirical_rademacher, error_propagation_report,
                     generalization_gap_check, lipschitz_l2_linf_check,
                     sample_path_norm_net, summarize_reports)
from .reporting import (sha256_file, write_bounds_jsonl,
                        write_bounds_summary_csv, write_manifest)
from .tabular import (bellman_apply, discretize, greedy_policy, policy_eval,
                      save_qtable, save_qtable_csv, value_iteration)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DIVERGENCE = 4


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_game(cfg, seed, out_dir):
    game = build_game(cfg.get("game", {}), seed)
    doc = game_to_dict(game)
    provenance = dict(doc.get("provenance", {}))
    provenance.update({"seed": seed, "construction_checks_passed": True})
    if game.spec.kind == KIND_REVERSE_ENGINEERED:
        res = min(int(cfg.get("oracle", {}).get("resolution", 8)), 16)
        tg = discretize(game, res)
        qs = value_iteration(tg, 1e-10)
        tq = bellman_apply(qs, tg)
        provenance["bellman_audit_residual"] = float(np.max(np.abs(tq - qs)))
        provenance["bellman_audit_resolution"] = res
    doc["provenance"] = provenance
    path = os.path.join(out_dir, "game.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _solve_oracle(game, cfg):
    oracle_cfg = cfg.get("oracle", {})
    if "resolution" not in oracle_cfg:
        return None, None
    tg = discretize(game, int(oracle_cfg["resolution"]))
    qstar = value_iteration(tg, float(oracle_cfg.get("tol", 1e-9)))
    return tg, qstar


def cmd_solve(cfg, seed, out_dir):
    game = build_game(cfg.get("game", {}), seed)
    if "resolution" not in cfg.get("oracle", {}):
        raise ConfigurationError("oracle.resolution is required for solve")
    tg, qstar = _solve_oracle(game, cfg)
    save_qtable(os.path.join(out_dir, "qstar.bin"), qstar)
    if qstar.size <= 1 << 16:
        save_qtable_csv(os.path.join(out_dir, "qstar.csv"), qstar)
    residual = float(np.max(np.abs(bellman_apply(qstar, tg) - qstar)))
    summary = {
        "resolution": tg.resolution,
        "n_nodes": tg.n_nodes,
        "n_actions": tg.n_actions,
        "bellman_residual": residual,
        "q_min": float(qstar.min()),
        "q_max_value": float(qstar.max()),
        "transition_row_sum_error": tg.transition.row_sum_error(),
    }
    with open(os.path.join(out_dir, "solve.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fqi_config(cfg, seed):
    f = cfg.get("fqi", {})
    fit = FitConfig(
        epochs=int(f.get("epochs", 60)),
        batch_size=int(f.get("batch_size", 256)),
        lr=float(f.get("lr", 0.05)),
        path_norm_budget=float(f.get("path_norm_budget", 200.0)),
        penalty_weight=float(f.get("penalty_weight", 1e-3)),
        seed=seed,
    )
    return FqiConfig(
        iterations=int(f.get("iterations", 10)),
        samples_per_iter=int(f.get("samples_per_iter", 1024)),
        width=int(f.get("width", 64)),
        fit=fit,
        seed=seed,
        target_clamp=bool(f.get("target_clamp", True)),
        warm_start=bool(f.get("warm_start", True)),
    )


def _run_bound_suites(cfg, tg, qstar, report, spec):
    """Bound checks measured against the just-finished run's oracle grid."""
    names = cfg.get("analysis", {}).get(
        "bounds", ["policy_gap", "cumulative_recursion", "error_propagation"])
    out = []
    if tg is None or not report.records:
        return out
    if "policy_gap" in names:
        for rec in report.records:
            if rec.qtable is not None:
                out.append(check_policy_gap(qstar, rec.qtable, tg))
    if "cumulative_recursion" in names:
        out.append(check_cumulative_recursion(
            report.records[-1].sup_err, report.eps_proj_max(), spec.gamma,
            spec.n_agents, spec.r_max, len(report.records)))
    if "error_propagation" in names:
        phi = cfg.get("analysis", {}).get("phi")
        if phi is None:
            # Diagnostic default; the concentration coefficient is not computed.
            phi = 1.0 / (1.0 - spec.gamma) ** 2
        final = report.records[-1].qtable
        pol = greedy_policy(final, tg)
        q_pi = policy_eval(tg, pol)
        l1 = float(np.mean(np.abs(qstar - q_pi)))
        out.append(error_propagation_report(
            l1, report.eps_max(), spec.gamma, spec.r_max,
            len(report.records), phi))
    return out


def cmd_run(cfg, seed, out_dir):
    stage = "game"
    try:
        game = build_game(cfg.get("game", {}), seed)
        stage = "oracle"
        tg, qstar = _solve_oracle(game, cfg)
        stage = "fqi"
        fcfg = _fqi_config(cfg, seed)
        critic, policy, report = run_mafqi(game, fcfg, tabular=tg,
                                           qstar_table=qstar)
        stage = "report"
        report.to_csv(os.path.join(out_dir, "convergence.csv"),
                      timing=bool(cfg.get("timing", False)))
        if isinstance(critic, DecomposedQ):
            save_decomposed(os.path.join(out_dir, "critic.bin"), critic)
        figures.convergence_figure(report, os.path.join(out_dir, "convergence.png"))
        stage = "analysis"
        reports = _run_bound_suites(cfg, tg, qstar, report, game.spec)
        write_bounds_jsonl(os.path.join(out_dir, "bounds.jsonl"), reports)
        summary = {"seed": seed, "iterations": len(report.records)}
        if report.records and tg is not None:
            final = report.records[-1]
            pol = greedy_policy(final.qtable, tg)
            q_pi = policy_eval(tg, pol)
            summary.update({
                "final_sup_err": final.sup_err,
                "final_l1_mu_err": final.l1_mu_err,
                "final_policy_sup_err": float(np.max(np.abs(qstar - q_pi))),
                "eps_max": report.eps_max(),
                "q_max": tg.q_max,
            })
        with open(os.path.join(out_dir, "run.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except Exception as exc:
        raise type(exc)(f"stage {stage}: {exc}") from exc


# -- self-contained statistical suites for the bounds command ---------------

def _suite_rademacher(cfg, seed):
    opts = cfg.get("analysis", {}).get("rademacher", {})
    budget = float(opts.get("budget", 4.0))
    n = int(opts.get("n", 256))
    dim = int(opts.get("input_dim", 3))
    n_cands = int(opts.get("candidates", 500))
    sign_draws = int(opts.get("sign_draws", 1000))
    width = int(opts.get("net_width", 32))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4AD]))
    nets = [sample_path_norm_net(budget, width, dim, rng) for _ in range(n_cands)]
    X = rng.uniform(-1.0, 1.0, size=(n, dim))
    cands = [lambda Z, net=net: net.raw(Z)[:, 0] for net in nets]
    _, _, report = empirical_rademacher(cands, X, budget, sign_draws, rng)
    return [report]


def _suite_generalization(cfg, seed):
    opts = cfg.get("analysis", {}).get("generalization", {})
    n_seeds = int(opts.get("seeds", 100))
    n_train = int(opts.get("n_train", 512))
    n_fresh = int(opts.get("n_fresh", 8192))
    dim = int(opts.get("input_dim", 2))
    t_width = int(opts.get("teacher_width", 4))
    s_width = int(opts.get("student_width", 32))
    loss_bound = float(opts.get("loss_bound", 4.0))
    rho = float(opts.get("rho", 4.0))
    delta = float(cfg.get("analysis", {}).get("delta", 0.1))
    reports = []
    for s in range(n_seeds):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E4, s]))
        teacher = DecomposedQ.random(1, (1,), t_width, dim, None, rng)
        teacher.nets[0].a *= 8.0
        probe = rng.uniform(-1, 1, size=(2048, dim))
        peak = float(np.max(np.abs(teacher.eval(probe, np.zeros((2048, 1), int)))))
        if peak > 1.0:
            teacher.nets[0].a /= peak
        X_tr = rng.uniform(-1, 1, size=(n_train, dim))
        X_fr = rng.uniform(-1, 1, size=(n_fresh, dim))
        zeros_tr = np.zeros((n_train, 1), dtype=int)
        zeros_fr = np.zeros((n_fresh, 1), dtype=int)
        y_tr = teacher.eval(X_tr, zeros_tr)
        y_fr = teacher.eval(X_fr, zeros_fr)
        template = DecomposedQ.random(1, (1,), s_width, dim, 1.0, rng)
        fit_cfg = FitConfig(epochs=30, batch_size=64, lr=0.05,
                            path_norm_budget=50.0, penalty_weight=1e-3, seed=s)
        student, _ = fit_least_squares((X_tr, zeros_tr, y_tr), fit_cfg, template)
        net = student.nets[0]
        reports.append(generalization_gap_check(
            lambda Z, net=net: net.forward(np.atleast_2d(Z))[:, 0],
            path_norm(net), (X_tr, y_tr), (X_fr, y_fr), loss_bound, rho, delta))
    return reports


def _suite_lipschitz(cfg, seed):
    opts = cfg.get("analysis", {}).get("lipschitz", {})
    n_cases = int(opts.get("cases", 50))
    dims = list(opts.get("dims", [1, 2]))
    reports = []
    for s in range(n_cases):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11F, s]))
        dim = int(dims[s % len(dims)])
        resolution = int(opts.get("resolution", 2048 if dim == 1 else 128))
        nodes = midpoint_grid(resolution, dim)
        lipschitz = float(rng.uniform(0.5, 2.0))
        height = float(rng.uniform(0.05, 0.2))
        # Interior peak: keep the full radius-h/L ball inside the box.
        margin = height / lipschitz + 2.0 / resolution
        center = rng.uniform(margin, 1.0 - margin, size=dim)
        # Snap the peak onto a grid node so the grid sup equals the true sup.
        center = (np.floor(center * resolution) + 0.5) / resolution
        values = np.maximum(
            0.0, height - lipschitz * np.linalg.norm(nodes - center, axis=1))
        reports.append(lipschitz_l2_linf_check(values, nodes, lipschitz, dim))
    return reports


def _load_run_reports(run_dir, wanted):
    path = os.path.join(run_dir, "bounds.jsonl")
    if not os.path.exists(path):
        raise MissingArtifactError(f"bound report file not found: {path}")
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["name"] in wanted:
                out.append(BoundReport(name=doc["name"], lhs=doc["lhs"],
                                       rhs=doc["rhs"], inputs=doc["inputs"],
                                       holds=doc["holds"], note=doc["note"]))
    return out


def cmd_bounds(cfg, seed, out_dir):
    analysis = cfg.get("analysis", {})
    names = analysis.get("bounds", [])
    reports = []
    run_referenced = {n for n in names
                      if n in ("policy_gap", "cumulative_recursion",
                               "error_propagation")}
    if run_referenced:
        run_dir = analysis.get("run_dir")
        if not run_dir:
            raise ConfigurationError(
                "analysis.run_dir is required for run-referenced bounds")
        reports.extend(_load_run_reports(run_dir, run_referenced))
    if "rademacher" in names:
        reports.extend(_suite_rademacher(cfg, seed))
    if "generalization_gap" in names:
        reports.extend(_suite_generalization(cfg, seed))
    if "lipschitz_l2_linf" in names:
        reports.extend(_suite_lipschitz(cfg, seed))
    unknown = [n for n in names if n not in (
        "policy_gap", "cumulative_recursion", "error_propagation",
        "rademacher", "generalization_gap", "lipschitz_l2_linf")]
    if unknown:
        raise ConfigurationError(f"analysis.bounds: unknown bound {unknown[0]!r}")
    write_bounds_jsonl(os.path.join(out_dir, "bounds.jsonl"), reports)
    rows = summarize_reports(reports)
    write_bounds_summary_csv(os.path.join(out_dir, "bounds_summary.csv"), rows)
    figures.bounds_figure(rows, os.path.join(out_dir, "bounds.png"))


_COMMANDS = {
    "gen-game": cmd_gen_game,
    "solve": cmd_solve,
    "run": cmd_run,
    "bounds": cmd_bounds,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _execute(command, config_path, seed, out_dir):
    cfg = load_config(config_path)
    os.makedirs(out_dir, exist_ok=True)
    _COMMANDS[command](cfg, seed, out_dir)
    write_manifest(out_dir, seed, extra={
        "command": command,
        "config_sha256": sha256_file(config_path),
    })


def _worker(args):
    command, config_path, seed, out_dir = args
    _execute(command, config_path, seed, out_dir)
    return seed


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mafqi",
        description="Fitted Q-iteration experiments on cooperative Markov games")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--seed", type=int, default=None,
                        help="experiment seed (overrides MAFQI_SEED and config)")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides MAFQI_OUT and config)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="fan out this many consecutive seeds into "
                             "seed_<s>/ subdirectories")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        seed = args.seed
        if seed is None and os.environ.get("MAFQI_SEED"):
            seed = int(os.environ["MAFQI_SEED"])
        if seed is None:
            seed = int(cfg.get("seed", 0))
        if seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")
        out_dir = args.out or os.environ.get("MAFQI_OUT") or cfg.get("out")
        if not out_dir:
            raise ConfigurationError("no output directory: use --out, "
                                     "MAFQI_OUT, or the 'out' config key")
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")

        if args.jobs == 1:
            _execute(args.command, args.config, seed, out_dir)
        else:
            tasks = [(args.command, args.config, seed + i,
                      os.path.join(out_dir, f"seed_{seed + i}"))
                     for i in range(args.jobs)]
            with concurrent.futures.ProcessPoolExecutor(
                    max_workers=args.jobs) as pool:
                list(pool.map(_worker, tasks))
            os.makedirs(out_dir, exist_ok=True)
            write_manifest(out_dir, seed, extra={
                "command": args.command,
                "config_sha256": sha256_file(args.config),
                "jobs": args.jobs,
            })
        return EXIT_OK
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
