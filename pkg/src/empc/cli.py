"""Command-line front end: synth | verify | simulate | montecarlo.

Every command is deterministic given (config, seed); all CSV and JSON
outputs carry the configuration hash in a header comment.  Exit codes:
0 success/verified, 2 validation error, 3 synthesis or verification
failure, 4 runtime infeasibility.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import closedloop, config as config_mod, terminal
from .exceptions import (
    CertificateError,
    ConfigError,
    EmpcError,
    InfeasibleError,
    SynthesisError,
)
from .ocp import OcpProblem


def _out_dir(args, cfg):
    if getattr(args, "out", None):
        path = Path(args.out)
    elif cfg["output"]["directory"]:
        path = Path(cfg["output"]["directory"])
    elif os.environ.get("EMPC_OUT_DIR"):
        path = Path(os.environ["EMPC_OUT_DIR"])
    else:
        path = Path.cwd()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _study_name(config_path):
    return Path(config_path).stem


def _build_problem(cfg, ingredients, horizon=None):
    model, _ = config_mod.build_model(cfg)
    cost = config_mod.build_cost(cfg, model)
    return OcpProblem(
        model=model,
        cost=cost,
        ingredients=ingredients,
        horizon=horizon or cfg["ocp"]["horizon"],
        kkt_tol=cfg["ocp"]["kkt_tol"],
        constraint_tol=cfg["ocp"]["constraint_tol"],
        max_iterations=cfg["ocp"]["max_iterations"],
    )


def _run_synthesis(cfg, grid=None, seed=None):
    """Synthesis pipeline with stage names for error reporting."""
    grid = grid or cfg["synthesis"]["grid_density"]
    seed = cfg["synthesis"]["seed"] if seed is None else seed
    stage = "configuration"
    try:
        model, eq = config_mod.build_model(cfg)
        cost = config_mod.build_cost(cfg, model)
        stage = "gain"
        K = cfg["synthesis"]["K"]
        if K is None:
            from .linalg import solve_dlqr
            A, B, _ = terminal.closed_loop_matrices(model, eq, np.zeros((model.m, model.n)))
            K = solve_dlqr(A, B, np.array(cfg["synthesis"]["lqr"]["Q"]),
                           np.array(cfg["synthesis"]["lqr"]["R"]))
        K = np.asarray(K, dtype=float)
        stage = "lyapunov weight"
        A, B, A_K = terminal.closed_loop_matrices(model, eq, K)
        q_tilde = cfg["synthesis"]["Q_tilde"]
        Q_lyap = None if q_tilde == "identity" else np.array(q_tilde, dtype=float)
        P_lyap = terminal.build_lyap_weight(A_K, Q_lyap)
        stage = "terminal radius"
        tau = terminal.choose_tau(P_lyap, model, cost, K, cfg["synthesis"]["tau_mode"], eq,
                                  density=min(grid, 4096), seed=seed)
        stage = "hessian envelope"
        samples = terminal.terminal_set_samples(P_lyap, tau, model.state_box, eq.x,
                                                max(1000, grid // 10), seed=seed)
        Q_hess = terminal.hessian_envelope(cost, K, eq, samples)
        stage = "cost weights"
        q_vec = terminal.gradient_at_equilibrium(cost, K, eq)
        P_cost, p_cost = terminal.build_cost_weights(A_K, Q_hess, q_vec)
        base = terminal.TerminalIngredients(
            K=K.reshape(model.m, model.n), P_lyap=P_lyap, tau=tau, Q_hess=Q_hess,
            P_cost=P_cost, p_cost=p_cost, mu=0.0, x_eq=eq.x, u_eq=eq.u,
        )
        stage = "mu selection and verification"
        ingredients, report = terminal.select_mu(
            model, cost, base, schedule=cfg["synthesis"]["mu_schedule"],
            grid_density=grid, seed=seed,
        )
        stage = "robustness margin"
        delta = terminal.estimate_delta(model, ingredients, cfg["ocp"]["horizon"], seed=seed)
    except EmpcError as err:
        raise SynthesisError(f"stage '{stage}': {err}") from err
    return ingredients, report, delta


def _certificate_path(out_dir, study):
    return out_dir / f"{study}_certificate.json"


def _ensure_certificate(cfg, out_dir, study, grid=None, seed=None):
    path = _certificate_path(out_dir, study)
    digest = config_mod.config_sha256(cfg)
    if path.is_file():
        ingredients, report, delta, payload = terminal.load_certificate(path)
        if payload.get("meta", {}).get("config_sha256") == digest:
            return ingredients, report, delta
        print(f"certificate {path} does not match the configuration; re-synthesizing",
              file=sys.stderr)
    ingredients, report, delta = _run_synthesis(cfg, grid=grid, seed=seed)
    terminal.save_certificate(
        path, ingredients, report, delta=delta, config=cfg,
        meta={"config_sha256": digest,
              "grid_density": grid or cfg["synthesis"]["grid_density"],
              "seed": cfg["synthesis"]["seed"] if seed is None else seed},
    )
    return ingredients, report, delta


def cmd_synth(args):
    cfg = config_mod.load_config(args.config)
    out_dir = _out_dir(args, cfg)
    study = _study_name(args.config)
    ingredients, report, delta = _run_synthesis(cfg, grid=args.grid, seed=args.seed)
    path = _certificate_path(out_dir, study)
    terminal.save_certificate(
        path, ingredients, report, delta=delta, config=cfg,
        meta={"config_sha256": config_mod.config_sha256(cfg),
              "grid_density": args.grid or cfg["synthesis"]["grid_density"],
              "seed": cfg["synthesis"]["seed"] if args.seed is None else args.seed},
    )
    print(f"certificate written to {path}")
    print(f"mu={ingredients.mu}  tau={ingredients.tau:.6g}  passed={report.passed}")
    print(f"margins: vs={report.worst_vs_decrease_margin:.3e} "
          f"vf={report.worst_vf_margin:.3e} adm={report.worst_admissibility_margin:.3e} "
          f"invariance_violations={report.invariance_violations}")
    print(f"delta={delta.delta:.6g}")
    return 0 if report.passed else 3


def cmd_verify(args):
    ingredients, _, _, payload = terminal.load_certificate(args.certificate)
    cfg = payload.get("config")
    if cfg is None:
        raise CertificateError(f"{args.certificate}: certificate carries no configuration")
    cfg = config_mod.normalize(cfg)
    model, _ = config_mod.build_model(cfg)
    cost = config_mod.build_cost(cfg, model)
    grid = args.grid or payload.get("meta", {}).get("grid_density", 10_000)
    if grid < 100:
        print(f"warning: grid density {grid} is too small for confidence", file=sys.stderr)
    report = terminal.verify_terminal(model, cost, ingredients, grid,
                                      seed=args.seed if args.seed is not None else 0)
    print(f"grid_points={report.grid_points}")
    print(f"worst_vs_decrease_margin={report.worst_vs_decrease_margin:.6e}")
    print(f"worst_vf_margin={report.worst_vf_margin:.6e}")
    print(f"worst_admissibility_margin={report.worst_admissibility_margin:.6e}")
    print(f"invariance_violations={report.invariance_violations}")
    print(f"passed={report.passed}")
    return 0 if report.passed else 3


def cmd_simulate(args):
    cfg = config_mod.load_config(args.config)
    out_dir = _out_dir(args, cfg)
    study = _study_name(args.config)
    ingredients, _, _ = _ensure_certificate(cfg, out_dir, study)
    problem = _build_problem(cfg, ingredients, horizon=args.horizon)
    sim = cfg["simulation"]
    seed = sim["seed"] if args.seed is None else args.seed
    scale = 0.0 if args.nominal else args.amplitude
    if scale < 0:
        raise ConfigError("--amplitude must be nonnegative")
    T = sim["steps"]
    w_seq = closedloop.disturbance_sequence(problem.model, T, seed, 0, scale=scale)
    trace = closedloop.run_closed_loop(problem, np.array(sim["x0"]), w_seq)
    digest = config_mod.config_sha256(cfg)
    path = out_dir / f"{study}_trace.csv"
    closedloop.write_trace_csv(
        trace, path,
        header_lines=[f"config_sha256={digest}", f"seed={seed}", f"amplitude_scale={scale!r}"],
    )
    j_final = closedloop.performance(trace, trace.inputs.shape[0]) if trace.inputs.size else float("nan")
    print(f"trace written to {path}")
    print(f"J_T={j_final:.6f}  feasible={trace.feasible}")
    if not trace.feasible:
        return 4
    return 0


def _mc_worker(cfg, ing_dict, indices, T, seed, scale, x0, horizon):
    ingredients = terminal.TerminalIngredients.from_dict(ing_dict)
    problem = _build_problem(cfg, ingredients, horizon=horizon)
    return closedloop.monte_carlo(problem, np.array(x0), T, len(indices), seed,
                                  scale=scale, run_indices=indices)


def cmd_montecarlo(args):
    cfg = config_mod.load_config(args.config)
    out_dir = _out_dir(args, cfg)
    study = _study_name(args.config)
    ingredients, _, _ = _ensure_certificate(cfg, out_dir, study)
    sim = cfg["simulation"]
    seed = sim["seed"] if args.seed is None else args.seed
    n_runs = args.runs or sim["n_runs"]
    scale = sim["amplitude_scale"] if args.amplitude is None else args.amplitude
    if scale < 0:
        raise ConfigError("--amplitude must be nonnegative")
    T = sim["steps"]
    digest = config_mod.config_sha256(cfg)
    ing_dict = ingredients.to_dict()

    indices = list(range(n_runs))
    if args.jobs > 1:
        chunks = [indices[i::args.jobs] for i in range(args.jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            parts = list(pool.map(
                _mc_worker,
                *zip(*[(cfg, ing_dict, c, T, seed, scale, sim["x0"], args.horizon)
                       for c in chunks]),
            ))
        summary = closedloop.merge_summaries(parts)
    else:
        summary = _mc_worker(cfg, ing_dict, indices, T, seed, scale, sim["x0"],
                             args.horizon)

    header = [f"config_sha256={digest}", f"seed={seed}", f"amplitude_scale={scale!r}"]
    for pos, r in enumerate(summary.run_indices):
        trace = summary.traces[pos] if summary.traces else None
        if trace is not None:
            closedloop.write_trace_csv(trace, out_dir / f"{study}_{r:03d}.csv",
                                       header_lines=header + [f"run={r}"])
    summary_path = out_dir / f"{study}_summary.csv"
    closedloop.write_summary_csv(summary, summary_path, header_lines=header)
    print(f"summary written to {summary_path}")
    print(f"mean_J_T={summary.mean_j:.6f}  infeasible_count={summary.infeasible_count}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="empc",
        description="Economic MPC terminal-ingredient synthesis, verification, and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize terminal ingredients and verify them")
    p_synth.add_argument("--config", required=True, help="configuration file or bundled name")
    p_synth.add_argument("--out", help="output directory (default: config, $EMPC_OUT_DIR, cwd)")
    p_synth.add_argument("--grid", type=int, help="verification grid density")
    p_synth.add_argument("--seed", type=int, help="override the synthesis seed")
    p_synth.set_defaults(fn=cmd_synth)

    p_verify = sub.add_parser("verify", help="re-verify a certificate")
    p_verify.add_argument("certificate", help="certificate JSON file")
    p_verify.add_argument("--grid", type=int, help="verification grid density")
    p_verify.add_argument("--seed", type=int, help="sampling seed")
    p_verify.set_defaults(fn=cmd_verify)

    p_sim = sub.add_parser("simulate", help="closed-loop simulation, nominal or disturbed")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out")
    group = p_sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--nominal", action="store_true", help="no disturbance")
    group.add_argument("--amplitude", type=float,
                       help="scale factor applied to the disturbance box")
    p_sim.add_argument("--horizon", type=int, help="override the OCP horizon")
    p_sim.add_argument("--seed", type=int, help="override the simulation seed")
    p_sim.set_defaults(fn=cmd_simulate)

    p_mc = sub.add_parser("montecarlo", help="Monte Carlo study over disturbance realizations")
    p_mc.add_argument("--config", required=True)
    p_mc.add_argument("--out")
    p_mc.add_argument("--runs", type=int, help="number of realizations")
    p_mc.add_argument("--amplitude", type=float,
                      help="scale factor applied to the disturbance box")
    p_mc.add_argument("--horizon", type=int, help="override the OCP horizon")
    p_mc.add_argument("--seed", type=int, help="override the simulation seed")
    p_mc.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_mc.set_defaults(fn=cmd_montecarlo)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CertificateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SynthesisError as err:
        print(f"synthesis failed at {err}", file=sys.stderr)
        return 3
    except InfeasibleError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return 4
    except EmpcError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
