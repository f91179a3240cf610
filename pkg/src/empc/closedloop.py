"""Disturbed closed-loop simulation, average performance, Monte Carlo studies.

The loop applies the receding-horizon control law with the shifted warm
start at every step.  Average performance J_T is the running mean of the
economic stage cost; the optimized stage cost (with regularization and
penalty) is recorded alongside so formulations can be compared on the same
economic metric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dynamics import step
from .exceptions import InfeasibleError, InputError
from .ocp import control_law


@dataclass
class ClosedLoopTrace:
    states: np.ndarray        # (T+1, n)
    inputs: np.ndarray        # (T, m)
    disturbances: np.ndarray  # (T, q)
    stage_costs: np.ndarray   # (T,) optimized stage cost
    econ_costs: np.ndarray    # (T,) economic metric
    running_average: np.ndarray  # (T,) J_t over the economic metric
    values: np.ndarray        # (T,) optimal values along the run
    statuses: list
    feasible: bool = True
    sample_time: float = 1.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.states.shape[0]


def run_closed_loop(problem, x0, w_seq):
    """Simulate x+ = f(x, kappa(x), w) for the given disturbance sequence.

    Stops early with a flagged partial trace if any step reports
    infeasibility; raises only when the initial state itself is infeasible.
    """
    model = problem.model
    x0 = np.asarray(x0, dtype=float).reshape(model.n)
    w_seq = np.asarray(w_seq, dtype=float).reshape(-1, model.q)
    T = w_seq.shape[0]

    states = np.empty((T + 1, model.n))
    inputs = np.empty((T, model.m))
    stage_costs = np.empty(T)
    econ_costs = np.empty(T)
    values = np.empty(T)
    statuses = []
    states[0] = x0
    previous = None
    feasible = True
    steps_done = 0
    for k in range(T):
        u, solution = control_law(problem, states[k], previous)
        if solution.status == "infeasible":
            if k == 0:
                raise InfeasibleError(f"initial state {x0.tolist()} is infeasible")
            feasible = False
            break
        inputs[k] = u
        stage_costs[k] = float(problem.cost.stage(states[k], u))
        econ_costs[k] = float(problem.cost.econ_value(states[k], u))
        values[k] = solution.value
        statuses.append(solution.status)
        states[k + 1] = step(model, states[k], u, w_seq[k])
        previous = solution
        steps_done = k + 1

    T_done = steps_done
    running = (np.cumsum(econ_costs[:T_done]) / np.arange(1, T_done + 1)) if T_done else np.empty(0)
    return ClosedLoopTrace(
        states=states[: T_done + 1],
        inputs=inputs[:T_done],
        disturbances=w_seq[:T_done],
        stage_costs=stage_costs[:T_done],
        econ_costs=econ_costs[:T_done],
        running_average=running,
        values=values[:T_done],
        statuses=statuses,
        feasible=feasible,
        sample_time=model.sample_time,
    )


def performance(trace, T, metric="econ"):
    """Running average at time T; `metric` selects the economic term or the
    optimized stage cost.  Cross-formulation comparisons use the economic
    metric."""
    n_steps = trace.inputs.shape[0]
    if not 1 <= T <= n_steps:
        raise InputError(f"T must be in [1, {n_steps}], got {T}")
    if metric == "econ":
        return float(trace.running_average[T - 1])
    if metric == "stage":
        return float(np.mean(trace.stage_costs[:T]))
    raise InputError(f"unknown metric {metric!r}")


@dataclass
class MonteCarloSummary:
    n_runs: int
    seed: int
    scale: float
    run_indices: list
    j_values: np.ndarray      # final J_T per run (nan when infeasible)
    run_feasible: np.ndarray  # bool per run
    mean_j: float
    min_j: float
    max_j: float
    std_j: float
    infeasible_count: int
    traces: list = field(default_factory=list)


def disturbance_sequence(model, T, seed, run_index, scale=1.0):
    """Per-run i.i.d. uniform disturbances from an independent substream.

    The stream is derived from (seed, run_index), so results do not depend
    on execution order or batching.
    """
    rng = np.random.default_rng([int(seed), int(run_index)])
    lo = scale * model.disturbance_box[:, 0]
    hi = scale * model.disturbance_box[:, 1]
    return rng.uniform(lo, hi, size=(T, model.q)) if model.q else np.zeros((T, 0))


def monte_carlo(problem, x0, T, n_runs, seed, scale=1.0, run_indices=None, keep_traces=True):
    """Closed-loop runs over independent disturbance realizations."""
    if n_runs < 1:
        raise InputError("n_runs must be >= 1")
    indices = list(range(n_runs)) if run_indices is None else list(run_indices)
    j_values = np.full(len(indices), np.nan)
    run_feasible = np.zeros(len(indices), dtype=bool)
    traces = []
    for pos, r in enumerate(indices):
        w_seq = disturbance_sequence(problem.model, T, seed, r, scale=scale)
        try:
            trace = run_closed_loop(problem, x0, w_seq)
        except InfeasibleError:
            trace = None
        if trace is not None and trace.feasible and trace.inputs.shape[0] == T:
            j_values[pos] = performance(trace, T)
            run_feasible[pos] = True
        if keep_traces:
            traces.append(trace)
    feasible_j = j_values[run_feasible]
    return MonteCarloSummary(
        n_runs=len(indices),
        seed=seed,
        scale=scale,
        run_indices=indices,
        j_values=j_values,
        run_feasible=run_feasible,
        mean_j=float(np.mean(feasible_j)) if feasible_j.size else float("nan"),
        min_j=float(np.min(feasible_j)) if feasible_j.size else float("nan"),
        max_j=float(np.max(feasible_j)) if feasible_j.size else float("nan"),
        std_j=float(np.std(feasible_j, ddof=1)) if feasible_j.size > 1 else 0.0,
        infeasible_count=int(np.count_nonzero(~run_feasible)),
        traces=traces,
    )


def merge_summaries(parts):
    """Order-independent merge of Monte Carlo batches (same seed and scale)."""
    parts = sorted(parts, key=lambda s: min(s.run_indices))
    order = np.argsort(np.concatenate([s.run_indices for s in parts]))
    indices = np.concatenate([s.run_indices for s in parts])[order]
    j_values = np.concatenate([s.j_values for s in parts])[order]
    feasible = np.concatenate([s.run_feasible for s in parts])[order]
    traces = [t for s in parts for t in (s.traces or [None] * s.n_runs)]
    traces = [traces[i] for i in order] if all(s.traces for s in parts) else []
    feasible_j = j_values[feasible]
    return MonteCarloSummary(
        n_runs=len(indices),
        seed=parts[0].seed,
        scale=parts[0].scale,
        run_indices=indices.tolist(),
        j_values=j_values,
        run_feasible=feasible,
        mean_j=float(np.mean(feasible_j)) if feasible_j.size else float("nan"),
        min_j=float(np.min(feasible_j)) if feasible_j.size else float("nan"),
        max_j=float(np.max(feasible_j)) if feasible_j.size else float("nan"),
        std_j=float(np.std(feasible_j, ddof=1)) if feasible_j.size > 1 else 0.0,
        infeasible_count=int(np.count_nonzero(~feasible)),
        traces=traces,
    )


def _fmt(value):
    return format(float(value), ".17g")


def write_trace_csv(trace, path, header_lines=()):
    """Trace CSV: k, t, states, inputs, disturbances, costs, J_t, V0, status.

    The final row carries the terminal state only.  Floats use 17
    significant digits so a round trip is exact.
    """
    n = trace.states.shape[1] if trace.states.size else 0
    m = trace.inputs.shape[1] if trace.inputs.size else 0
    q = trace.disturbances.shape[1] if trace.disturbances.size else 0
    columns = (
        ["k", "t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"u{j + 1}" for j in range(m)]
        + [f"w{j + 1}" for j in range(q)]
        + ["stage_cost", "econ_cost", "J_t", "V0", "status"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        T = trace.inputs.shape[0]
        for k in range(trace.states.shape[0]):
            row = [k, _fmt(k * trace.sample_time)]
            row += [_fmt(v) for v in trace.states[k]]
            if k < T:
                row += [_fmt(v) for v in trace.inputs[k]]
                row += [_fmt(v) for v in trace.disturbances[k]]
                row += [_fmt(trace.stage_costs[k]), _fmt(trace.econ_costs[k]),
                        _fmt(trace.running_average[k]), _fmt(trace.values[k]),
                        trace.statuses[k]]
            else:
                row += [""] * (m + q + 5)
            writer.writerow(row)


def write_summary_csv(summary, path, header_lines=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["run", "seed", "J_T", "feasible"])
        for pos, r in enumerate(summary.run_indices):
            j = summary.j_values[pos]
            writer.writerow([r, summary.seed, "" if np.isnan(j) else _fmt(j),
                             int(summary.run_feasible[pos])])
