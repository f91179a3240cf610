"""Finite-horizon economic optimal control by single shooting.

Decision variables are the N stage inputs.  The input box is handled by a
projected quasi-Newton method (L-BFGS-B), the single quadratic terminal
inequality by an augmented Lagrangian outer loop with one scalar
multiplier, and gradients come from an adjoint sweep through the exact
Jacobians of the RK4 discrete map.  The solver is deterministic from its
warm start; no global-optimality claim is made.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .dynamics import step, step_with_jacobian
from .exceptions import InputError


@dataclass(frozen=True)
class OcpProblem:
    model: object
    cost: object
    ingredients: object
    horizon: int
    kkt_tol: float = 1e-6
    constraint_tol: float = 1e-8
    max_iterations: int = 200
    max_outer: int = 8
    penalty0: float = 10.0
    penalty_growth: float = 10.0

    def __post_init__(self):
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        if min(self.kkt_tol, self.constraint_tol, self.penalty0) <= 0:
            raise InputError("tolerances and penalties must be positive")


@dataclass
class OcpSolution:
    u_seq: np.ndarray          # (N, m)
    x_pred: np.ndarray         # (N+1, n) nominal predictions
    value: float               # V(x, u_seq)
    kkt_residual: float
    terminal_slack: float      # tau - lyap_value(x_pred[N])
    status: str                # optimal | max_iter | infeasible
    multiplier: float = 0.0
    outer_rounds: int = 0
    warm_clip_distance: float = 0.0


def _rollout(problem, x, u_seq):
    model = problem.model
    xs = np.empty((problem.horizon + 1, model.n))
    xs[0] = x
    for k in range(problem.horizon):
        xs[k + 1] = step(model, xs[k], u_seq[k])
    return xs


def total_cost(problem, x, u_seq):
    """Cost of one open-loop rollout: stage sum plus terminal cost."""
    u_seq = np.asarray(u_seq, dtype=float).reshape(problem.horizon, problem.model.m)
    xs = _rollout(problem, x, u_seq)
    value = 0.0
    for k in range(problem.horizon):
        value += float(problem.cost.stage(xs[k], u_seq[k]))
    return value + float(problem.ingredients.terminal_cost(xs[-1]))


def _adjoint(problem, x, u_flat, penalty_of_c):
    """Forward rollout plus one backward sweep.

    ``penalty_of_c(c)`` maps the terminal constraint value to the pair
    (penalty value, penalty slope); the slope multiplies the constraint
    gradient in the costate.  Returns (F, grad, V, c).
    """
    model, cost, ing = problem.model, problem.cost, problem.ingredients
    N, n, m = problem.horizon, model.n, model.m
    u_seq = u_flat.reshape(N, m)

    xs = np.empty((N + 1, n))
    xs[0] = x
    A_ks = np.empty((N, n, n))
    B_ks = np.empty((N, n, m))
    stage_gx = np.empty((N, n))
    stage_gu = np.empty((N, m))
    V = 0.0
    for k in range(N):
        xs[k + 1], A_ks[k], B_ks[k] = step_with_jacobian(model, xs[k], u_seq[k])
        V += float(cost.stage(xs[k], u_seq[k]))
        gx, gu = cost.stage_grad(xs[k], u_seq[k])
        stage_gx[k] = gx
        stage_gu[k] = gu
    V += float(ing.terminal_cost(xs[-1]))
    c = float(ing.lyap_value(xs[-1]) - ing.tau)
    penalty, slope = penalty_of_c(c)
    F = V + penalty

    lam = ing.terminal_cost_grad(xs[-1]) + slope * ing.lyap_grad(xs[-1])
    grad = np.empty((N, m))
    for k in range(N - 1, -1, -1):
        grad[k] = stage_gu[k] + B_ks[k].T @ lam
        lam = stage_gx[k] + A_ks[k].T @ lam
    return F, grad.ravel(), V, c


def _objective(problem, x, u_flat, mult, rho):
    """Augmented Lagrangian (one scalar multiplier, quadratic penalty)."""

    def penalty_of_c(c):
        activation = max(0.0, mult + rho * c)
        return (activation * activation - mult * mult) / (2.0 * rho), activation

    return _adjoint(problem, x, u_flat, penalty_of_c)


def _lagrangian_grad(problem, x, u_flat, nu):
    """Gradient of V + nu * constraint (for the KKT residual)."""
    _, grad, _, _ = _adjoint(problem, x, u_flat, lambda c: (nu * c, nu))
    return grad


def _projected_residual(u_flat, grad, lo, hi):
    return float(np.max(np.abs(u_flat - np.clip(u_flat - grad, lo, hi))))


def solve(problem, x, warm_start=None):
    """Minimize the finite-horizon cost subject to input box and terminal set.

    Guarantees: the returned value never exceeds the cost of a feasible warm
    start by more than 1e-8, and repeated calls with identical arguments
    return identical results.
    """
    model = problem.model
    x = np.asarray(x, dtype=float).reshape(model.n)
    if not np.all(np.isfinite(x)):
        raise InputError("state must be finite")
    N, m = problem.horizon, model.m
    lo = np.tile(model.input_box[:, 0], N)
    hi = np.tile(model.input_box[:, 1], N)
    if warm_start is None:
        u_flat = np.tile(problem.ingredients.u_eq, N).astype(float)
    else:
        u_flat = np.asarray(warm_start, dtype=float).reshape(N * m).copy()
    u_flat = np.clip(u_flat, lo, hi)
    bounds = list(zip(lo, hi))

    mult = 0.0
    rho = problem.penalty0
    # seed the best-feasible tracker with the warm start so the returned
    # value can never exceed a feasible warm start's cost
    _, _, V_warm, c_warm = _objective(problem, x, u_flat, 0.0, problem.penalty0)
    best_feasible = (V_warm, u_flat.copy()) if c_warm <= problem.constraint_tol else None
    u_cur = u_flat
    V_cur, c_cur = V_warm, c_warm
    rounds = 0
    for outer in range(problem.max_outer):
        rounds = outer + 1
        res = minimize(
            lambda u: _objective(problem, x, u, mult, rho)[:2],
            u_cur,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": problem.max_iterations,
                "maxcor": 20,
                "ftol": 1e-16,
                "gtol": 0.1 * problem.kkt_tol,
            },
        )
        u_cur = np.clip(res.x, lo, hi)
        _, _, V_cur, c_cur = _objective(problem, x, u_cur, mult, rho)
        if c_cur <= problem.constraint_tol:
            if best_feasible is None or V_cur < best_feasible[0]:
                best_feasible = (V_cur, u_cur.copy())
            nu = max(0.0, mult + rho * c_cur)
            kkt = _projected_residual(u_cur, _lagrangian_grad(problem, x, u_cur, nu), lo, hi)
            if kkt <= problem.kkt_tol:
                mult = nu
                break
        mult = max(0.0, mult + rho * c_cur)
        rho *= problem.penalty_growth

    if best_feasible is not None and (c_cur > problem.constraint_tol
                                      or best_feasible[0] < V_cur):
        V_cur, u_cur = best_feasible

    u_seq = u_cur.reshape(N, m)
    x_pred = _rollout(problem, x, u_seq)
    value = V_cur
    slack = float(problem.ingredients.tau - problem.ingredients.lyap_value(x_pred[-1]))
    feasible = slack >= -problem.constraint_tol
    nu = mult if slack <= problem.constraint_tol else 0.0
    kkt = _projected_residual(u_cur, _lagrangian_grad(problem, x, u_cur, nu), lo, hi)
    if not feasible:
        status = "infeasible"
    elif kkt <= problem.kkt_tol:
        status = "optimal"
    else:
        status = "max_iter"
    return OcpSolution(
        u_seq=u_seq,
        x_pred=x_pred,
        value=value,
        kkt_residual=kkt,
        terminal_slack=slack,
        status=status,
        multiplier=nu,
        outer_rounds=rounds,
    )


def candidate_shift(problem, previous):
    """Shifted previous solution with the terminal law appended.

    The appended input is clipped to the input box; the clip distance is
    zero in verified regimes (see control_law, which records it).
    """
    if previous.status == "infeasible":
        raise InputError("cannot shift an infeasible solution")
    u_seq, _ = _shift_with_distance(problem, previous)
    return u_seq


def _shift_with_distance(problem, previous):
    model = problem.model
    raw = problem.ingredients.terminal_law(previous.x_pred[-1]).reshape(model.m)
    clipped = np.clip(raw, model.input_box[:, 0], model.input_box[:, 1])
    u_seq = np.vstack([previous.u_seq[1:], clipped[None, :]])
    return u_seq, float(np.linalg.norm(raw - clipped))


def control_law(problem, x, previous=None):
    """First input of the optimal trajectory, warm-started by the shift."""
    clip_distance = 0.0
    if previous is not None and previous.status != "infeasible":
        warm, clip_distance = _shift_with_distance(problem, previous)
    else:
        warm = np.tile(problem.ingredients.u_eq, (problem.horizon, 1))
    solution = solve(problem, x, warm_start=warm)
    solution.warm_clip_distance = clip_distance
    return solution.u_seq[0].copy(), solution
