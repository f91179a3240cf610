"""Synthesis and verification of robust terminal costs and constraints.

The terminal set is the sublevel set {x : V_lyap(x) <= tau} of a quadratic
Lyapunov function built from a discrete Lyapunov equation for the linearized
closed loop, and the terminal cost adds an economic correction

    V_term(x) = mu * V_lyap(x) + dev' P dev + p' dev,      dev = x - x_eq

whose weights come from a second Lyapunov solve against the sampled Hessian
envelope of the closed-loop stage cost and a linear solve for the gradient
correction p.  All sufficient conditions are then checked by dense
low-discrepancy sampling with explicit margins; nothing here is a proof,
the verifier is the arbiter.

Conventions for the correction weights: the Hessian envelope Q dominates
the stage-cost curvature, so the quadratic FORM it induces is dev'(Q/2)dev;
P solves the output-side equation A_K P A_K' - P + Q/2 = 0, while the
Lyapunov weight uses the input-side orientation A_K' P A_K - P + Q = 0.
The verifier checks the resulting decrease margins either way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .dynamics import linearize, discretize, step
from .exceptions import CertificateError, InputError, NotSchurAdmissibleError, SynthesisError
from .linalg import cholesky, is_positive_definite, is_schur, solve_dlyap

DEFAULT_MU_SCHEDULE = (0.0, 0.1, 1.0, 10.0, 100.0, 1000.0)


@dataclass
class TerminalIngredients:
    """Everything the OCP needs: gain, Lyapunov weight, radius, cost weights."""

    K: np.ndarray            # (m, n) terminal gain, u = u_eq + K dev
    P_lyap: np.ndarray       # (n, n) PD weight of the sublevel function
    tau: float               # terminal set radius
    Q_hess: np.ndarray       # (n, n) Hessian envelope of the closed-loop stage cost
    P_cost: np.ndarray       # (n, n) quadratic weight of the economic correction
    p_cost: np.ndarray       # (n,) linear weight of the economic correction
    mu: float                # Lyapunov blending weight in the terminal cost
    x_eq: np.ndarray
    u_eq: np.ndarray
    shifted: bool = True     # synthesis operates in deviation coordinates

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.P_lyap = np.asarray(self.P_lyap, dtype=float)
        self.Q_hess = np.asarray(self.Q_hess, dtype=float)
        self.P_cost = np.asarray(self.P_cost, dtype=float)
        self.p_cost = np.asarray(self.p_cost, dtype=float).reshape(-1)
        self.x_eq = np.asarray(self.x_eq, dtype=float).reshape(-1)
        self.u_eq = np.asarray(self.u_eq, dtype=float).reshape(-1)

    def deviation(self, x):
        return np.asarray(x, dtype=float) - self.x_eq

    def lyap_value(self, x):
        dev = self.deviation(x)
        return np.einsum("...i,ij,...j->...", dev, self.P_lyap, dev)

    def lyap_grad(self, x):
        return 2.0 * self.deviation(x) @ self.P_lyap

    def econ_correction(self, x):
        dev = self.deviation(x)
        return np.einsum("...i,ij,...j->...", dev, self.P_cost, dev) + dev @ self.p_cost

    def terminal_cost(self, x):
        return self.mu * self.lyap_value(x) + self.econ_correction(x)

    def terminal_cost_grad(self, x):
        dev = self.deviation(x)
        return 2.0 * dev @ (self.mu * self.P_lyap + self.P_cost) + self.p_cost

    def terminal_law(self, x):
        return self.u_eq + self.deviation(x) @ self.K.T

    def in_terminal_set(self, x, state_box=None, slack=0.0):
        ok = self.lyap_value(x) <= self.tau + slack
        if state_box is not None:
            box = np.asarray(state_box, dtype=float)
            inside = np.all(
                (np.asarray(x) >= box[:, 0] - 1e-9) & (np.asarray(x) <= box[:, 1] + 1e-9),
                axis=-1,
            )
            ok = ok & inside
        return ok

    def to_dict(self):
        return {
            "K": self.K.tolist(),
            "P_lyap": self.P_lyap.tolist(),
            "tau": self.tau,
            "Q_hess": self.Q_hess.tolist(),
            "P_cost": self.P_cost.tolist(),
            "p_cost": self.p_cost.tolist(),
            "mu": self.mu,
            "x_eq": self.x_eq.tolist(),
            "u_eq": self.u_eq.tolist(),
            "shifted": self.shifted,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class VerificationReport:
    """Sampled margins for every clause of the terminal conditions."""

    grid_points: int
    worst_vs_decrease_margin: float
    worst_vf_margin: float
    worst_admissibility_margin: float
    invariance_violations: int
    passed: bool
    c2: float                 # fitted quadratic decrease rate of the Lyapunov value
    grid_density: int = 0     # requested number of points
    seed: int = 0

    def to_dict(self):
        return {
            "grid_points": self.grid_points,
            "worst_vs_decrease_margin": self.worst_vs_decrease_margin,
            "worst_vf_margin": self.worst_vf_margin,
            "worst_admissibility_margin": self.worst_admissibility_margin,
            "invariance_violations": self.invariance_violations,
            "passed": self.passed,
            "c2": self.c2,
            "grid_density": self.grid_density,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class DeltaEstimate:
    """Heuristic disturbance margin from sampled Lipschitz surrogates.

    delta = min{ (tau/2) / (L_s L_f),  (c2/2) (tau/2) / (lam_max L_s L_f) }.
    A lower-bound surrogate built from sampled constants, not a proof.
    """

    L_f: float
    L_s: float
    c2: float
    lam_max: float
    delta: float
    heuristic: bool = True

    def to_dict(self):
        return {
            "L_f": self.L_f,
            "L_s": self.L_s,
            "c2": self.c2,
            "lam_max": self.lam_max,
            "delta": self.delta,
            "heuristic": self.heuristic,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


# ---------------------------------------------------------------------------
# construction


def closed_loop_matrices(model, eq, K):
    """Discrete (A, B, A_K) of the linearization at the equilibrium."""
    A_c, B_c = linearize(model, eq.x, eq.u)
    A, B = discretize(A_c, B_c, model.sample_time)
    K = np.asarray(K, dtype=float).reshape(model.m, model.n)
    return A, B, A + B @ K


def build_lyap_weight(A_K, Q_lyap=None):
    """Positive definite weight from A_K' P A_K - P + Q_lyap = 0."""
    A_K = np.asarray(A_K, dtype=float)
    n = A_K.shape[0]
    Q_lyap = np.eye(n) if Q_lyap is None else np.asarray(Q_lyap, dtype=float)
    if not is_positive_definite(Q_lyap):
        raise InputError("Q_lyap must be positive definite")
    P = solve_dlyap(A_K, Q_lyap)
    if not is_positive_definite(P):
        raise NotSchurAdmissibleError("not Schur-admissible: Lyapunov weight is not PD")
    return P


def choose_tau(P_lyap, model, cost, K, mode, eq, density=4096, seed=0):
    """Radius of the terminal sublevel set.

    mode="cover": the maximum of the sublevel function over the vertices of
    the state box (exact for a convex quadratic), followed by a mandatory
    sampled admissibility pass.  mode="fit": the largest sublevel set
    inscribed in the half-spaces induced by the input box through the gain,
    the linearized soft constraint, and the state box.
    """
    P_lyap = np.asarray(P_lyap, dtype=float)
    K = np.asarray(K, dtype=float).reshape(model.m, model.n)
    if mode == "cover":
        finite = np.all(np.isfinite(model.state_box))
        if not finite:
            raise SynthesisError("cover mode needs a bounded state box; use fit mode")
        corners = np.stack(
            np.meshgrid(*[model.state_box[i] for i in range(model.n)], indexing="ij"),
            axis=-1,
        ).reshape(-1, model.n)
        dev = corners - eq.x
        tau = float(np.max(np.einsum("bi,ij,bj->b", dev, P_lyap, dev)))
        if tau <= 0:
            raise SynthesisError("equilibrium on a constraint boundary: tau <= 0")
        margin = _admissibility_margin(
            P_lyap, tau, model, cost, K, eq, density=density, seed=seed
        )
        if margin < 0:
            raise SynthesisError(
                f"cover-mode admissibility failed (margin {margin:.3e}); use fit mode"
            )
        return tau
    if mode != "fit":
        raise InputError(f"unknown tau mode {mode!r}; expected 'cover' or 'fit'")

    rows = []  # half-spaces c' dev <= d with d > 0 required
    u_lo, u_hi = model.input_box[:, 0], model.input_box[:, 1]
    for j in range(model.m):
        if np.isfinite(u_hi[j]):
            rows.append((K[j], u_hi[j] - eq.u[j]))
        if np.isfinite(u_lo[j]):
            rows.append((-K[j], eq.u[j] - u_lo[j]))
    x_lo, x_hi = model.state_box[:, 0], model.state_box[:, 1]
    for i in range(model.n):
        e = np.zeros(model.n)
        e[i] = 1.0
        if np.isfinite(x_hi[i]):
            rows.append((e, x_hi[i] - eq.x[i]))
        if np.isfinite(x_lo[i]):
            rows.append((-e, eq.x[i] - x_lo[i]))
    if cost.g_value(eq.x, eq.u) is not None:
        g0 = float(cost.g_value(eq.x, eq.u))
        gx, gu = cost.g_grad(eq.x, eq.u)
        c = gx + K.T @ gu
        if np.any(c != 0.0):
            rows.append((np.asarray(c, float), -g0))

    P_inv = np.linalg.inv(P_lyap)
    tau = np.inf
    for c, d in rows:
        denom = float(c @ P_inv @ c)
        if denom <= 0.0:
            continue
        if d <= 0:
            raise SynthesisError("equilibrium on a constraint boundary: tau <= 0")
        tau = min(tau, d * d / denom)
    if not np.isfinite(tau) or tau <= 0:
        raise SynthesisError("no active half-space produced a positive tau")
    return float(tau)


def terminal_set_samples(P_lyap, tau, state_box, x_eq, count, seed=0):
    """Deterministic low-discrepancy samples of the terminal set (deviations).

    Scrambled Halton points in the bounding box of the ellipsoid intersected
    with the state box, rejected against the sublevel condition.
    """
    P_lyap = np.asarray(P_lyap, dtype=float)
    n = P_lyap.shape[0]
    x_eq = np.asarray(x_eq, dtype=float)
    half = np.sqrt(np.maximum(tau * np.diag(np.linalg.inv(P_lyap)), 0.0))
    box = np.asarray(state_box, dtype=float)
    lo = np.maximum(box[:, 0], x_eq - half)
    hi = np.minimum(box[:, 1], x_eq + half)
    if np.any(hi < lo):
        raise SynthesisError("terminal set does not intersect the state box")
    engine = qmc.Halton(d=n, scramble=True, seed=seed)
    chunks = []
    have = 0
    while have < count:
        pts = lo + engine.random(max(count, 1024)) * (hi - lo)
        dev = pts - x_eq
        keep = np.einsum("bi,ij,bj->b", dev, P_lyap, dev) <= tau
        sel = dev[keep]
        chunks.append(sel)
        have += sel.shape[0]
    return np.concatenate(chunks, axis=0)[:count]


def _power_iteration_max_eig(M, iterations=200):
    """Largest (algebraic) eigenvalue of a small symmetric matrix."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    shift = n * np.max(np.abs(M)) + 1.0
    S = M + shift * np.eye(n)
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(iterations):
        w = S @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return -shift
        v = w / nw
        lam = float(v @ S @ v)
    return lam - shift


def gradient_at_equilibrium(cost, K, eq):
    """Gradient q of the closed-loop stage cost deviation at the equilibrium."""
    gx, gu = cost.smooth_grad(eq.x, eq.u)
    K = np.asarray(K, dtype=float)
    return np.asarray(gx, float) + K.T @ np.asarray(gu, float).reshape(-1)


def hessian_envelope(cost, K, eq, samples):
    """Symmetric Q with dev'(Q - H(dev))dev >= 0 over the sampled terminal set.

    H(dev) is the Hessian of the closed-loop stage cost deviation.  Q is the
    mean sampled Hessian plus the largest eigenvalue of the deviations from
    the mean (power iteration) plus a 1e-8 safety margin; when the sampled
    Hessian is constant, Q equals it exactly.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[1]
    S = np.vstack([np.eye(n), K])
    samples = np.asarray(samples, dtype=float).reshape(-1, n)
    if samples.shape[0] < 1:
        raise InputError("need at least one terminal-set sample")
    hessians = np.empty((samples.shape[0], n, n))
    for idx, dev in enumerate(samples):
        x = eq.x + dev
        u = eq.u + K @ dev
        g = cost.g_value(x, u)
        if g is not None and g >= 0.0:
            raise SynthesisError("soft constraint active inside terminal set; shrink tau")
        hessians[idx] = S.T @ cost.smooth_hessian(x, u) @ S
    mean = hessians.mean(axis=0)
    mean = 0.5 * (mean + mean.T)
    deviations = hessians - mean
    spread = np.max(np.abs(deviations))
    if spread <= 1e-12 * (1.0 + np.max(np.abs(mean))):
        return mean
    eta = max(_power_iteration_max_eig(0.5 * (D + D.T)) for D in deviations)
    return mean + (max(eta, 0.0) + 1e-8) * np.eye(n)


def build_cost_weights(A_K, Q_hess, q):
    """Correction weights (P, p) for the terminal cost.

    P solves A_K P A_K' - P + Q_hess/2 = 0 (the quadratic-form matrix is
    half the Hessian envelope) and p solves (I - A_K') p = q.  Both
    residuals are checked to 1e-10.
    """
    A_K = np.asarray(A_K, dtype=float)
    n = A_K.shape[0]
    Q_form = 0.5 * np.asarray(Q_hess, dtype=float)
    P = solve_dlyap(A_K.T, Q_form)  # == A_K P A_K' - P + Q_form = 0
    q = np.asarray(q, dtype=float).reshape(n)
    p = np.linalg.solve(np.eye(n) - A_K.T, q)
    residual = np.max(np.abs((np.eye(n) - A_K.T) @ p - q))
    if residual > 1e-10:
        raise SynthesisError(f"linear correction residual {residual:.3e} exceeds 1e-10")
    return P, p


# ---------------------------------------------------------------------------
# verification


def verify_terminal(model, cost, ingredients, grid_density, seed=0):
    """Check every terminal-condition clause on a sampled grid.

    Clauses: quadratic Lyapunov decrease under the terminal law, positive
    invariance of the terminal set, terminal cost decrease by at least the
    stage cost deviation, and admissibility of the terminal law.  Failures
    are reported in the margins, never raised.
    """
    ing = ingredients
    grid_density = int(grid_density)
    dev = terminal_set_samples(
        ing.P_lyap, ing.tau, model.state_box, ing.x_eq, grid_density, seed=seed
    )
    x = ing.x_eq + dev
    u = ing.u_eq + dev @ ing.K.T
    # margins are judged on the raw terminal law; stepping uses the clipped
    # input so an admissibility violation is reported instead of raised
    u_applied = np.clip(u, model.input_box[:, 0], model.input_box[:, 1])
    xp = step(model, x, u_applied)
    devp = xp - ing.x_eq

    vs = np.einsum("bi,ij,bj->b", dev, ing.P_lyap, dev)
    vsp = np.einsum("bi,ij,bj->b", devp, ing.P_lyap, devp)
    diff = vs - vsp
    nx2 = np.sum(dev * dev, axis=1)
    mask = nx2 >= 1e-12  # |dev| >= 1e-6
    if not np.any(mask):
        c2 = np.nan
        vs_margin = np.nan
    elif (ratios := diff[mask] / nx2[mask]).min() > 0.0:
        c2 = float(np.min(ratios))
        # (ratio - c2) * |dev|^2 evaluates to exactly zero at the argmin
        vs_margin = float(np.min((ratios - c2) * nx2[mask]))
        if np.any(~mask):
            vs_margin = min(vs_margin, float(np.min(diff[~mask] - c2 * nx2[~mask])))
    else:
        # no positive fitted decrease rate: report the raw worst decrease
        c2 = float(np.min(ratios))
        vs_margin = float(np.min(diff))

    vf = ing.mu * vs + np.einsum("bi,ij,bj->b", dev, ing.P_cost, dev) + dev @ ing.p_cost
    vfp = ing.mu * vsp + np.einsum("bi,ij,bj->b", devp, ing.P_cost, devp) + devp @ ing.p_cost
    l_eq = float(cost.stage(ing.x_eq, ing.u_eq))
    vf_margin = float(np.min(vf - (cost.stage(x, u) - l_eq) - vfp))

    adm = _admissibility_values(model, cost, x, u)
    adm_margin = float(np.min(adm))

    outside = (
        (xp < model.state_box[:, 0] - 1e-9) | (xp > model.state_box[:, 1] + 1e-9)
    ).any(axis=1)
    violations = int(np.count_nonzero((vsp > ing.tau) | outside))

    passed = (
        np.isfinite(vs_margin) and vs_margin >= 0.0
        and np.isfinite(c2) and c2 > 0.0
        and vf_margin >= 0.0
        and adm_margin >= 0.0
        and violations == 0
    )
    return VerificationReport(
        grid_points=int(dev.shape[0]),
        worst_vs_decrease_margin=vs_margin,
        worst_vf_margin=vf_margin,
        worst_admissibility_margin=adm_margin,
        invariance_violations=violations,
        passed=bool(passed),
        c2=c2,
        grid_density=grid_density,
        seed=seed,
    )


def _admissibility_values(model, cost, x, u):
    u_lo, u_hi = model.input_box[:, 0], model.input_box[:, 1]
    vals = [np.min(np.minimum(u - u_lo, u_hi - u), axis=-1)]
    g = cost.g_value(x, u)
    if g is not None:
        vals.append(-np.asarray(g, dtype=float))
    return np.minimum.reduce(vals) if len(vals) > 1 else vals[0]


def _admissibility_margin(P_lyap, tau, model, cost, K, eq, density, seed):
    dev = terminal_set_samples(P_lyap, tau, model.state_box, eq.x, density, seed=seed)
    x = eq.x + dev
    u = eq.u + dev @ np.asarray(K, dtype=float).T
    return float(np.min(_admissibility_values(model, cost, x, u)))


def select_mu(model, cost, ingredients, schedule=DEFAULT_MU_SCHEDULE,
              grid_density=10_000, seed=0):
    """Smallest blending weight from the schedule whose verification passes."""
    for mu in schedule:
        candidate = TerminalIngredients(**{**ingredients.to_dict(), "mu": float(mu)})
        report = verify_terminal(model, cost, candidate, grid_density, seed=seed)
        if report.passed:
            return candidate, report
    raise SynthesisError(
        f"no blending weight in schedule {list(schedule)} passes verification; "
        "try a smaller tau"
    )


def synthesize(model, cost, eq, K, Q_lyap=None, tau_mode="cover",
               mu_schedule=DEFAULT_MU_SCHEDULE, grid_density=10_000, seed=0):
    """Full pipeline: Lyapunov weight, radius, Hessian envelope, cost weights,
    blending weight, and final verification.  Returns (ingredients, report)."""
    eq.validate(model)
    A, B, A_K = closed_loop_matrices(model, eq, K)
    if not is_schur(A_K):
        raise NotSchurAdmissibleError("not Schur-admissible: A + B K has spectral radius >= 1")
    P_lyap = build_lyap_weight(A_K, Q_lyap)
    tau = choose_tau(P_lyap, model, cost, K, tau_mode, eq,
                     density=min(grid_density, 4096), seed=seed)
    samples = terminal_set_samples(
        P_lyap, tau, model.state_box, eq.x, max(1000, grid_density // 10), seed=seed
    )
    Q_hess = hessian_envelope(cost, K, eq, samples)
    q = gradient_at_equilibrium(cost, K, eq)
    P_cost, p_cost = build_cost_weights(A_K, Q_hess, q)
    base = TerminalIngredients(
        K=np.asarray(K, dtype=float).reshape(model.m, model.n),
        P_lyap=P_lyap, tau=tau, Q_hess=Q_hess, P_cost=P_cost, p_cost=p_cost,
        mu=0.0, x_eq=eq.x, u_eq=eq.u,
    )
    return select_mu(model, cost, base, schedule=mu_schedule,
                     grid_density=grid_density, seed=seed)


# ---------------------------------------------------------------------------
# robustness margin


def delta_from_constants(tau, L_f, L_s, c2, lam_max):
    """Margin formula with sampled linear surrogates for the comparison maps."""
    if L_f <= 0.0:
        return float("inf")
    if L_s <= 0.0 or c2 <= 0.0 or lam_max <= 0.0 or tau <= 0.0:
        raise SynthesisError("delta needs positive tau, L_s, c2, and lam_max")
    half = 0.5 * tau
    return float(min(half / (L_s * L_f), (0.5 * c2) * half / (lam_max * L_s * L_f)))


def estimate_delta(model, ingredients, N, sample_budget=1000, seed=0):
    """Sampled surrogate for the admissible disturbance magnitude.

    L_f bounds the one-step disturbance gain, L_s the sensitivity of the
    sublevel function after an N-step nominal rollout, c2 the quadratic
    decrease rate, and lam_max an upper bound on the largest eigenvalue of
    the Lyapunov weight via its Cholesky factor.  Flagged heuristic: a
    computable stand-in for non-constructive comparison functions.
    """
    if N < 1:
        raise InputError("N must be >= 1")
    ing = ingredients
    rng = np.random.default_rng(seed)
    budget = int(sample_budget)

    L = cholesky(ing.P_lyap)
    lam_max = float(np.max(np.sum(np.abs(L), axis=0)) * np.max(np.sum(np.abs(L), axis=1)))

    dev = _rng_terminal_samples(ing, model.state_box, 2 * budget, rng)
    x_pool = ing.x_eq + dev

    w_box = model.disturbance_box
    widths = w_box[:, 1] - w_box[:, 0]
    degenerate = model.q == 0 or (np.all(widths == 0.0) and np.all(w_box[:, 0] == 0.0))
    if degenerate:
        L_f = 0.0
    else:
        u = rng.uniform(model.input_box[:, 0], model.input_box[:, 1], size=(budget, model.m))
        w = rng.uniform(w_box[:, 0], w_box[:, 1], size=(budget, model.q))
        norms = np.linalg.norm(w, axis=1)
        redo = norms < 1e-12
        for _ in range(100):
            if not np.any(redo):
                break
            w[redo] = rng.uniform(w_box[:, 0], w_box[:, 1], size=(int(redo.sum()), model.q))
            norms = np.linalg.norm(w, axis=1)
            redo = norms < 1e-12
        if np.any(redo):
            raise InputError("disturbance samples are degenerate (all w = 0)")
        xs = x_pool[:budget]
        gain = np.linalg.norm(step(model, xs, u, w) - step(model, xs, u), axis=1) / norms
        L_f = float(np.max(gain))

    # Lipschitz constant of x -> lyap_value(rollout(N; x, u_seq))
    x1 = x_pool[:budget]
    x2 = x_pool[budget: 2 * budget]
    sep = np.linalg.norm(x1 - x2, axis=1)
    ok = sep >= 1e-12
    x1, x2, sep = x1[ok], x2[ok], sep[ok]
    useq = rng.uniform(model.input_box[:, 0], model.input_box[:, 1],
                       size=(N, x1.shape[0], model.m))
    a, b = x1, x2
    for k in range(N):
        a = step(model, a, useq[k])
        b = step(model, b, useq[k])
    L_s = float(np.max(np.abs(ing.lyap_value(a) - ing.lyap_value(b)) / sep))

    # quadratic decrease rate under the terminal law
    dev_c = _rng_terminal_samples(ing, model.state_box, budget, rng)
    xc = ing.x_eq + dev_c
    xcp = step(model, xc, ing.terminal_law(xc))
    nx2 = np.sum(dev_c * dev_c, axis=1)
    sel = nx2 >= 1e-12
    c2 = float(np.min((ing.lyap_value(xc)[sel] - ing.lyap_value(xcp)[sel]) / nx2[sel]))
    if c2 <= 0.0:
        raise SynthesisError("sampled decrease rate is not positive; verify ingredients first")

    delta = delta_from_constants(ing.tau, L_f, L_s, c2, lam_max)
    return DeltaEstimate(L_f=L_f, L_s=L_s, c2=c2, lam_max=lam_max, delta=delta)


def _rng_terminal_samples(ing, state_box, count, rng):
    half = np.sqrt(np.maximum(ing.tau * np.diag(np.linalg.inv(ing.P_lyap)), 0.0))
    box = np.asarray(state_box, dtype=float)
    lo = np.maximum(box[:, 0], ing.x_eq - half)
    hi = np.minimum(box[:, 1], ing.x_eq + half)
    out = []
    have = 0
    while have < count:
        pts = rng.uniform(lo, hi, size=(max(count, 1024), len(lo)))
        dev = pts - ing.x_eq
        keep = np.einsum("bi,ij,bj->b", dev, ing.P_lyap, dev) <= ing.tau
        sel = dev[keep]
        out.append(sel)
        have += sel.shape[0]
    return np.concatenate(out, axis=0)[:count]


# ---------------------------------------------------------------------------
# certificate files


def certificate_payload(ingredients, report, delta=None, config=None, meta=None):
    return {
        "format": "empc-certificate/1",
        "ingredients": ingredients.to_dict(),
        "report": report.to_dict(),
        "delta": None if delta is None else delta.to_dict(),
        "config": config,
        "meta": meta or {},
    }


def save_certificate(path, ingredients, report, delta=None, config=None, meta=None):
    payload = certificate_payload(ingredients, report, delta=delta, config=config, meta=meta)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload


def load_certificate(path):
    """Read a certificate; returns (ingredients, report, delta, payload)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as err:
        raise CertificateError(f"{path}: invalid JSON at line {err.lineno}, column {err.colno}") from err
    if payload.get("format") != "empc-certificate/1":
        raise CertificateError(f"{path}: missing or unsupported format marker")
    try:
        ingredients = TerminalIngredients.from_dict(payload["ingredients"])
        report = VerificationReport.from_dict(payload["report"])
        delta = None if payload.get("delta") is None else DeltaEstimate.from_dict(payload["delta"])
    except (KeyError, TypeError) as err:
        raise CertificateError(f"{path}: malformed certificate field: {err}") from err
    return ingredients, report, delta, payload
