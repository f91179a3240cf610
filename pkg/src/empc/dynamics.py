"""Controlled ODE models with disturbance channels and fixed-step integration.

A model holds the continuous-time vector field together with its state,
input, and disturbance boxes and a sample time.  The discrete map is the
classical 4th-order Runge-Kutta integration of the field over one sample
period with the disturbance held constant.  No clipping is ever applied:
the state box documents physical invariance of the model itself, and
violations beyond a small slack only trigger a diagnostic warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import InputError, NumericalError


class StateBoxWarning(UserWarning):
    """Simulated trajectory left the declared state box."""


def _as_box(box, dim, name):
    arr = np.asarray(box, dtype=float)
    if arr.shape != (dim, 2):
        raise InputError(f"{name} must have shape ({dim}, 2), got {arr.shape}")
    if np.any(arr[:, 0] > arr[:, 1]):
        raise InputError(f"{name} has a lower bound above the upper bound")
    return arr


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time controlled system x' = rhs(x, u, w) with boxes and Δ.

    ``rhs`` must broadcast over leading axes: inputs of shape (..., n),
    (..., m), (..., q) produce an output of shape (..., n).  ``rhs_jac``,
    when registered, returns the pair of continuous-time Jacobians
    (∂rhs/∂x, ∂rhs/∂u) at a single (unbatched) point.
    """

    n: int
    m: int
    q: int
    rhs: Callable
    state_box: np.ndarray
    input_box: np.ndarray
    disturbance_box: np.ndarray
    sample_time: float
    substeps: int = 4
    rhs_jac: Optional[Callable] = None
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "state_box", _as_box(self.state_box, self.n, "state_box"))
        object.__setattr__(self, "input_box", _as_box(self.input_box, self.m, "input_box"))
        object.__setattr__(
            self, "disturbance_box", _as_box(self.disturbance_box, self.q, "disturbance_box")
        )
        if not np.all(np.isfinite(self.input_box)):
            raise InputError("input box must be compact (finite bounds on both sides)")
        if not (self.sample_time > 0):
            raise InputError("sample_time must be positive")
        if self.substeps < 1:
            raise InputError("substeps must be >= 1")
        for box in (self.state_box, self.input_box, self.disturbance_box):
            box.setflags(write=False)


@dataclass(frozen=True)
class Equilibrium:
    """Fixed point of the discrete map: |f(x_s, u_s, 0) - x_s| <= residual_tol."""

    x: np.ndarray
    u: np.ndarray
    residual_tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if self.residual_tol < 0:
            raise InputError("residual_tol must be nonnegative")

    def validate(self, model):
        residual = np.max(np.abs(step(model, self.x, self.u) - self.x))
        if residual > self.residual_tol:
            raise InputError(
                f"equilibrium residual {residual:.3e} exceeds tolerance {self.residual_tol:.1e}"
            )
        return residual


def _check_finite(x, context):
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(x)))
        raise NumericalError(f"non-finite result in {context} at coordinate {bad[0].tolist()}")


def step(model, x, u, w=None):
    """One sample period of the discrete map x+ = f(x, u, w).

    RK4 with ``model.substeps`` equal sub-intervals, w held constant.
    Broadcasts over leading axes.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1:] != (model.n,):
        raise InputError(f"state has trailing dimension {x.shape[-1:]}, expected {model.n}")
    if u.shape[-1:] != (model.m,):
        raise InputError(f"input has trailing dimension {u.shape[-1:]}, expected {model.m}")
    if w is None:
        w = np.zeros(model.q)
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (model.q,):
        raise InputError(f"disturbance has trailing dimension {w.shape[-1:]}, expected {model.q}")
    lo, hi = model.input_box[:, 0], model.input_box[:, 1]
    if np.any(u < lo - 1e-8) or np.any(u > hi + 1e-8):
        raise InputError("input lies outside the input box")
    xp = _rk4(model.rhs, x, u, w, model.sample_time, model.substeps)
    _check_finite(xp, "step")
    return xp


def _rk4(rhs, x, u, w, dt, substeps):
    h = dt / substeps
    for _ in range(substeps):
        k1 = rhs(x, u, w)
        k2 = rhs(x + 0.5 * h * k1, u, w)
        k3 = rhs(x + 0.5 * h * k2, u, w)
        k4 = rhs(x + h * k3, u, w)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def simulate_open_loop(model, x0, u_seq, w_seq=None):
    """Roll the discrete map over an input sequence; returns N+1 states."""
    x0 = np.asarray(x0, dtype=float)
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, model.m)
    N = u_seq.shape[0]
    if w_seq is None:
        w_seq = np.zeros((N, model.q))
    w_seq = np.asarray(w_seq, dtype=float).reshape(-1, model.q)
    if w_seq.shape[0] != N:
        raise InputError(f"u_seq has length {N} but w_seq has length {w_seq.shape[0]}")
    if not np.all(np.isfinite(x0)):
        raise InputError("initial state must be finite")
    out = np.empty((N + 1, model.n))
    out[0] = x0
    for k in range(N):
        try:
            out[k + 1] = step(model, out[k], u_seq[k], w_seq[k])
        except (InputError, NumericalError) as err:
            raise type(err)(f"at step {k}: {err}") from err
    slack = 1e-6
    lo, hi = model.state_box[:, 0], model.state_box[:, 1]
    if np.any(out < lo - slack) or np.any(out > hi + slack):
        worst = max(np.max(lo - out), np.max(out - hi))
        warnings.warn(
            f"trajectory leaves the state box by {worst:.2e}", StateBoxWarning, stacklevel=2
        )
    return out


def _fd_jacobians(fn, x, u, w, n, m):
    fx = np.empty((n, n))
    fu = np.empty((n, m))
    for i in range(n):
        h = 1e-6 * (1.0 + abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        fx[:, i] = (fn(x + e, u, w) - fn(x - e, u, w)) / (2.0 * h)
    for j in range(m):
        h = 1e-6 * (1.0 + abs(u[j]))
        e = np.zeros(m)
        e[j] = h
        fu[:, j] = (fn(x, u + e, w) - fn(x, u - e, w)) / (2.0 * h)
    return fx, fu


def linearize(model, x, u):
    """Continuous-time Jacobians (A_c, B_c) of the field at (x, u, 0).

    Uses the registered analytic Jacobian when available, otherwise central
    finite differences with step 1e-6*(1+|coordinate|).
    """
    x = np.asarray(x, dtype=float).reshape(model.n)
    u = np.asarray(u, dtype=float).reshape(model.m)
    w0 = np.zeros(model.q)
    if model.rhs_jac is not None:
        A_c, B_c = model.rhs_jac(x, u, w0)
        A_c = np.asarray(A_c, dtype=float).reshape(model.n, model.n)
        B_c = np.asarray(B_c, dtype=float).reshape(model.n, model.m)
    else:
        A_c, B_c = _fd_jacobians(model.rhs, x, u, w0, model.n, model.m)
    _check_finite(A_c, "linearize A_c")
    _check_finite(B_c, "linearize B_c")
    return A_c, B_c


def expm(M, tol=1e-14):
    """Matrix exponential by Taylor series with scaling and squaring."""
    M = np.asarray(M, dtype=float)
    norm = np.max(np.sum(np.abs(M), axis=1)) if M.size else 0.0
    s = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    A = M / (2.0 ** s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ A / k
        E = E + term
        if np.max(np.abs(term)) <= tol * max(1.0, np.max(np.abs(E))):
            break
    for _ in range(s):
        E = E @ E
    return E


def discretize(A_c, B_c, dt):
    """Exact zero-order-hold pair (A, B) via the augmented matrix exponential."""
    A_c = np.asarray(A_c, dtype=float)
    B_c = np.asarray(B_c, dtype=float)
    if dt <= 0:
        raise InputError("sample time must be positive")
    n = A_c.shape[0]
    m = B_c.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    E = expm(M * dt)
    A = E[:n, :n]
    B = E[:n, n:]
    _check_finite(A, "discretize A")
    _check_finite(B, "discretize B")
    return A, B


def step_with_jacobian(model, x, u, w=None):
    """Discrete step together with exact Jacobians of the RK4 map.

    Chains the stage Jacobians of every RK4 substep, so the result is the
    exact derivative of the integrator (not a finite-difference estimate)
    whenever the registered rhs Jacobian is analytic.
    """
    x = np.asarray(x, dtype=float).reshape(model.n)
    u = np.asarray(u, dtype=float).reshape(model.m)
    w = np.zeros(model.q) if w is None else np.asarray(w, dtype=float).reshape(model.q)
    n, m = model.n, model.m
    if model.rhs_jac is not None:
        jac = lambda xx: model.rhs_jac(xx, u, w)
    else:
        jac = lambda xx: _fd_jacobians(model.rhs, xx, u, w, n, m)
    h = model.sample_time / model.substeps
    A = np.eye(n)
    B = np.zeros((n, m))
    for _ in range(model.substeps):
        k1 = model.rhs(x, u, w)
        x2 = x + 0.5 * h * k1
        k2 = model.rhs(x2, u, w)
        x3 = x + 0.5 * h * k2
        k3 = model.rhs(x3, u, w)
        x4 = x + h * k3
        k4 = model.rhs(x4, u, w)

        f1x, f1u = jac(x)
        f2x, f2u = jac(x2)
        f3x, f3u = jac(x3)
        f4x, f4u = jac(x4)

        d1x, d1u = f1x, f1u
        d2x = f2x @ (np.eye(n) + 0.5 * h * d1x)
        d2u = f2x @ (0.5 * h * d1u) + f2u
        d3x = f3x @ (np.eye(n) + 0.5 * h * d2x)
        d3u = f3x @ (0.5 * h * d2u) + f3u
        d4x = f4x @ (np.eye(n) + h * d3x)
        d4u = f4x @ (h * d3u) + f4u

        A_sub = np.eye(n) + (h / 6.0) * (d1x + 2.0 * d2x + 2.0 * d3x + d4x)
        B_sub = (h / 6.0) * (d1u + 2.0 * d2u + 2.0 * d3u + d4u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        A = A_sub @ A
        B = A_sub @ B + B_sub
    _check_finite(x, "step_with_jacobian")
    return x, A, B
