"""Small dense kernels: discrete Lyapunov solves, discrete LQR, matrix tests.

Everything here targets matrices of order <= 10, so the Kronecker route for
the Lyapunov equation (an n^2 x n^2 dense solve) is deliberately chosen over
Bartels-Stewart, and the Schur test uses the Lyapunov characterization
instead of an eigensolver.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InputError, NotSchurAdmissibleError, NotStabilizableError

DLYAP_RESIDUAL_TOL = 1e-10


def symmetrize(M, tol=1e-12):
    """Return (M + M') / 2 after checking M is symmetric up to `tol`."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, np.max(np.abs(M)))
    if np.max(np.abs(M - M.T)) > tol * scale:
        raise InputError("matrix is not symmetric within tolerance")
    return 0.5 * (M + M.T)


def solve_dlyap(A_K, Q):
    """Solve A_K' P A_K - P + Q = 0 for symmetric P.

    Vectorizes through the Kronecker identity and solves the n^2 x n^2
    linear system with partial pivoting.  The accepted solution satisfies
    |A_K' P A_K - P + Q|_inf <= 1e-10.
    """
    A_K = np.asarray(A_K, dtype=float)
    Q = symmetrize(Q)
    n = A_K.shape[0]
    if A_K.shape != (n, n) or Q.shape != (n, n):
        raise InputError("A_K and Q must be square matrices of equal order")
    # row-major vec: vec(A' P A) = (A' kron A') vec(P)
    lhs = np.eye(n * n) - np.kron(A_K.T, A_K.T)
    try:
        vec_p = np.linalg.solve(lhs, Q.reshape(-1))
    except np.linalg.LinAlgError as err:
        raise NotSchurAdmissibleError(
            "not Schur-admissible: I - A_K (x) A_K is singular"
        ) from err
    P = 0.5 * (vec_p.reshape(n, n) + vec_p.reshape(n, n).T)
    residual = np.max(np.abs(A_K.T @ P @ A_K - P + Q))
    if not np.isfinite(residual) or residual > DLYAP_RESIDUAL_TOL:
        raise NotSchurAdmissibleError(
            f"not Schur-admissible: Lyapunov residual {residual:.3e} exceeds "
            f"{DLYAP_RESIDUAL_TOL:.0e}"
        )
    return P


def is_positive_definite(M):
    """Cholesky test: all pivots must exceed 1e-12 * trace(M) / n."""
    M = symmetrize(M)
    n = M.shape[0]
    threshold = 1e-12 * np.trace(M) / n
    L = np.zeros_like(M)
    for k in range(n):
        d = M[k, k] - L[k, :k] @ L[k, :k]
        if not (d > threshold and d > 0.0):
            return False
        L[k, k] = np.sqrt(d)
        for i in range(k + 1, n):
            L[i, k] = (M[i, k] - L[i, :k] @ L[k, :k]) / L[k, k]
    return True


def cholesky(M):
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    M = symmetrize(M)
    n = M.shape[0]
    L = np.zeros_like(M)
    for k in range(n):
        d = M[k, k] - L[k, :k] @ L[k, :k]
        if not d > 0.0:
            raise InputError("matrix is not positive definite")
        L[k, k] = np.sqrt(d)
        for i in range(k + 1, n):
            L[i, k] = (M[i, k] - L[i, :k] @ L[k, :k]) / L[k, k]
    return L


def is_schur(A_K):
    """True iff all eigenvalues lie strictly inside the unit circle.

    Checked via the Lyapunov characterization: solve_dlyap(A_K, I) must
    succeed and the solution must be positive definite.
    """
    A_K = np.asarray(A_K, dtype=float)
    try:
        P = solve_dlyap(A_K, np.eye(A_K.shape[0]))
    except NotSchurAdmissibleError:
        return False
    return is_positive_definite(P)


def solve_dlqr(A, B, Q_lqr, R_lqr, tol=1e-12, max_iter=100_000):
    """Discrete LQR gain by Riccati fixed-point iteration.

    Sign convention u = K x, so K = -(R + B'PB)^{-1} B'PA at the converged
    fixed point and A + B K is Schur for stabilizable (A, B).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q_lqr = symmetrize(Q_lqr)
    R_lqr = symmetrize(np.atleast_2d(R_lqr))
    if not is_positive_definite(R_lqr):
        raise InputError("R_lqr must be positive definite")
    P = Q_lqr.copy()
    for _ in range(max_iter):
        BtPB = R_lqr + B.T @ P @ B
        gain = np.linalg.solve(BtPB, B.T @ P @ A)
        P_next = Q_lqr + A.T @ P @ A - A.T @ P @ B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) <= tol:
            K = -np.linalg.solve(R_lqr + B.T @ P_next @ B, B.T @ P_next @ A)
            return K
        P = P_next
    raise NotStabilizableError("not stabilizable within iteration budget")
