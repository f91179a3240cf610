import numpy as np
import pytest

from empc import linalg
from empc.exceptions import InputError, NotSchurAdmissibleError, NotStabilizableError
from empc.presets import CSTR_GAIN, cstr_equilibrium, cstr_model
from empc.terminal import closed_loop_matrices


@pytest.fixture(scope="module")
def cstr_AK():
    model = cstr_model()
    eq = cstr_equilibrium()
    _, _, A_K = closed_loop_matrices(model, eq, CSTR_GAIN)
    return A_K


def _dlyap_series(A, Q, terms=2000):
    P = np.zeros_like(Q)
    Mk = np.eye(A.shape[0])
    for _ in range(terms):
        P = P + Mk.T @ Q @ Mk
        Mk = A @ Mk
        if np.max(np.abs(Mk)) < 1e-18:
            break
    return P


def test_dlyap_nilpotent():
    P = linalg.solve_dlyap(np.zeros((2, 2)), np.eye(2))
    np.testing.assert_allclose(P, np.eye(2), atol=1e-14)


def test_dlyap_scalar_geometric():
    P = linalg.solve_dlyap(np.array([[0.5]]), np.array([[1.0]]))
    np.testing.assert_allclose(P, [[4.0 / 3.0]], atol=1e-14)


def test_dlyap_cstr_series_oracle(cstr_AK):
    P = linalg.solve_dlyap(cstr_AK, np.eye(2))
    np.testing.assert_allclose(P, _dlyap_series(cstr_AK, np.eye(2)), atol=1e-10)
    assert linalg.is_positive_definite(P)
    assert np.max(np.abs(cstr_AK.T @ P @ cstr_AK - P + np.eye(2))) <= 1e-10


def test_dlyap_singular_raises():
    with pytest.raises(NotSchurAdmissibleError):
        linalg.solve_dlyap(np.eye(2), np.eye(2))


def test_dlyap_residual_on_random_schur_systems():
    rng = np.random.default_rng(42)
    count = 0
    while count < 50:
        n = int(rng.integers(1, 5))
        A = rng.normal(size=(n, n))
        radius = np.max(np.abs(np.linalg.eigvals(A)))
        A = A * (rng.uniform(0.2, 0.9) / max(radius, 1e-9))
        Q = rng.normal(size=(n, n))
        Q = 0.5 * (Q + Q.T)
        P = linalg.solve_dlyap(A, Q)  # residual <= 1e-10 enforced internally
        assert np.max(np.abs(A.T @ P @ A - P + Q)) <= 1e-10
        count += 1


def test_is_schur():
    assert linalg.is_schur(0.99 * np.eye(3))
    assert not linalg.is_schur(np.eye(3))
    assert not linalg.is_schur(np.array([[0.5, 0.0], [0.0, 1.5]]))


def test_schur_implies_dlyap_succeeds_for_any_symmetric_Q(cstr_AK):
    assert linalg.is_schur(cstr_AK)
    rng = np.random.default_rng(8)
    for _ in range(20):
        Q = rng.normal(size=(2, 2)) * 10.0 ** float(rng.integers(-3, 3))
        linalg.solve_dlyap(cstr_AK, 0.5 * (Q + Q.T))  # indefinite Q allowed


def test_is_schur_cstr_char_poly_oracle(cstr_AK):
    # 2x2 eigenvalues by the quadratic formula
    tr = np.trace(cstr_AK)
    det = np.linalg.det(cstr_AK)
    disc = tr * tr - 4 * det
    roots = [(tr + np.sqrt(complex(disc))) / 2, (tr - np.sqrt(complex(disc))) / 2]
    assert all(abs(r) < 1.0 for r in roots)
    assert linalg.is_schur(cstr_AK)


def test_is_positive_definite():
    assert linalg.is_positive_definite(np.eye(3))
    assert not linalg.is_positive_definite(np.diag([1.0, -1e-3]))
    # the CSTR terminal cost weight: indefinite by design ((1,1) < 0)
    cost_weight = np.array([[-9.47e-5, 4.56e-2], [4.56e-2, 4.49e-1]])
    assert not linalg.is_positive_definite(cost_weight)


def test_symmetrize_rejects_asymmetric():
    with pytest.raises(InputError):
        linalg.symmetrize(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_dlqr_scalar_hand_oracle():
    # P solves P = 1 + 0.25 P - 0.25 P^2 / (1 + P)  =>  P^2 - 0.25 P - 1 = 0
    P_star = (0.25 + np.sqrt(0.0625 + 4.0)) / 2.0
    K = linalg.solve_dlqr(np.array([[0.5]]), np.array([[1.0]]),
                          np.array([[1.0]]), np.array([[1.0]]))
    K_star = -P_star * 0.5 / (1.0 + P_star)
    np.testing.assert_allclose(K, [[K_star]], atol=1e-9)
    assert linalg.is_schur(np.array([[0.5]]) + np.array([[1.0]]) @ K)


def test_dlqr_no_input_authority():
    K = linalg.solve_dlqr(np.array([[0.5]]), np.array([[0.0]]),
                          np.array([[1.0]]), np.array([[1.0]]))
    np.testing.assert_allclose(K, [[0.0]], atol=1e-14)


def test_dlqr_cstr_self_consistent():
    model = cstr_model()
    eq = cstr_equilibrium()
    A, B, _ = closed_loop_matrices(model, eq, np.zeros((1, 2)))
    K = linalg.solve_dlqr(A, B, np.eye(2), np.array([[10.0]]))
    assert linalg.is_schur(A + B @ K)


def test_dlqr_random_stabilizable_systems():
    rng = np.random.default_rng(2024)
    done = 0
    while done < 50:
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        try:
            K = linalg.solve_dlqr(A, B, np.eye(n), np.eye(m))
        except NotStabilizableError:
            continue
        assert linalg.is_schur(A + B @ K)
        done += 1


def test_dlqr_rejects_indefinite_R():
    with pytest.raises(InputError):
        linalg.solve_dlqr(np.eye(2), np.ones((2, 1)), np.eye(2), np.array([[-1.0]]))
