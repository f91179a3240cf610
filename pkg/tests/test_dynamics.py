import numpy as np
import pytest
import warnings

from hypothesis import given, settings, strategies as st

from empc import dynamics
from empc.dynamics import (
    Equilibrium,
    PlantModel,
    StateBoxWarning,
    discretize,
    expm,
    linearize,
    simulate_open_loop,
    step,
    step_with_jacobian,
)
from empc.exceptions import InputError, NumericalError
from empc.presets import cstr_model, cstr_equilibrium


@pytest.fixture(scope="module")
def cstr():
    return cstr_model()


@pytest.fixture(scope="module")
def eq():
    return cstr_equilibrium()


def test_equilibrium_fixed_point(cstr, eq):
    xp = step(cstr, eq.x, eq.u)
    assert np.max(np.abs(xp - eq.x)) <= 1e-9


def test_disturbance_raises_reactant(cstr, eq):
    # oracle: much finer reference integration agrees on the sign
    fine = cstr_model(substeps=400)
    ref = step(fine, eq.x, eq.u, np.array([0.2]))
    out = step(cstr, eq.x, eq.u, np.array([0.2]))
    assert out[0] > 0.0
    assert ref[0] > 0.0
    assert np.max(np.abs(out - ref)) < 1e-8


def test_richardson_ratio_near_sixteen():
    x = np.array([-0.3, 0.2])
    u = np.array([2.0])
    w = np.array([0.1])
    outs = {s: step(cstr_model(substeps=s), x, u, w) for s in (1, 2, 4)}
    e1 = np.linalg.norm(outs[1] - outs[2])
    e2 = np.linalg.norm(outs[2] - outs[4])
    assert 10.0 <= e1 / e2 <= 22.0


def test_rk4_observed_order(cstr):
    # error against a 100x finer reference decays with order >= 3.7
    x = np.array([-0.3, 0.2])
    u = np.array([2.0])
    w = np.array([0.1])
    ref = step(cstr_model(substeps=800), x, u, w)
    errs = []
    hs = []
    for s in (1, 2, 4, 8):
        errs.append(np.linalg.norm(step(cstr_model(substeps=s), x, u, w) - ref))
        hs.append(1.0 / s)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 3.7


def test_simulate_fixed_point(cstr, eq):
    xs = simulate_open_loop(cstr, eq.x, np.zeros((25, 1)), np.zeros((25, 1)))
    assert np.max(np.abs(xs - eq.x)) <= 1e-8


def test_simulate_empty_horizon(cstr):
    x0 = np.array([0.1, -0.2])
    xs = simulate_open_loop(cstr, x0, np.zeros((0, 1)), np.zeros((0, 1)))
    assert xs.shape == (1, 2)
    np.testing.assert_array_equal(xs[0], x0)


def test_simulate_from_empty_reactor_stays_in_box(cstr):
    xs = simulate_open_loop(cstr, np.array([-0.5, -0.5]), np.zeros((16, 1)))
    assert np.all(xs >= -0.5 - 1e-9) and np.all(xs <= 0.5 + 1e-9)


def test_simulate_length_mismatch(cstr):
    with pytest.raises(InputError):
        simulate_open_loop(cstr, np.zeros(2), np.zeros((3, 1)), np.zeros((2, 1)))


@settings(max_examples=60, deadline=None)
@given(
    ca0=st.floats(0.0, 1.0),
    cb0=st.floats(0.0, 1.0),
    useed=st.integers(0, 2**31 - 1),
)
def test_physical_envelope(ca0, cb0, useed):
    # Mass balance: c_A stays in [0, 1]; c_B stays below the larger of the
    # initial total and the richest feed 1 + w_max.  (The box itself is not
    # invariant: with q_f = 0 the reaction converts all remaining A to B.)
    model = cstr_model()
    rng = np.random.default_rng(useed)
    T = 8
    u_seq = rng.uniform(-4.0, 6.0, size=(T, 1))
    w_seq = rng.uniform(-0.2, 0.2, size=(T, 1))
    x0 = np.array([ca0 - 0.5, cb0 - 0.5])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StateBoxWarning)
        xs = simulate_open_loop(model, x0, u_seq, w_seq)
    ca = xs[:, 0] + 0.5
    cb = xs[:, 1] + 0.5
    assert np.all(ca >= -1e-6) and np.all(ca <= 1.0 + 1e-6)
    assert np.all(cb >= -1e-6)
    assert np.all(cb <= max(ca0 + cb0, 1.2) + 1e-6)


def test_linearize_cstr_equilibrium(cstr, eq):
    A_c, B_c = linearize(cstr, eq.x, eq.u)
    np.testing.assert_allclose(A_c, [[-0.8, 0.0], [0.4, -0.4]], atol=1e-12)
    np.testing.assert_allclose(B_c, [[0.05], [-0.05]], atol=1e-12)
    # finite-difference oracle
    bare = cstr_model()
    object.__setattr__(bare, "rhs_jac", None)
    A_fd, B_fd = linearize(bare, eq.x, eq.u)
    np.testing.assert_allclose(A_fd, A_c, atol=1e-7)
    np.testing.assert_allclose(B_fd, B_c, atol=1e-7)


def test_linearize_linear_model_exact():
    A_c = np.array([[-1.0, 0.3], [0.2, -0.7]])
    B_c = np.array([[0.5], [-0.1]])

    def rhs(x, u, w):
        return x @ A_c.T + u @ B_c.T

    model = PlantModel(
        n=2, m=1, q=1, rhs=rhs,
        state_box=[[-5, 5]] * 2, input_box=[[-5, 5]], disturbance_box=[[0, 0]],
        sample_time=0.1,
    )
    A_hat, B_hat = linearize(model, np.array([0.3, -0.4]), np.array([0.2]))
    np.testing.assert_allclose(A_hat, A_c, atol=1e-9)
    np.testing.assert_allclose(B_hat, B_c, atol=1e-9)


def test_linearize_analytic_vs_fd_random_points(cstr):
    bare = cstr_model()
    object.__setattr__(bare, "rhs_jac", None)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-0.5, 0.5, size=2)
        u = rng.uniform(-4.0, 6.0, size=1)
        A_an, B_an = linearize(cstr, x, u)
        A_fd, B_fd = linearize(bare, x, u)
        scale = max(1.0, np.max(np.abs(A_an)), np.max(np.abs(B_an)))
        worst = max(worst, np.max(np.abs(A_an - A_fd)) / scale,
                    np.max(np.abs(B_an - B_fd)) / scale)
    assert worst <= 1e-5


def test_discretize_zero_dynamics():
    B_c = np.array([[2.0], [1.0]])
    A, B = discretize(np.zeros((2, 2)), B_c, 0.3)
    np.testing.assert_allclose(A, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(B, 0.3 * B_c, atol=1e-15)


def test_discretize_cstr_values_and_series_oracle():
    A_c = np.array([[-0.8, 0.0], [0.4, -0.4]])
    B_c = np.array([[0.05], [-0.05]])
    A, B = discretize(A_c, B_c, 0.25)
    np.testing.assert_allclose(A, [[0.8187, 0.0], [0.0861, 0.9048]], atol=5e-5)
    # oracle: truncated series with 30 terms on the augmented matrix
    M = np.zeros((3, 3))
    M[:2, :2] = A_c * 0.25
    M[:2, 2:] = B_c * 0.25
    E = np.eye(3)
    term = np.eye(3)
    for k in range(1, 31):
        term = term @ M / k
        E = E + term
    np.testing.assert_allclose(A, E[:2, :2], atol=1e-12)
    np.testing.assert_allclose(B, E[:2, 2:], atol=1e-12)


def test_discretize_semigroup():
    A_c = np.array([[-0.8, 0.0], [0.4, -0.4]])
    B_c = np.array([[0.05], [-0.05]])
    A1, _ = discretize(A_c, B_c, 0.25)
    A2, _ = discretize(A_c, B_c, 0.5)
    np.testing.assert_allclose(A2, A1 @ A1, atol=1e-13)


def test_linearize_then_discretize_matches_discrete_map_fd(cstr, eq):
    A_c, B_c = linearize(cstr, eq.x, eq.u)
    A, B = discretize(A_c, B_c, cstr.sample_time)
    n, m = cstr.n, cstr.m
    A_fd = np.empty((n, n))
    B_fd = np.empty((n, m))
    h = 1e-5
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        A_fd[:, i] = (step(cstr, eq.x + e, eq.u) - step(cstr, eq.x - e, eq.u)) / (2 * h)
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        B_fd[:, j] = (step(cstr, eq.x, eq.u + e) - step(cstr, eq.x, eq.u - e)) / (2 * h)
    assert np.max(np.abs(A - A_fd)) <= 1e-4
    assert np.max(np.abs(B - B_fd)) <= 1e-4


def test_step_with_jacobian_matches_fd(cstr):
    rng = np.random.default_rng(11)
    for _ in range(10):
        x = rng.uniform(-0.4, 0.4, size=2)
        u = rng.uniform(-3.0, 5.0, size=1)
        xp, A, B = step_with_jacobian(cstr, x, u)
        np.testing.assert_array_equal(xp, step(cstr, x, u))
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            col = (step(cstr, x + e, u) - step(cstr, x - e, u)) / (2 * h)
            np.testing.assert_allclose(A[:, i], col, atol=1e-8)
        col = (step(cstr, x, u + h) - step(cstr, x, u - h)) / (2 * h)
        np.testing.assert_allclose(B[:, 0], col, atol=1e-8)


def test_step_errors(cstr):
    with pytest.raises(InputError):
        step(cstr, np.zeros(3), np.zeros(1))
    with pytest.raises(InputError):
        step(cstr, np.zeros(2), np.array([7.0]))  # outside input box

    def bad_rhs(x, u, w):
        return x * np.inf

    model = PlantModel(n=1, m=1, q=0, rhs=bad_rhs, state_box=[[-1, 1]],
                       input_box=[[-1, 1]], disturbance_box=np.zeros((0, 2)),
                       sample_time=0.1)
    with pytest.raises(NumericalError):
        step(model, np.ones(1), np.zeros(1))


def test_expm_against_scipy():
    import scipy.linalg
    rng = np.random.default_rng(5)
    for _ in range(20):
        M = rng.normal(size=(4, 4))
        np.testing.assert_allclose(expm(M), scipy.linalg.expm(M), atol=1e-11, rtol=1e-11)


def test_model_validation():
    with pytest.raises(InputError):
        PlantModel(n=1, m=1, q=0, rhs=lambda x, u, w: x, state_box=[[1, -1]],
                   input_box=[[-1, 1]], disturbance_box=np.zeros((0, 2)), sample_time=0.1)
    with pytest.raises(InputError):
        PlantModel(n=1, m=1, q=0, rhs=lambda x, u, w: x, state_box=[[-1, 1]],
                   input_box=[[-np.inf, 1]], disturbance_box=np.zeros((0, 2)),
                   sample_time=0.1)
    with pytest.raises(InputError):
        Equilibrium(x=[0.1], u=[0.0]).validate(
            PlantModel(n=1, m=1, q=0, rhs=lambda x, u, w: x, state_box=[[-1, 1]],
                       input_box=[[-1, 1]], disturbance_box=np.zeros((0, 2)),
                       sample_time=0.1)
        )
