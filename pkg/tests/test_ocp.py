import numpy as np
import pytest

from empc.costs import StageCost
from empc.dynamics import Equilibrium, PlantModel, simulate_open_loop
from empc.exceptions import InputError
from empc.ocp import (
    OcpProblem,
    candidate_shift,
    control_law,
    solve,
    total_cost,
    _adjoint,
)
from empc.presets import CSTR_GAIN, cstr_diss_cost, cstr_econ_cost, cstr_equilibrium, cstr_model
from empc.terminal import TerminalIngredients, synthesize


@pytest.fixture(scope="module")
def cstr():
    return cstr_model()


@pytest.fixture(scope="module")
def eq():
    return cstr_equilibrium()


@pytest.fixture(scope="module")
def econ_problem(cstr, eq):
    ingredients, _ = synthesize(cstr, cstr_econ_cost(), eq, CSTR_GAIN)
    return OcpProblem(model=cstr, cost=cstr_econ_cost(), ingredients=ingredients, horizon=16)


# --- total cost -------------------------------------------------------------

def test_total_cost_at_equilibrium(econ_problem, eq):
    u_seq = np.zeros((16, 1))
    value = total_cost(econ_problem, eq.x, u_seq)
    vf0 = econ_problem.ingredients.terminal_cost(eq.x)
    assert value == pytest.approx(16 * (-2.0) + vf0, abs=1e-12)
    assert vf0 == pytest.approx(0.0, abs=1e-15)


def test_total_cost_tracking_zero(cstr, eq):
    cost = StageCost.from_expressions(2, 1, econ="x1^2 + x2^2 + u1^2")
    ing = TerminalIngredients(K=CSTR_GAIN, P_lyap=np.eye(2), tau=10.0,
                              Q_hess=2 * np.eye(2), P_cost=np.eye(2),
                              p_cost=np.zeros(2), mu=0.0, x_eq=eq.x, u_eq=eq.u)
    prob = OcpProblem(model=cstr, cost=cost, ingredients=ing, horizon=8)
    assert total_cost(prob, eq.x, np.zeros((8, 1))) == pytest.approx(0.0, abs=1e-12)


def test_total_cost_terminal_offset_additivity(econ_problem):
    # replacing the terminal cost by terminal cost + c shifts V by exactly c
    class Offset:
        def __init__(self, base, c):
            self.base = base
            self.c = c

        def __getattr__(self, name):
            return getattr(self.base, name)

        def terminal_cost(self, x):
            return self.base.terminal_cost(x) + self.c

    x0 = np.array([-0.3, 0.2])
    u_seq = np.linspace(-1.0, 1.0, 16).reshape(16, 1)
    base = total_cost(econ_problem, x0, u_seq)
    shifted_problem = OcpProblem(
        model=econ_problem.model, cost=econ_problem.cost,
        ingredients=Offset(econ_problem.ingredients, 3.25), horizon=16,
    )
    assert total_cost(shifted_problem, x0, u_seq) == pytest.approx(base + 3.25, abs=1e-10)


# --- solve -------------------------------------------------------------------

def test_warm_start_dominance_at_equilibrium(econ_problem, eq):
    warm = np.zeros((16, 1))
    sol = solve(econ_problem, eq.x, warm_start=warm)
    assert sol.value <= total_cost(econ_problem, eq.x, warm) + 1e-8
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.u_seq, 0.0, atol=1e-6)


def test_one_step_lq_analytic_minimizer():
    # continuous rhs alpha*x + beta*u, exact ZOH handled by the integrator
    alpha, beta = -1.0, 0.8

    def rhs(x, u, w):
        return alpha * x + beta * u

    def jac(x, u, w):
        return np.array([[alpha]]), np.array([[beta]])

    model = PlantModel(n=1, m=1, q=0, rhs=rhs, rhs_jac=jac, state_box=[[-10, 10]],
                       input_box=[[-10, 10]], disturbance_box=np.zeros((0, 2)),
                       sample_time=0.25, substeps=8)
    a = float(np.exp(alpha * 0.25))
    b = beta / alpha * (a - 1.0)
    cost = StageCost.from_expressions(1, 1, econ="x1^2 + u1^2")
    p_f = 2.0
    ing = TerminalIngredients(K=np.zeros((1, 1)), P_lyap=np.eye(1), tau=1e6,
                              Q_hess=2 * np.eye(1), P_cost=p_f * np.eye(1),
                              p_cost=np.zeros(1), mu=0.0,
                              x_eq=np.zeros(1), u_eq=np.zeros(1))
    prob = OcpProblem(model=model, cost=cost, ingredients=ing, horizon=1, kkt_tol=1e-10)
    x0 = np.array([1.3])
    sol = solve(prob, x0)
    u_star = -p_f * a * b * x0[0] / (1.0 + p_f * b * b)
    assert sol.u_seq[0, 0] == pytest.approx(u_star, abs=1e-6)
    assert sol.status == "optimal"


def test_cold_solve_from_empty_reactor(econ_problem):
    x0 = np.array([-0.5, -0.5])
    sol = solve(econ_problem, x0)
    assert sol.status == "optimal"
    assert sol.terminal_slack >= 0.0
    # feasibility witness: the zero-input candidate ends inside the terminal set
    xs = simulate_open_loop(econ_problem.model, x0, np.zeros((16, 1)))
    assert econ_problem.ingredients.lyap_value(xs[-1]) <= econ_problem.ingredients.tau


def test_solution_prediction_consistency(econ_problem):
    sol = solve(econ_problem, np.array([-0.5, -0.5]))
    xs = simulate_open_loop(econ_problem.model, np.array([-0.5, -0.5]), sol.u_seq)
    assert np.max(np.abs(xs - sol.x_pred)) <= 1e-10
    assert np.all(sol.u_seq >= -4.0 - 1e-12) and np.all(sol.u_seq <= 6.0 + 1e-12)


def test_solve_deterministic_repeat(econ_problem):
    x = np.array([-0.2, 0.1])
    warm = np.linspace(-1, 2, 16).reshape(16, 1)
    s1 = solve(econ_problem, x, warm_start=warm)
    s2 = solve(econ_problem, x, warm_start=warm)
    np.testing.assert_array_equal(s1.u_seq, s2.u_seq)
    assert s1.value == s2.value


# --- candidate shift ---------------------------------------------------------

def test_candidate_shift_at_equilibrium(econ_problem, eq):
    prev = solve(econ_problem, eq.x, warm_start=np.zeros((16, 1)))
    cand = candidate_shift(econ_problem, prev)
    np.testing.assert_allclose(cand, 0.0, atol=1e-6)


def test_candidate_shift_structure(econ_problem):
    prev = solve(econ_problem, np.array([-0.5, -0.5]))
    cand = candidate_shift(econ_problem, prev)
    np.testing.assert_array_equal(cand[:-1], prev.u_seq[1:])
    expected_last = econ_problem.ingredients.terminal_law(prev.x_pred[-1])
    np.testing.assert_allclose(cand[-1], np.clip(expected_last, -4, 6), atol=1e-12)


def test_candidate_feasible_at_successor(econ_problem):
    # the warm-start feasibility mechanism at w = 0
    x = np.array([-0.5, -0.5])
    prev = solve(econ_problem, x)
    cand = candidate_shift(econ_problem, prev)
    x_next = prev.x_pred[1]
    xs = simulate_open_loop(econ_problem.model, x_next, cand)
    slack = econ_problem.ingredients.tau - econ_problem.ingredients.lyap_value(xs[-1])
    assert slack >= 0.0


def test_warm_start_monotone_improvement(econ_problem):
    # value of the re-solve never exceeds the candidate's cost
    x = np.array([-0.5, -0.5])
    prev = solve(econ_problem, x)
    cand = candidate_shift(econ_problem, prev)
    x_next = prev.x_pred[1]
    resolved = solve(econ_problem, x_next, warm_start=cand)
    assert resolved.value <= total_cost(econ_problem, x_next, cand) + 1e-8


# --- control law -------------------------------------------------------------

def test_control_law_at_equilibrium(econ_problem, eq):
    u, sol = control_law(econ_problem, eq.x)
    np.testing.assert_allclose(u, 0.0, atol=1e-6)
    assert sol.status == "optimal"


def test_control_law_constraint_contract(econ_problem):
    u, _ = control_law(econ_problem, np.array([-0.5, -0.5]))
    assert -4.0 - 1e-12 <= u[0] <= 6.0 + 1e-12


def test_control_law_deterministic(econ_problem):
    x = np.array([-0.4, -0.1])
    u1, s1 = control_law(econ_problem, x)
    u2, s2 = control_law(econ_problem, x)
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_array_equal(s1.u_seq, s2.u_seq)


# --- gradients ----------------------------------------------------------------

def test_adjoint_gradient_matches_fd(econ_problem):
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(-0.45, 0.45, size=2)
        u = rng.uniform(-3.5, 5.5, size=(16, 1))
        _, grad, _, _ = _adjoint(econ_problem, x, u.ravel(), lambda c: (0.0, 0.0))
        fd = np.empty(16)
        for k in range(16):
            h = 1e-6 * (1.0 + abs(u[k, 0]))
            up = u.copy(); up[k, 0] += h
            um = u.copy(); um[k, 0] -= h
            fd[k] = (total_cost(econ_problem, x, up) - total_cost(econ_problem, x, um)) / (2 * h)
        scale = max(1.0, np.max(np.abs(fd)))
        worst = max(worst, np.max(np.abs(grad - fd)) / scale)
    assert worst <= 1e-4


def test_nominal_cost_decrease_short_run(econ_problem, eq):
    # per-step inequality with the computed steady-state cost
    l_eq = float(econ_problem.cost.stage(eq.x, eq.u))
    x = np.array([-0.5, -0.5])
    prev = None
    for _ in range(15):
        u, sol = control_law(econ_problem, x, prev)
        if prev is not None:
            assert sol.value <= prev_value - prev_stage + l_eq + 1e-5
        prev_value = sol.value
        prev_stage = float(econ_problem.cost.stage(x, u))
        x = np.asarray(
            simulate_open_loop(econ_problem.model, x, u.reshape(1, 1))[-1]
        )
        prev = sol


def test_solve_rejects_bad_inputs(econ_problem):
    with pytest.raises(InputError):
        solve(econ_problem, np.array([np.nan, 0.0]))
    with pytest.raises(InputError):
        OcpProblem(model=econ_problem.model, cost=econ_problem.cost,
                   ingredients=econ_problem.ingredients, horizon=0)
