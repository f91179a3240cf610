"""Economic MPC with robust terminal ingredients.

Library layout:

- ``dynamics``: controlled ODE models, RK4 discrete map, linearization, ZOH
- ``linalg``: discrete Lyapunov solves, LQR, Schur and definiteness tests
- ``costs``: economic stage costs with softened constraints
- ``terminal``: terminal cost/constraint synthesis, verification, margins
- ``ocp``: single-shooting solver for the finite-horizon problem
- ``closedloop``: disturbed simulation, average performance, Monte Carlo
- ``presets``: the CSTR benchmark
- ``cli``: the ``empc`` command
"""

from .costs import StageCost
from .dynamics import (
    Equilibrium,
    PlantModel,
    discretize,
    linearize,
    simulate_open_loop,
    step,
)
from .closedloop import (
    ClosedLoopTrace,
    MonteCarloSummary,
    monte_carlo,
    performance,
    run_closed_loop,
)
from .linalg import is_positive_definite, is_schur, solve_dlqr, solve_dlyap
from .ocp import OcpProblem, OcpSolution, candidate_shift, control_law, solve, total_cost
from .terminal import (
    DeltaEstimate,
    TerminalIngredients,
    VerificationReport,
    estimate_delta,
    load_certificate,
    save_certificate,
    synthesize,
    verify_terminal,
)

__version__ = "0.1.0"

__all__ = [
    "StageCost",
    "PlantModel",
    "Equilibrium",
    "step",
    "simulate_open_loop",
    "linearize",
    "discretize",
    "solve_dlyap",
    "solve_dlqr",
    "is_schur",
    "is_positive_definite",
    "TerminalIngredients",
    "VerificationReport",
    "DeltaEstimate",
    "synthesize",
    "verify_terminal",
    "estimate_delta",
    "save_certificate",
    "load_certificate",
    "OcpProblem",
    "OcpSolution",
    "solve",
    "total_cost",
    "candidate_shift",
    "control_law",
    "ClosedLoopTrace",
    "MonteCarloSummary",
    "run_closed_loop",
    "performance",
    "monte_carlo",
]
