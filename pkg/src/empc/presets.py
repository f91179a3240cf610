"""Built-in benchmark models and costs.

The CSTR preset describes an isothermal reactor with a first-order
reaction A -> B in deviation coordinates: the state collects the two
concentrations minus 0.5, the input is the inlet flow rate minus 4, and
the disturbance enters the inlet concentration of the reactant.  The
economically optimal steady state is the origin.
"""

from __future__ import annotations

import numpy as np

from .costs import StageCost
from .dynamics import Equilibrium, PlantModel
from .exceptions import InputError

CSTR_SAMPLE_TIME = 0.25

# Deviation-coordinate expressions for the section-5 stage costs.
CSTR_ECON_EXPR = "-2*(u1+4)*(x2+0.5) + 0.5*(u1+4)"
CSTR_REG_EXPR = "0.1*u1^2"


def _cstr_rhs(x, u, w):
    qf = u[..., 0] + 4.0
    ca = x[..., 0] + 0.5
    cb = x[..., 1] + 0.5
    dca = 0.1 * qf * (1.0 + w[..., 0] - ca) - 0.4 * ca
    dcb = -0.1 * qf * cb + 0.4 * ca
    return np.stack([dca, dcb], axis=-1)


def _cstr_jac(x, u, w):
    qf = u[0] + 4.0
    ca = x[0] + 0.5
    cb = x[1] + 0.5
    A_c = np.array([[-0.1 * qf - 0.4, 0.0], [0.4, -0.1 * qf]])
    B_c = np.array([[0.1 * (1.0 + w[0] - ca)], [-0.1 * cb]])
    return A_c, B_c


def cstr_model(substeps=4, sample_time=CSTR_SAMPLE_TIME):
    return PlantModel(
        n=2, m=1, q=1,
        rhs=_cstr_rhs,
        state_box=[[-0.5, 0.5], [-0.5, 0.5]],
        input_box=[[-4.0, 6.0]],
        disturbance_box=[[-0.2, 0.2]],
        sample_time=sample_time,
        substeps=substeps,
        rhs_jac=_cstr_jac,
        name="cstr",
    )


def cstr_equilibrium():
    return Equilibrium(x=np.zeros(2), u=np.zeros(1), residual_tol=1e-9)


def cstr_econ_cost(penalty=1e3):
    """Purely economic stage cost; value -2 at the steady state."""
    return StageCost.from_expressions(2, 1, CSTR_ECON_EXPR, penalty=penalty)


def cstr_diss_cost(penalty=1e3):
    """Economic cost plus the quadratic input regularization."""
    return StageCost.from_expressions(2, 1, CSTR_ECON_EXPR, reg=CSTR_REG_EXPR, penalty=penalty)


# Reference gain for the CSTR study; the bundled configs carry the same values.
CSTR_GAIN = np.array([[-0.012, -0.037]])

_REGISTRY = {
    "cstr": (cstr_model, cstr_equilibrium),
}


def available_models():
    return sorted(_REGISTRY)


def make_preset(name, substeps=None, sample_time=None):
    """Instantiate a registered preset; returns (model, equilibrium)."""
    try:
        model_fn, eq_fn = _REGISTRY[name]
    except KeyError:
        raise InputError(f"unknown model preset {name!r}; available: {available_models()}") from None
    kwargs = {}
    if substeps is not None:
        kwargs["substeps"] = substeps
    if sample_time is not None:
        kwargs["sample_time"] = sample_time
    return model_fn(**kwargs), eq_fn()
