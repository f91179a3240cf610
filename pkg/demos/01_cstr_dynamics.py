"""Tour of the CSTR benchmark model.

The state collects the two reactor concentrations minus 0.5, the input is
the inlet flow rate minus 4, and the disturbance perturbs the inlet
concentration of the reactant.  The discrete map integrates the ODE with
fixed-step RK4 over one sample period.
"""

import numpy as np

from empc import discretize, linearize, simulate_open_loop, step
from empc.presets import cstr_equilibrium, cstr_model

model = cstr_model()
eq = cstr_equilibrium()

print("== equilibrium ==")
print("residual |f(x_s,u_s,0) - x_s| =", np.max(np.abs(step(model, eq.x, eq.u) - eq.x)))

print("\n== one step with an inlet disturbance ==")
print("x+ =", step(model, eq.x, eq.u, np.array([0.2])), " (positive first coordinate: richer feed)")

print("\n== integrator convergence (RK4, fixed step) ==")
x, u, w = np.array([-0.3, 0.2]), np.array([2.0]), np.array([0.1])
ref = step(cstr_model(substeps=800), x, u, w)
for s in (1, 2, 4, 8):
    err = np.linalg.norm(step(cstr_model(substeps=s), x, u, w) - ref)
    print(f"substeps={s}: error vs fine reference = {err:.3e}")

print("\n== linearize, then discretize (exact zero-order hold) ==")
A_c, B_c = linearize(model, eq.x, eq.u)
A, B = discretize(A_c, B_c, model.sample_time)
print("A_c =\n", A_c)
print("B_c =", B_c.ravel())
print("A =\n", A.round(6))
print("B =", B.ravel().round(6))

print("\n== open-loop rollout from the empty reactor ==")
xs = simulate_open_loop(model, np.array([-0.5, -0.5]), np.zeros((16, 1)))
print("concentrations after 16 steps at the steady input:", (xs[-1] + 0.5).round(4))
