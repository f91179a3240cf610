"""Nominal closed loops from the empty reactor, both stage costs.

The economic controller settles into a sustained bang-bang oscillation
(dynamic operation pays: its long-run average beats the steady state),
while the regularized cost stabilizes the steady state.  Pass a step count
as the first argument for a longer run (default 60 keeps this quick).
"""

import sys

import numpy as np

from empc import OcpProblem, performance, run_closed_loop, synthesize
from empc.closedloop import write_trace_csv
from empc.presets import CSTR_GAIN, cstr_diss_cost, cstr_econ_cost, cstr_equilibrium, cstr_model

T = int(sys.argv[1]) if len(sys.argv) > 1 else 60
model = cstr_model()
eq = cstr_equilibrium()
x0 = np.array([-0.5, -0.5])  # c_A = c_B = 0

for label, cost_fn in (("economic", cstr_econ_cost), ("dissipative", cstr_diss_cost)):
    ingredients, _ = synthesize(model, cost_fn(), eq, CSTR_GAIN)
    problem = OcpProblem(model=model, cost=cost_fn(), ingredients=ingredients, horizon=16)
    trace = run_closed_loop(problem, x0, np.zeros((T, 1)))
    print(f"== {label} ==")
    for t in range(10, T + 1, 10):
        print(f"  J_{t} = {performance(trace, t):+.4f}")
    tail = trace.inputs[max(0, T - 12):, 0]
    print("  last inputs:", np.array2string(tail, precision=2))
    path = f"nominal_{label}.csv"
    write_trace_csv(trace, path)
    print("  trace written to", path)
