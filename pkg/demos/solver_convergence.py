"""
Solver convergence on the Gaussian model
========================================

The conditional Gaussian model has a closed-form flow map, so every solver
can be scored against the exact answer.
"""

import numpy as np

from fastdim import GaussianModel, LatentState, SolverKind, build_schedule, exact_flow_map
from fastdim.experiments import convergence_study, random_unit, sample_terminal
from fastdim.solvers import solve_reference

sched = build_schedule()
model = GaussianModel(sched, spread=0.5)
rng = np.random.Generator(np.random.Philox(0))
z = random_unit(rng, 16)
x_T = sample_terminal(model, z, rng)

# first check the oracle itself against a fine RK4 integration of the ODE
x = LatentState(x_T.x, 900.0)
exact = exact_flow_map(model, x, z, 50.0)
rk4 = solve_reference(sched, model, z, x, 50.0, n_substeps=1000)
print("RK4 vs closed form:", np.linalg.norm(rk4.x - exact.x) / np.linalg.norm(exact.x))

# global error of the two samplers, x_T down to the clean endpoint
kinds = [SolverKind.BackwardDDIM, SolverKind.BackwardDPMpp2M]
rows, _ = convergence_study(sched, model, z, x_T, None, kinds, [10, 20, 40, 80])
for r in rows:
    print(f"{r['solver']:>8}  N={r['n']:3d}  error={r['error']:.3e}  order={r['order']:.2f}")

# the multistep solver at 50 steps beats DDIM at 100
rows, _ = convergence_study(sched, model, z, x_T, None, kinds, [50, 100])
e = {(r["solver"], r["n"]): r["error"] for r in rows}
print("DPM++ 2M @ 50:", e[("dpmpp2m", 50)], " DDIM @ 100:", e[("ddim", 100)])
