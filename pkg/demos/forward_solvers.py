"""
Encoding with different forward solvers
=======================================

Encode samples to x_T with a forward solver, decode them with DDIM on the
same grid, and compare reconstruction error.
"""

import numpy as np

from fastdim import GaussianModel, LatentState, SolverKind, build_schedule, make_time_grid
from fastdim.experiments import random_unit, roundtrip_study
from fastdim.solvers import delta_discrepancy, step_ddim, step_diffae_forward

sched = build_schedule()
model = GaussianModel(sched, spread=0.5)
rng = np.random.Generator(np.random.Philox(1))
z = random_unit(rng, 16)
x0s = z + 0.5 * rng.standard_normal((16, 16))

forward = [SolverKind.ForwardDDIM, SolverKind.ForwardDiffAE, SolverKind.ForwardDPMpp2M]
for row in roundtrip_study(sched, model, z, x0s, forward, [20, 50, 100, 250]):
    print(f"{row['forward_solver']:>16}  N_F={row['n_forward']:3d}  MSE={row['mse']:.3e}")

# The DiffAE step is the DDIM step written differently: one step of each
# from the same state agrees to roundoff, while the printed discrepancy
# formula reports a finite gap.
state = LatentState(x0s[0] * sched.alpha[300], 300)
a = step_diffae_forward(sched, model, z, state, 400).x
b = step_ddim(sched, model, z, state, 400).x
print("max |DiffAE - DDIM|:", np.max(np.abs(a - b)))
x0_hat = model.mean(z, 16)
print("discrepancy formula:", np.max(delta_discrepancy(sched, x0_hat, 300, 400)))

grid = make_time_grid(sched, 100)
print("grid starts", list(grid)[:5], "and ends", list(grid)[-3:])
