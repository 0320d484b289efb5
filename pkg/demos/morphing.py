"""
Morphing two identities
=======================

Each identity is a Gaussian class around its conditioning vector.  A morph
encodes both inputs, slerps the noise latents, averages the conditioning
and decodes.
"""

import numpy as np

from fastdim import GaussianModel, MorphConfig, SolverKind, build_schedule, dim_morph, noise_inject_morph
from fastdim.metrics import cosine_similarity

sched = build_schedule()
model = GaussianModel(sched, spread=0.1)
rng = np.random.default_rng(3)

d = 16
z_a, z_b = np.eye(d)[0], np.eye(d)[1]
x_a = z_a + 0.1 * rng.standard_normal(d)
x_b = z_b + 0.1 * rng.standard_normal(d)

# Fast-DiM defaults: DDIM encoder with 100 steps, DPM++ 2M decoder with 50
fast = dim_morph(model, sched, x_a, z_a, x_b, z_b)
print("NFE:", fast.nfe_total)
y = fast.morphed.x
for name, ref in [("z_a", z_a), ("z_b", z_b), ("z_ab", fast.z_ab)]:
    print(f"cosine to {name}: {cosine_similarity(y, ref):.3f}")

# the slower configuration with more steps on both sides
slow = MorphConfig(SolverKind.ForwardDDIM, SolverKind.BackwardDDIM, n_forward=250, n_backward=100)
print("slow NFE:", dim_morph(model, sched, x_a, z_a, x_b, z_b, slow).nfe_total)

# noise injection skips the encoder: noise the average and denoise it
for level in (1.0, 0.5, 0.3):
    res = noise_inject_morph(model, sched, x_a, x_b, fast.z_ab, level, rng_seed=0)
    print(f"level {level}: start t={res.x_T_ab.time_index}, NFE={res.nfe_total}, "
          f"cos to z_ab={cosine_similarity(res.morphed.x, fast.z_ab):.3f}")
