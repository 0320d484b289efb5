"""
Morph attack metrics
====================

MMPMR and the MAP row from a small synthetic score table.
"""

import numpy as np

from fastdim.metrics import ScoreMatrix, map_row, mmpmr, threshold_at_fmr

rng = np.random.default_rng(0)

# thresholds from impostor scores at a 0.1% false match rate
impostors = rng.normal(0.2, 0.1, size=(3, 20000))
thresholds = {f"fr{v}": threshold_at_fmr(impostors[v], 0.001) for v in range(3)}
print({k: round(v, 3) for k, v in thresholds.items()})

# 200 morphs, two contributing subjects each, scored by three verifiers
records = []
for m in range(200):
    strength = rng.uniform(0.2, 0.8)
    for subject in ("a", "b"):
        for v in thresholds:
            records.append((f"m{m}", subject, v, strength + rng.normal(0, 0.08)))
sm = ScoreMatrix.from_records(records, thresholds)

for v, name in enumerate(sm.verifier_ids):
    print(f"MMPMR {name}: {100 * mmpmr(sm, v):.1f}%")
print("MAP[1, c]:", np.round(100 * map_row(sm), 1))
