"""Tour of the scoring rules on heavy-tailed severity forecasts.

Run with ``python3 notebooks/scores_tour.py``. Prints small tables only.
"""

import numpy as np

from taxoscore.evt_gpd import GpdParams, gpd_cdf, gpd_sample
from taxoscore.scoring import MomentConditionError, WeightKind, crps, energy_score, r_crps, tw_crps

truth = GpdParams(1.0, 2.0)
y = gpd_sample(truth, 20_000, seed=1)

# Loss-scale scores: the true forecast has the lowest mean, whatever the weight.
print("mean loss-scale scores, truth GPD(mu=1, tau=2)")
print(f"{'forecast':>16} {'CRPS':>8}" + "".join(f"{w.value:>9}" for w in WeightKind))
for f in (truth, GpdParams(1.5, 2.0), GpdParams(1.0, 1.2), GpdParams(0.7, 3.0)):
    row = [crps(f, y).mean()] + [tw_crps(f, y, w).mean() for w in WeightKind]
    print(f"GPD({f.mu:>4}, {f.tau:>3})   " + "".join(f"{v:9.4f}" for v in row))

# With tau <= 1 the forecast mean is infinite. The energy score with beta=1 refuses;
# the residual score only needs the PIT value and stays finite.
wild = GpdParams(1.0, 0.5)
try:
    energy_score(wild, y[:3], beta=1.0)
except MomentConditionError as exc:
    print("\nenergy score refused:", exc)
print("mean rCRPS of the tau=0.5 forecast:", round(float(r_crps(gpd_cdf(y, wild)).mean()), 4))

# The residual score sees the PIT distribution only. An overdispersed forecast pushes
# PIT values towards the middle and beats the truth on average.
print("\nmean rCRPS (lower is better)")
for f in (truth, GpdParams(0.8, 1.5)):
    print(f"  GPD({f.mu}, {f.tau}): {r_crps(gpd_cdf(y, f)).mean():.4f}")
