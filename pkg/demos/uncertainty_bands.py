"""
Where is the model unsure?
==========================

Plotting mu +- sigma against a single feature shows where the predictor's
variance grows. On "worst radius" both classes overlap over a middle range,
and that is where the band should widen.
"""

import numpy as np

from uainvase import SplitSpec, TrainingConfig, load_wdbc, resample, standardize, train
from uainvase.evaluation import mixed_label_region, uncertainty_band_export

data = load_wdbc()
tr, te = resample(data, SplitSpec(), 0)
tr, te, means, stds = standardize(tr, te)
model = train(tr, TrainingConfig(), rng=np.random.default_rng([0, 0]))

j = data.feature_names.index("worst radius")
rows = uncertainty_band_export(model, te, j, train=tr, scale=(means, stds))
test_rows = [r for r in rows if r[0] == "test"]

lo, hi = mixed_label_region(tr.features[:, j] * stds[j] + means[j], tr.labels)
print(f"training labels overlap for worst radius in [{lo:.1f}, {hi:.1f}]")

inside = [r[5] for r in test_rows if lo <= r[1] <= hi]
outside = [r[5] for r in test_rows if not lo <= r[1] <= hi]
print(f"mean sigma inside the overlap:  {np.mean(inside):.4f}  ({len(inside)} points)")
print(f"mean sigma outside the overlap: {np.mean(outside):.4f}  ({len(outside)} points)")

# a coarse text rendering of the band, one line per test point
for kind, x, mu, lower, upper, sigma, label in test_rows[::6]:
    print(f"{x:6.2f}  mu={mu:+.2f}  [{lower:+.2f}, {upper:+.2f}]  y={label:.0f}")
