"""
How fast does querying labels remove bias?
==========================================

Train on a few WDBC resamples, then correct test predictions in three orders:
largest true error first (an oracle), largest predicted variance first, and
at random. Squared bias should fall fastest for the oracle and slowest at
random.
"""

import numpy as np

from uainvase import SplitSpec, TrainingConfig, load_wdbc, resample, standardize, train
from uainvase.evaluation import PredictionSet, evaluate, gain_table

data = load_wdbc()
config = TrainingConfig()

# three resamples keep this short
predsets = []
for k in range(3):
    tr, te = resample(data, SplitSpec(), k)
    tr, te, _, _ = standardize(tr, te)
    model = train(tr, config, rng=np.random.default_rng([0, k]))
    predsets.append(PredictionSet.from_model(model, te, k))

rates = (0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0)
curves = evaluate(predsets, rates=rates)

print("mean squared bias after querying a fraction of the test set")
print("rate        " + "  ".join(f"{r:>6g}" for r in rates))
for strategy in ("oracle", "uncertainty", "random"):
    row = curves[strategy, "bias"].mean
    print(f"{strategy:<12}" + "  ".join(f"{v:6.4f}" for v in row))

# gains in AUC-ROC, percentage points over the unqueried model
table = gain_table([curves[s, "auc_roc"] for s in ("oracle", "uncertainty", "random")],
                   rates=(0.01, 0.05, 0.1, 0.5))
print(f"\nAUC-ROC with no queries: {100 * table.base_value:.2f}")
header, body = table.rows()
for row in [header] + body:
    print(f"{row[0]:<18}" + "  ".join(f"{v:>6}" for v in row[1:]))
