"""
Does shaping the reward with the variance help?
===============================================

Train the same split twice, with and without the variance term in the
selector reward, and compare how well log-variance tracks the squared test
error. A higher correlation means the variance is a better guide for which
labels to query.
"""

import numpy as np

from uainvase import SplitSpec, TrainingConfig, load_wdbc, resample, standardize, train
from uainvase.evaluation import bias_vs_logvar_export, pearson

data = load_wdbc()
for seed in range(3):
    tr, te = resample(data, SplitSpec(), seed)
    tr, te, _, _ = standardize(tr, te)
    line = [f"seed {seed}"]
    for omega in (0.1, 0.0):
        config = TrainingConfig(omega=omega, seed=seed)
        # same generator seed for both runs, so only omega differs
        model = train(tr, config, rng=np.random.default_rng([seed, seed]))
        line.append(f"omega={omega:g}: r={pearson(bias_vs_logvar_export(model, te)):+.3f}")
    print("   ".join(line))
