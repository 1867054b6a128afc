# %% [markdown]
# Choosing the probability cutoff on validation folds.

# %%
import numpy as np

from toxic_spans.thresholding import GRID, FoldScores, binarize, sweep

rng = np.random.default_rng(1)

def fold(n=60):
    target = rng.random((n, 70)) < 0.04
    valid = np.zeros((n, 70), bool)
    valid[:, 1:30] = True
    target &= valid
    probs = np.clip(np.where(target, 0.35, 0.05) + rng.normal(0, 0.06, (n, 70)), 0, 1)
    return FoldScores(probs, target, valid)

folds = [fold() for _ in range(5)]

# %% higher cutoffs only ever drop positions
p = folds[0].probs[0]
[len(binarize(p, t)) for t in (0.05, 0.2, 0.5, 0.9)]

# %%
result = sweep(folds)
print(result.optimal_threshold, round(result.optimal_f1_1, 3))

# %% the F1 curve, coarsely
for t, r in list(zip(GRID, result.reports))[::10]:
    print(f"{t:.2f}  F1_1={r.f1_1:.3f}  F1_0={r.f1_0:.3f}")
