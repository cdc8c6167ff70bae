"""
Class-wise thresholds and label filtering
=========================================

Calibrate one threshold per class on held-out, fully labelled data and use
it to keep only confident label predictions at test time.
"""

import numpy as np

from lamc import (
    AdamState,
    LossKind,
    SplitSpec,
    calibrate,
    filter_predictions,
    generate_synthetic,
    init_mlp,
    masked_scores,
    project_single_positive,
    quantile_threshold,
    split,
    train,
)
from lamc.calibrate import quantile_index

###############################################################################
# The threshold for a class is an order statistic of the scores that the
# model gives to calibration instances truly carrying that class.

S = np.array([0.31, 0.92, 0.12, 0.55, 0.71, 0.24, 0.43, 0.66, 0.98, 0.80])
print("n=10, alpha=0.5 -> k =", quantile_index(10, 0.5), "-> threshold", quantile_threshold(S, 0.5))
for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
    print(f"  alpha={alpha}: threshold {quantile_threshold(S, alpha)}")

###############################################################################
# Full pipeline on synthetic data with the 70/10/10/10 split.

ds = generate_synthetic(2000, 20, 10, cardinality=3.0, noise=0.3, seed=0)
parts = split(ds, SplitSpec(0.7, 0.1, 0.1, 0.1, seed=0))
view = project_single_positive(parts.train, seed=0)
model, _ = train(init_mlp(20, 10, seed=0), view, LossKind("wan"), AdamState(1e-3), seed=0)

# ten calibration positives per label, alpha = 0.5
thresholds = calibrate(model, parts.cal, alpha=0.5, per_label_cap=10, seed=0)
print(thresholds.to_text())

scores = model(parts.test.features)
fp = filter_predictions(thresholds, scores)
print("fraction of label predictions retained:", round(fp.accepted.mean(), 3))

# among retained labels, how many are truly relevant, compared with all labels
Y = parts.test.labels.astype(bool)
print("relevant among retained:", round(Y[fp.accepted].mean(), 3), "vs overall", round(Y.mean(), 3))

# per class, the share of true positives that clear the threshold is close
# to (n + 1 - k) / (n + 1) = 5/11 for n = 10
pos_rate = [(fp.accepted[:, i] & Y[:, i]).sum() / Y[:, i].sum() for i in range(10)]
print("true-positive acceptance per class:", np.round(pos_rate, 2))

print("first test row, scores:  ", np.round(scores[0], 2))
print("first test row, masked:  ", np.round(masked_scores(fp)[0], 2))
