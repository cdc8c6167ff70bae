"""
Ranking metrics and ties
========================

Average precision, coverage error and ranking loss on small hand-made
examples, including tied scores and restricting evaluation to the retained
labels of each instance.
"""

import numpy as np

from lamc import average_precision, coverage_error, evaluate, ranking_loss
from lamc.metrics import ranks

scores = np.array([[0.9, 0.5, 0.1], [0.1, 0.5, 0.9], [0.5, 0.5, 0.1]])
labels = np.array([[1, 0, 1], [1, 0, 0], [1, 0, 0]])

# a tie counts against a label: both tied entries get the worse rank
print("ranks:\n", ranks(scores))

for s, y in zip(scores, labels):
    print(
        s, y,
        "AP", round(average_precision(s, y), 4),
        "coverage", coverage_error(s, y),
        "ranking loss", ranking_loss(s, y),
    )

###############################################################################
# Instances without positives are skipped, not scored as zero.

mv = evaluate(np.vstack([scores, [[0.2, 0.3, 0.4]]]), np.vstack([labels, [[0, 0, 0]]]))
print(mv)

###############################################################################
# A mask keeps only some labels of each instance, the others are ignored.

mask = np.array([[True, False, True], [True, True, False], [True, True, True]])
print("masked:", evaluate(scores, labels, mask=mask))
