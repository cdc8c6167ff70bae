"""
Training from single positive labels
====================================

Build a synthetic multi-label dataset, keep one observed positive per
training instance, and compare the assume-negative (AN) and weak
assume-negative (WAN) losses against training on the full labels.
"""


from lamc import (
    AdamState,
    LossKind,
    SplitSpec,
    average_precision,
    generate_synthetic,
    init_mlp,
    project_single_positive,
    split,
    train,
)

# 1500 instances, 20 features, 8 labels, about 3 positives each
ds = generate_synthetic(1500, 20, 8, cardinality=3.0, noise=0.1, seed=0)
print("label cardinality:", round(ds.cardinality(), 3))

parts = split(ds, SplitSpec(0.8, 0.0, 0.1, 0.1, seed=0))
view = project_single_positive(parts.train, seed=0)
print("training instances:", len(view), "dropped (no positive):", view.n_dropped)

# the view keeps a single positive per row; the rest is unobserved
print("true labels of row 0:", view.base.labels[0], "observed positive:", view.positive_index[0])

###############################################################################
# Train one model per loss. "bce" uses the full training labels and serves as
# an upper reference.

for tag in ("an", "wan", "bce"):
    model = init_mlp(ds.n_features, ds.n_labels, hidden_dim=128, seed=0)
    model, trace = train(model, view, LossKind(tag), AdamState(1e-3), epochs=25, batch_size=16, seed=0)
    ap = average_precision(model(parts.test.features), parts.test.labels)
    print(f"{tag:>4}: first/last epoch loss {trace[0]:.3f}/{trace[-1]:.3f}, test AP {ap:.3f}")

###############################################################################
# WAN down-weights the assumed negatives by 1/(K-1) by default.

print("WAN gamma for K=8:", LossKind("wan").gamma_for(8))
