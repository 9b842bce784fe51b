"""
Choosing what to remember
=========================

After each task only a few instances per relation are kept. They are the
points nearest the K-means centroids of the relation's encoder features,
so the memory covers the different ways a relation is expressed.
"""

import numpy as np

from rationale_cre.memory import select_exemplars

rng = np.random.default_rng(0)

# %%
# Three groups of feature vectors, as if a relation had three phrasings.
centres = np.array([[0.0, 0.0], [6.0, 0.0], [3.0, 5.0]])
features = np.concatenate([c + rng.normal(scale=0.6, size=(12, 2)) for c in centres])
features = features[rng.permutation(len(features))]

# %%
# With room for three exemplars we get one per group.
picked = select_exemplars(features, k=3, seed=0)
print("selected rows:", picked)
for i in picked:
    nearest = np.argmin(np.linalg.norm(centres - features[i], axis=1))
    print(f"  row {i:2d} at {np.round(features[i], 2)} belongs to group {nearest}")

# %%
# A single exemplar is the point nearest the overall mean.
mean = features.mean(axis=0)
print("k=1 ->", select_exemplars(features, 1), "closest to mean:", int(np.argmin(np.linalg.norm(features - mean, axis=1))))

# %%
# Asking for more exemplars than there are points keeps everything, and
# duplicated points never yield the same index twice.
print("k=50 keeps", len(select_exemplars(features, 50)), "rows")
print("duplicates:", select_exemplars(np.zeros((6, 2)), 3))
