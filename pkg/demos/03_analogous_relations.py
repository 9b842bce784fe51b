"""
Spotting relations that look alike
==================================

Two relations are analogous when the cosine similarity of their mean
instance embeddings exceeds a threshold. Here the embeddings are hand-made
so the effect of the threshold is easy to follow.
"""

import numpy as np

from rationale_cre.similarity import analogous_sets, cosine_matrix

# %%
# ``followed by`` and ``follows`` point almost the same way; ``spouse`` does not.
table = {
    "followed by": np.array([0.9, 0.1, 0.05]),
    "follows": np.array([0.85, 0.15, 0.1]),
    "publisher": np.array([0.2, 0.9, 0.1]),
    "developer": np.array([0.25, 0.85, 0.2]),
    "spouse": np.array([0.05, 0.1, 0.95]),
}
labels, sims = cosine_matrix(table)
print("cosine similarities")
for name, row in zip(labels, sims):
    print(f"  {name:12s}", " ".join(f"{v:5.2f}" for v in row))

# %%
# Raising the threshold can only remove pairs.
for tau in (0.5, 0.97, 0.999):
    sets = analogous_sets(table, tau)
    pairs = sorted({tuple(sorted((a, b))) for a, peers in sets.items() for b in peers})
    print(f"tau={tau}: {pairs}")

# %%
# Scaling a vector does not change its direction, so the sets stay put.
scaled = {k: v * (10.0 if k == "follows" else 1.0) for k, v in table.items()}
print("unchanged under scaling:", analogous_sets(scaled, 0.97) == analogous_sets(table, 0.97))
