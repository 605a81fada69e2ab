"""
Balancing a flow matrix two ways
================================

A small origin-destination table is scaled to bi-stochastic form first
by Sinkhorn-Knopp (the Kullback-Leibler solution) and then by Euclidean
projection onto the Birkhoff polytope. The two results keep the same row
and column sums but look very different.
"""

# %%
# A toy table: five regions, empty diagonal, one dominant exchange.
import numpy as np

from flowbalance import (
    DivergenceKind,
    FlowMatrix,
    bistochastic_deviation,
    bregman_divergence,
    sinkhorn_knopp,
    squared_norm_bistochastize,
)

rng = np.random.default_rng(0)
a = rng.integers(1, 50, size=(5, 5)).astype(float)
a[0, 1] = a[1, 0] = 900.0
np.fill_diagonal(a, 0.0)
flows = FlowMatrix(a, ["01001", "01003", "01005", "13001", "13003"])
print(flows.entries)

# %%
# Sinkhorn-Knopp keeps every non-zero cell positive: it only rescales rows
# and columns.
sk, sk_report = sinkhorn_knopp(flows)
np.set_printoptions(precision=4, suppress=True)
print(sk.entries)
print(sk_report)

# %%
# The squared-norm projection is free to zero out cells, and with one big
# exchange it pushes the matrix toward a permutation.
sq, sq_report = squared_norm_bistochastize(flows)
print(sq.entries)
print(sq_report)
print("zero cells:", int(np.sum(sq.entries == 0)), "vs", int(np.sum(sk.entries == 0)))

# %%
# Each result is optimal for its own divergence, not for the other one.
for name, b in (("sk", sk), ("sqnorm", sq)):
    print(name,
          "deviation", f"{bistochastic_deviation(b):.1e}",
          "sq-norm", round(bregman_divergence(DivergenceKind.SQUARED_NORM, b, flows), 4))
print("KL of sk", round(bregman_divergence(DivergenceKind.KULLBACK_LEIBLER, sk, flows), 4))
