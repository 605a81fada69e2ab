"""
Strong-component hierarchy of a balanced matrix
===============================================

Lowering a threshold on the balanced matrix adds arcs one weight class at
a time. Regions fuse whenever they become mutually reachable, which gives
a dendrogram. Regions that join early are the most self-contained. Those
that join late trade evenly with everyone and are the "cosmopolitan" ones.
"""

# %%
# Two tight blocks joined by weak cross flows, plus one hub that talks to
# everyone a little.
import numpy as np

from flowbalance import FlowMatrix, cosmopolitan_ranking, cut_dendrogram, sinkhorn_knopp, strong_component_hierarchy
from flowbalance.graphcluster import dendrogram_to_newick

rng = np.random.default_rng(3)
n = 9
a = rng.uniform(0.5, 1.5, size=(n, n))
a[:4, :4] += 40 * rng.random((4, 4))
a[4:8, 4:8] += 40 * rng.random((4, 4))
np.fill_diagonal(a, 0.0)
codes = ["01001", "01003", "01005", "01007", "02013", "02016", "02020", "02050", "06037"]
b, _ = sinkhorn_knopp(FlowMatrix(a, codes))

# %%
# Build the hierarchy. Each level lists the clusters formed at that threshold.
d = strong_component_hierarchy(b)
for level in d.levels[:6]:
    groups = [sorted(codes[i] for i in c.members) for c in level.clusters]
    print(f"{level.threshold:.4f}", groups)

# %%
# Cutting at a threshold returns the strong components of the digraph of
# entries at or above it.
for t in (0.2, 0.05):
    part = cut_dendrogram(d, t)
    print(t, sorted(sorted(codes[i] for i in m) for m in part.components.values()))

# %%
# Ranking puts the latest joiners first; the hub leads.
for region, level in cosmopolitan_ranking(d)[:3]:
    print(region.code, level)

# %%
# Newick export for tree viewers.
print(dendrogram_to_newick(d))
