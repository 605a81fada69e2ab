"""
Unit entries, component census and leading eigenvalues
======================================================

When the squared-norm projection lands on a face of the Birkhoff polytope,
some regions keep a single partner with weight exactly 1. Those entries
form a digraph whose strong components are fixed cycles of the flow. The
spectrum of the balanced matrix shows the same structure as eigenvalues of
modulus close to one.
"""

# %%
# A noisy permutation built from a 3-cycle and a swap, within and across states.
import numpy as np

from flowbalance import (
    FlowMatrix,
    component_census,
    leading_eigenvalues,
    squared_norm_bistochastize,
    strong_components,
    unit_entry_digraph,
    weak_components,
)

codes = ["01001", "01003", "01005", "13001", "01007", "04001", "04003"]
perm = [1, 2, 0, 4, 3, 6, 5]
rng = np.random.default_rng(11)
a = np.eye(7)[perm] * 50 + rng.uniform(0, 2, size=(7, 7))
np.fill_diagonal(a, 0.0)
b, report = squared_norm_bistochastize(FlowMatrix(a, codes))
print(report.iterations, "iterations, deviation", report.max_sum_deviation)

# %%
# Entries equal to one within 1e-9.
g = unit_entry_digraph(b)
print([(codes[s], codes[t]) for s, t, _ in g.arcs])

# %%
# Census of the strong components. The 13001/01007 swap crosses a state line.
census = component_census(strong_components(g), g, b)
print(census.size_histogram)
print("interstate:", [[codes[i] for i in sorted(census.partition.components[c])]
                      for c in census.interstate_components])
print("weak components:", len(weak_components(g)))

# %%
# Cycles show up as roots of unity in the spectrum.
spectrum = leading_eigenvalues(b, 7)
for v, r in zip(spectrum.eigenvalues, spectrum.residuals):
    print(f"{v.real:+.4f} {v.imag:+.4f}i  |v|={abs(v):.4f}  residual={r:.1e}")
