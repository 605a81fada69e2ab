"""
Running the whole pipeline
==========================

The ``flowbalance`` command chains ingest, balancing, clustering, census
and spectrum. This script writes a tiny flow file, runs the pipeline with
both balancing methods through the Python entry point and reads back the
summary.
"""

# %%
import csv
import json
import tempfile
from pathlib import Path

import numpy as np

from flowbalance.cli import main

work = Path(tempfile.mkdtemp())
rng = np.random.default_rng(5)
codes = ["01001", "01003", "01005", "13001", "13003", "13005"]
with open(work / "flows.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["origin", "dest", "flow"])
    for i, o in enumerate(codes):
        for j, t in enumerate(codes):
            if i != j:
                w.writerow([o, t, int(rng.integers(1, 500))])

# %%
# Equivalent to ``flowbalance pipeline --flows flows.csv --out-dir out --method both --cut 0.2``.
code = main(["pipeline", "--flows", str(work / "flows.csv"), "--out-dir", str(work / "out"),
             "--method", "both", "--cut", "0.2"])
print("exit code", code)
print(sorted(p.relative_to(work / "out").as_posix() for p in (work / "out").rglob("*") if p.is_file()))

# %%
summary = json.loads((work / "out" / "summary.json").read_text())
for method, entry in summary["methods"].items():
    conv = entry["convergence"]
    print(method, conv["iterations"], "iterations;", entry["unit_digraph_arcs"], "unit entries")
print(summary["correlations"])
