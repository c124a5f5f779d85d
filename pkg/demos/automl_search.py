"""Search several model families on a synthetic well and print the leaderboard.

Run with ``python3 demos/automl_search.py [budget]``.
"""

import sys

from pefml import synthetic
from pefml.automl import run_automl
from pefml.metrics import evaluate
from pefml.well_data import INPUT_CURVES, TARGET_CURVE, split_dataset

budget = int(sys.argv[1]) if len(sys.argv) > 1 else 6
families = ["linear", "tree", "kernel_regression", "lsboost", "bagging", "anfis", "gpr"]

ds = synthetic.generate_synthetic_well(synthetic.random_layered_config(12, 40, seed=1))
split = split_dataset(ds, (300, 90, 90), seed=1)
X = ds.matrix(INPUT_CURVES)
y = ds.matrix([TARGET_CURVE])[:, 0]
tr, sel, hold = split.parts()

result = run_automl(X[tr], y[tr], X[sel], y[sel], families, budget, seed=1)
print(result.leaderboard.format_table(top=15))

w = result.leaderboard.winner
print(f"\nwinner: {w.family} trial {w.index} {w.params}")
res = evaluate(y[hold], result.winner_model.predict(X[hold]))
print(f"hold-out AAPE {res.aape_percent:.2f}%, R {res.pearson_r:.3f}")
