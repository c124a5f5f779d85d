"""Train GPR, ANN and ANFIS on a synthetic well and compare their errors.

Run with ``python3 demos/compare_models.py``. Takes about a minute.
"""

import numpy as np

from pefml import automl, gpr, synthetic
from pefml.metrics import evaluate
from pefml.preprocess import Normalization
from pefml.well_data import INPUT_CURVES, TARGET_CURVE, split_dataset

SEED = 0

ds = synthetic.generate_synthetic_well(synthetic.standard_suite_config(SEED))
n = ds.row_count
n_train, n_test = round(n * 0.585), round(n * 0.106)
split = split_dataset(ds, (n_train, n_test, n - n_train - n_test), seed=SEED)

X = ds.matrix(INPUT_CURVES)
y = ds.matrix([TARGET_CURVE])[:, 0]
parts = {name: (X[idx], y[idx]) for name, idx in zip(("train", "test", "validation"), split.parts())}
norm = Normalization.fit(*parts["train"])

candidates = {
    "gpr": {},  # exponential kernel, length scale 0.602, noise 0.032
    "ann": {"layers": 2, "neurons_1": 16, "neurons_2": 20, "transfer": "logsig",
            "algorithm": "bayesian_regularization", "max_epochs": 300},
    "anfis": {"radius": 0.139, "epochs": 200, "max_clusters": 100},
}

print(f"{n} rows: {n_train} train / {n_test} test / {n - n_train - n_test} validation\n")
print(f"{'model':<6} {'train AAPE':>11} {'test AAPE':>10} {'test R':>7}")
models = {}
for family, params in candidates.items():
    m = automl.fit_family(family, params, *parts["train"], norm, seed=SEED)
    models[family] = m
    tr = evaluate(parts["train"][1], m.predict(parts["train"][0]))
    te = evaluate(parts["test"][1], m.predict(parts["test"][0]))
    print(f"{family:<6} {tr.aape_percent:>10.2f}% {te.aape_percent:>9.2f}% {te.pearson_r:>7.3f}")

# GPR intervals on the untouched validation rows
Xv, yv = parts["validation"]
print()
for level in (0.95, 0.99):
    p = gpr.predict_gpr(models["gpr"], Xv, level)
    res = evaluate(yv, p.mean, p.lower, p.upper)
    width = np.mean(p.upper - p.lower)
    print(f"GPR {level:.0%} interval: {res.outside_ci_percent:.2f}% of validation rows outside, mean width {width:.3f}")
