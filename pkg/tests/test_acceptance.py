"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (also
collected into the terminal summary by ``conftest.py``) before asserting.
Tolerances and runtime limits are the contractual ones; nothing is relaxed.
"""

import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from generators import csv_text, dataset_invariants_hold, mutate, random_las
from oracles import (
    aape_ref,
    denormalize_ref,
    normalize_ref,
    pearson_ref,
    rel_err,
    rmse_ref,
    stats_ref,
)
from pefml import automl, cli, gpr, metrics, synthetic
from pefml.anfis import (
    SubtractiveConfig,
    build_fis,
    subtractive_clustering,
    train_anfis,
)
from pefml.ann import (
    DIFFERENTIABLE,
    NetworkSpec,
    TrainedNetwork,
    TrainingAlgorithm,
    backprop_gradient,
    train,
)
from pefml.errors import ParseError, PefError
from pefml.ingest import DepthReorderedWarning, parse_csv, parse_las, write_las
from pefml.preprocess import Normalization, denormalize, fit_minmax, normalize
from pefml.well_data import INPUT_CURVES, TARGET_CURVE, LogCurve, compute_statistics, split_dataset

RESULTS = []


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# -- 1 ------------------------------------------------------------------------


def test_c01_formula_oracles():
    rng = np.random.default_rng(2024)
    worst = {}

    def track(key, err):
        worst[key] = max(worst.get(key, 0.0), err)

    t0 = time.perf_counter()
    for i in range(1000):
        n = int(rng.integers(5, 60))
        kind = i % 3
        if kind == 0:
            a = rng.lognormal(1.0, 0.5, n)
        elif kind == 1:
            a = rng.uniform(1.0, 14.0, n)
        else:
            a = rng.gamma(2.0, 2.0, n) + 0.1
        p = a * (1 + rng.normal(0, 0.2, n))
        al, pl = a.tolist(), p.tolist()
        track("aape", rel_err(metrics.aape(a, p), aape_ref(al, pl)))
        track("rmse", rel_err(metrics.rmse(a, p), rmse_ref(al, pl)))
        track("pearson_r", rel_err(metrics.pearson_r(a, p), pearson_ref(al, pl)))
        s = compute_statistics(LogCurve("X", "", a), LogCurve("PEF", "", p)).to_dict()
        for key, want in stats_ref(al, pl).items():
            track(f"stats.{key}", rel_err(s[key], want))
        lo, hi = min(al), max(al)
        z = normalize(a, fit_minmax(a))
        track("normalize", max(rel_err(x, r) for x, r in zip(z.tolist(), normalize_ref(al, lo, hi))))
        back = denormalize(z, fit_minmax(a))
        track("denormalize", max(rel_err(x, r) for x, r in zip(back.tolist(), denormalize_ref(z.tolist(), lo, hi))))
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = max(worst.values()) <= 1e-12 and elapsed < 5.0
    record(1, ok, f"1000 fixtures, worst rel err {worst[top]:.2e} ({top}), {elapsed:.2f} s")
    assert ok


# -- 2 ------------------------------------------------------------------------


def test_c02_pef_law():
    t0 = time.perf_counter()
    exact = synthetic.pef_from_z(10) == 1.0
    z = np.linspace(1.0, 30.0, 10_001)
    trip = np.max(np.abs(synthetic.z_from_pef(synthetic.pef_from_z(z)) - z) / z)
    grid = synthetic.pef_from_z(np.linspace(0.0, 40.0, 10_000))
    mono = bool(np.all(np.diff(grid) > 0))
    elapsed = time.perf_counter() - t0
    ok = exact and trip <= 1e-12 and mono and elapsed < 1.0
    record(2, ok, f"pef(10)==1 {exact}, round trip {trip:.1e}, monotone {mono}, {elapsed:.3f} s")
    assert ok


# -- 3 ------------------------------------------------------------------------


def test_c03_gpr_interpolation():
    t0 = time.perf_counter()
    ds = synthetic.generate_synthetic_well(synthetic.default_config(seed=1))
    X = ds.matrix(INPUT_CURVES)
    y = ds.matrix([TARGET_CURVE])[:, 0]
    _, first = np.unique(X, axis=0, return_index=True)
    first = np.sort(first)
    idx = first[:: len(first) // 200][:200]
    X, y = X[idx], y[idx]
    assert np.unique(X, axis=0).shape[0] == 200
    norm = Normalization.fit(X, y)
    hp = gpr.GprHyperparams(gpr.KernelSpec("exponential", 0.602, 1.0), 1e-10, "constant")
    p = gpr.predict_gpr(gpr.fit_gpr(X, y, hp, norm), X)
    err = np.max(np.abs(p.mean - y) / np.abs(y))
    std_n = np.max(p.std / norm.target.span)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-6 and std_n <= 1e-4 and elapsed < 5.0
    record(3, ok, f"max rel err {err:.1e}, max std {std_n:.1e} (normalized), {elapsed:.2f} s")
    assert ok


# -- 4 ------------------------------------------------------------------------


def test_c04_interval_calibration():
    t0 = time.perf_counter()
    rows = []
    for seed in range(5):
        # targets drawn from the same GP the model assumes, noise std 0.05
        X, y = synthetic.sample_gp_dataset(3000, length_scale=0.3, noise_std=0.05, seed=seed)
        hp = gpr.GprHyperparams(gpr.KernelSpec("exponential", 0.3, 1.0), 0.05, "constant")
        model = gpr.fit_gpr(X[:1000], y[:1000], hp)
        out = []
        for level in (0.95, 0.99):
            p = gpr.predict_gpr(model, X[1000:], level)
            out.append(metrics.outside_ci_fraction(y[1000:], p.lower, p.upper))
        rows.append(out)
    elapsed = time.perf_counter() - t0
    ok95 = all(2.0 <= r[0] <= 8.0 for r in rows)
    ok99 = all(0.2 <= r[1] <= 2.5 for r in rows)
    ok = ok95 and ok99 and elapsed < 60.0
    shown = ", ".join(f"{a:.2f}/{b:.2f}" for a, b in rows)
    record(4, ok, f"outside 95%/99% per seed: {shown} (percent), {elapsed:.1f} s")
    assert ok


# -- 5 ------------------------------------------------------------------------

SUITE_ANN = {
    "layers": 2,
    "neurons_1": 16,
    "neurons_2": 20,
    "transfer": "logsig",
    "algorithm": "bayesian_regularization",
    "max_epochs": 300,
}
SUITE_ANFIS = {"radius": 0.139, "epochs": 200, "max_clusters": 100}


def suite_scores(seed):
    """Train/test AAPE of GPR, ANN and ANFIS on the standard noisy suite."""
    ds = synthetic.generate_synthetic_well(synthetic.standard_suite_config(seed))
    n = ds.row_count
    a, b = round(n * 0.585), round(n * 0.106)
    split = split_dataset(ds, (a, b, n - a - b), seed=seed)
    X = ds.matrix(INPUT_CURVES)
    y = ds.matrix([TARGET_CURVE])[:, 0]
    Xtr, ytr = X[split.train_indices], y[split.train_indices]
    Xte, yte = X[split.test_indices], y[split.test_indices]
    norm = Normalization.fit(Xtr, ytr)
    out = {}
    for family, params in (("gpr", {}), ("ann", SUITE_ANN), ("anfis", SUITE_ANFIS)):
        m = automl.fit_family(family, params, Xtr, ytr, norm, seed)
        out[family] = (metrics.aape(ytr, m.predict(Xtr)), metrics.aape(yte, m.predict(Xte)))
    return out


@pytest.mark.slow
def test_c05_fit_signatures():
    t0 = time.perf_counter()
    runs = [suite_scores(seed) for seed in range(5)]
    first = runs[0]
    gpr_ratio = first["gpr"][0] / first["gpr"][1]
    tr, te = first["anfis"]
    anfis_gap = abs(tr - te) / min(tr, te)
    ordered = sum(r["gpr"][1] < r["ann"][1] < r["anfis"][1] for r in runs)
    elapsed = time.perf_counter() - t0
    ok = gpr_ratio < 0.5 and anfis_gap < 0.3 and ordered >= 4
    tests = ", ".join(f"{r['gpr'][1]:.2f}<{r['ann'][1]:.2f}<{r['anfis'][1]:.2f}" for r in runs)
    record(
        5,
        ok,
        f"GPR train/test ratio {gpr_ratio:.3f}, ANFIS gap {100 * anfis_gap:.1f}%, "
        f"ordering held in {ordered}/5 seeds (test AAPE GPR<ANN<ANFIS: {tests}), {elapsed:.0f} s",
    )
    assert ok


# -- 6 ------------------------------------------------------------------------


def fd_gradient(net, X, y, h=1e-6):
    def loss(theta):
        r = TrainedNetwork(net.spec, theta).predict(X) - y
        return 0.5 * r @ r

    g = np.empty(net.theta.size)
    for k in range(g.size):
        e = np.zeros(g.size)
        e[k] = h
        g[k] = (loss(net.theta + e) - loss(net.theta - e)) / (2 * h)
    return g


def test_c06_gradient_check():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    worst = 0.0
    covered = set()
    for i in range(20):
        depth = 1 + i % 3
        transfers = tuple(DIFFERENTIABLE[(i + k) % len(DIFFERENTIABLE)] for k in range(depth))
        covered.update((t, depth) for t in transfers)
        spec = NetworkSpec(3, tuple((int(rng.integers(5, 9)), t) for t in transfers))
        net = TrainedNetwork(spec, rng.normal(0, 0.7, spec.n_params))
        X = rng.uniform(-1, 1, (12, 3))
        y = rng.normal(size=12)
        g = backprop_gradient(net, X, y)
        fd = fd_gradient(net, X, y)
        worst = max(worst, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
    elapsed = time.perf_counter() - t0
    every_transfer = {t for t, _ in covered} == set(DIFFERENTIABLE)
    ok = worst < 1e-6 and every_transfer and elapsed < 10.0
    record(6, ok, f"20 nets, all transfers {every_transfer}, worst rel err {worst:.1e}, {elapsed:.2f} s")
    assert ok


# -- 7 ------------------------------------------------------------------------


def test_c07_training_convergence():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    X = rng.uniform(0, 1, (60, 2))
    y = 2 * X[:, 0] - X[:, 1] + 0.5
    spec = NetworkSpec(2, ((5, "purelin"),))
    errs = {}
    for name in ("levenberg_marquardt", "bfgs"):
        net = train(spec, X, y, TrainingAlgorithm(name, max_epochs=50), seed=7)
        errs[name] = metrics.rmse(y, net.predict(X))
    Xs = rng.uniform(0, 1, (150, 2))
    ys = 1.0 + np.sin(3 * Xs[:, 0]) * Xs[:, 1]
    br = train(
        NetworkSpec(2, ((16, "logsig"), (20, "logsig"))),
        Xs,
        ys,
        TrainingAlgorithm("bayesian_regularization", max_epochs=100),
        seed=0,
        normalization=Normalization.fit(Xs, ys),
    )
    P = br.trace["n_params"]
    gammas = br.trace["gamma"]
    in_range = len(gammas) > 0 and all(0 <= g <= P for g in gammas)
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-6 and in_range and elapsed < 10.0
    record(
        7,
        ok,
        f"RMSE LM {errs['levenberg_marquardt']:.1e}, BFGS {errs['bfgs']:.1e}; "
        f"BR gamma in [0, {P}] over {len(gammas)} updates {in_range}, {elapsed:.2f} s",
    )
    assert ok


# -- 8 ------------------------------------------------------------------------


def test_c08_subtractive_clustering():
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    X = np.concatenate([rng.normal(0.2, 0.01, 50), rng.normal(0.8, 0.01, 50)])[:, None]
    clusters = subtractive_clustering(X, SubtractiveConfig(radius=0.3))
    centers = sorted(float(c.center[0]) for c in clusters)
    near = len(centers) == 2 and abs(centers[0] - X[:50].mean()) < 0.05 and abs(centers[1] - X[50:].mean()) < 0.05
    Y = rng.uniform(size=(300, 3))
    many = subtractive_clustering(Y, SubtractiveConfig(radius=0.3))
    pots = [c.potential_at_selection for c in many]
    non_increasing = all(b <= a for a, b in zip(pots, pots[1:]))
    rows = all(np.array_equal(c.center, Y[c.index]) for c in many) and all(
        np.array_equal(c.center, X[c.index]) for c in clusters
    )
    elapsed = time.perf_counter() - t0
    ok = near and non_increasing and rows and elapsed < 2.0
    record(
        8,
        ok,
        f"{len(clusters)} clusters at {', '.join(f'{c:.3f}' for c in centers)}; "
        f"{len(many)} potentials non-increasing {non_increasing}; centers are rows {rows}, {elapsed:.2f} s",
    )
    assert ok


# -- 9 ------------------------------------------------------------------------


def test_c09_anfis_training():
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    X = rng.uniform(size=(400, 2))
    y = 2.0 + np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])
    Xtr, ytr, Xte, yte = X[:300], y[:300], X[300:], y[300:]
    norm = Normalization.fit(Xtr, ytr)
    Xn = normalize(Xtr, norm.inputs)
    start = build_fis(subtractive_clustering(Xn, SubtractiveConfig(radius=0.3)), Xtr, ytr, 0.3, norm)
    trained = train_anfis(start, Xtr, ytr, epochs=200)
    lse_ok = all(after <= before for before, after in trained.lse_trace)
    a0 = metrics.aape(yte, start.predict(Xte))
    a1 = metrics.aape(yte, trained.predict(Xte))
    elapsed = time.perf_counter() - t0
    ok = lse_ok and a1 <= 0.5 * a0 and elapsed < 30.0
    record(9, ok, f"LSE never increased RMSE {lse_ok}; test AAPE {a0:.3f} -> {a1:.3f}, {elapsed:.2f} s")
    assert ok


# -- 10 -----------------------------------------------------------------------


@pytest.mark.slow
def test_c10_automl_recovery():
    t0 = time.perf_counter()
    winners = []
    for seed in range(10):
        X, y = synthetic.sample_gp_dataset(300, seed=seed)
        r = automl.run_automl(X[:200], y[:200], X[200:], y[200:], ["linear", "tree", "gpr"], 15, seed=seed)
        winners.append(r.leaderboard.winner.family)
    X, y = synthetic.linear_dataset(200, seed=0)
    lin = automl.run_automl(X[:150], y[:150], X[150:], y[150:], ["linear", "tree", "gpr"], 15, seed=0)
    obj = lin.leaderboard.winner.objective
    elapsed = time.perf_counter() - t0
    n_gpr = winners.count("gpr")
    ok = n_gpr >= 9 and obj < 0.1 and elapsed < 600.0
    record(
        10,
        ok,
        f"GPR won {n_gpr}/10 seeds; linear data winner {lin.leaderboard.winner.family} at {obj:.1e}% AAPE, {elapsed:.1f} s",
    )
    assert ok


# -- 11 -----------------------------------------------------------------------

WRAPPED = """~VERSION INFORMATION
VERS.   2.0 : CWLS LOG ASCII STANDARD
WRAP.   YES : MULTIPLE LINES PER DEPTH STEP
~CURVE INFORMATION
DEPT.M      : DEPTH
GR  .GAPI   : GAMMA RAY
~A
100.0  45.5
"""


def test_c11_parser_robustness():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    trips = sum(parse_las(write_las(las)) == las for las in (random_las(rng) for _ in range(100)))

    def rejected(text, reason):
        try:
            parse_las(text)
        except ParseError as exc:
            return exc.reason == reason and exc.line is not None
        return False

    wrap = rejected(WRAPPED, "wrapped LAS unsupported")
    arity = rejected(WRAPPED.replace("YES", "NO ").replace("100.0  45.5", "100.0  45.5\n100.5"), "data row arity")
    violations = rejected_csv = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DepthReorderedWarning)
        for _ in range(10_000):
            text = mutate(csv_text(rng), rng)
            try:
                ds = parse_csv(text)
            except PefError:
                rejected_csv += 1
                continue
            violations += not dataset_invariants_hold(ds)
    elapsed = time.perf_counter() - t0
    ok = trips == 100 and wrap and arity and violations == 0 and elapsed < 30.0
    record(
        11,
        ok,
        f"{trips}/100 LAS round trips; WRAP rejected {wrap}; arity rejected {arity}; "
        f"10000 CSV mutations, {rejected_csv} rejected, {violations} invariant violations, {elapsed:.1f} s",
    )
    assert ok


# -- 12 -----------------------------------------------------------------------

PIPELINE_FAMILIES = "linear,tree,kernel_regression,svr,lsboost,bagging,anfis,gpr"


def pipeline(out):
    out = Path(out)
    steps = [
        ["synth", "--layers", "8", "--rows", "30"],
        ["split", str(out / "synthetic.csv")],
        ["automl", str(out / "synthetic.csv"), "--split", str(out / "split.json"), "--families", PIPELINE_FAMILIES, "--budget", "4"],
        ["predict", str(out / "model.json"), str(out / "validation.csv"), "--level", "0.95"],
        ["evaluate", str(out / "predictions.csv"), str(out / "validation.csv")],
        ["report", str(out / "predictions.csv"), str(out / "validation.csv")],
    ]
    for step in steps:
        code = cli.main(step + ["--seed", "12", "--out", str(out)])
        if code != 0:
            return None
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.mark.slow
def test_c12_end_to_end_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    a = pipeline(tmp_path / "a")
    b = pipeline(tmp_path / "b")
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    ran = a is not None and b is not None
    same = ran and a == b
    expected = {"synthetic.csv", "split.json", "leaderboard.json", "model.json", "predictions.csv", "evaluation.json", "crossplot.svg"}
    complete = ran and expected <= set(a)
    ok = same and complete and elapsed < 900.0
    record(12, ok, f"pipeline ran twice {ran}; {len(a or {})} files byte-identical {same}, {elapsed:.1f} s")
    assert ok
