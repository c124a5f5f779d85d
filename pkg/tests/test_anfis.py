import math

import numpy as np
import pytest

from pefml.anfis import (
    AnfisModel,
    Cluster,
    SubtractiveConfig,
    build_fis,
    fit_anfis,
    infer,
    normalized_strengths,
    subtractive_clustering,
    train_anfis,
)
from pefml.errors import ArityError, DataError, ModelError
from pefml.metrics import aape
from pefml.preprocess import Normalization


def smooth(X):
    return 2.0 + np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])


def test_config_validation():
    for kw in [{"radius": 0.0}, {"radius": 1.5}, {"reject_ratio": 0.6}, {"squash_factor": 0.9}, {"max_clusters": 0}]:
        with pytest.raises(DataError):
            SubtractiveConfig(**kw)


def test_single_point():
    (c,) = subtractive_clustering(np.array([[0.3, 0.7]]))
    assert c.potential_at_selection == 1.0
    assert np.array_equal(c.center, [0.3, 0.7])
    with pytest.raises(DataError, match="no data"):
        subtractive_clustering(np.zeros((0, 2)))


def test_two_blobs(rng):
    X = np.concatenate([rng.normal(0.2, 0.01, 40), rng.normal(0.8, 0.01, 40)])[:, None]
    clusters = subtractive_clustering(X, SubtractiveConfig(radius=0.3))
    assert len(clusters) == 2
    found = sorted(float(c.center[0]) for c in clusters)
    assert abs(found[0] - X[:40].mean()) < 0.05
    assert abs(found[1] - X[40:].mean()) < 0.05


def test_duplicated_point_selected_first(rng):
    X = rng.uniform(size=(30, 2))
    X = np.vstack([X, np.repeat(X[[17]], 4, axis=0)])
    # brute-force potentials: the duplicate collects its self-term five times
    P = [sum(math.exp(-4 * sum((a - b) ** 2 for a, b in zip(xi, xj)) / 0.139**2) for xj in X) for xi in X]
    assert int(np.argmax(P)) == 17
    clusters = subtractive_clustering(X)
    assert np.array_equal(clusters[0].center, X[17])
    assert clusters[0].potential_at_selection == pytest.approx(max(P), rel=1e-12)


def test_cluster_invariants(rng):
    X = rng.uniform(size=(200, 3))
    clusters = subtractive_clustering(X, SubtractiveConfig(radius=0.4))
    pots = [c.potential_at_selection for c in clusters]
    assert all(b <= a for a, b in zip(pots, pots[1:]))
    for c in clusters:
        assert np.array_equal(c.center, X[c.index])
    assert len(subtractive_clustering(X, SubtractiveConfig(radius=0.1, max_clusters=3))) == 3


def test_single_cluster_is_ols(rng):
    X = rng.uniform(size=(50, 2))
    y = rng.normal(size=50)
    model = build_fis([Cluster(X[0], 1.0, 0)], X, y, radius=0.5)
    ols = np.linalg.lstsq(np.hstack([X, np.ones((50, 1))]), y, rcond=None)[0]
    np.testing.assert_allclose(model.consequents[0], ols, rtol=1e-10, atol=1e-12)
    assert model.n_rules == 1


def test_widths_formula(rng):
    X = np.vstack([[0.0, 0.0], [1.0, 1.0], rng.uniform(size=(20, 2))])
    y = rng.normal(size=22)
    clusters = subtractive_clustering(X, SubtractiveConfig(radius=0.3))
    model = build_fis(clusters, X, y, radius=0.3)
    assert model.n_rules == len(clusters)
    np.testing.assert_allclose(model.widths, 0.3 / math.sqrt(8), rtol=1e-15)
    with pytest.raises(DataError):
        build_fis([], X, y)


def test_single_rule_inference():
    m = AnfisModel([[0.5, 0.5]], [[0.1, 0.2]], [[2.0, -1.0, 0.25]])
    assert infer(m, [3.0, 1.0]) == 2.0 * 3.0 - 1.0 + 0.25
    with pytest.raises(ArityError):
        infer(m, [1.0])


def test_symmetric_rules_average():
    m = AnfisModel([[0.2], [0.8]], [[0.1], [0.1]], [[1.0, 0.0], [-2.0, 3.0]])
    x = 0.5
    assert infer(m, [x]) == pytest.approx(0.5 * ((1.0 * x) + (-2.0 * x + 3.0)), rel=1e-15)


def brute_infer(centers, widths, q, x):
    num = den = 0.0
    for c, s, a in zip(centers, widths, q):
        w = math.prod(math.exp(-((xj - cj) ** 2) / (2 * sj * sj)) for xj, cj, sj in zip(x, c, s))
        num += w * (sum(aj * xj for aj, xj in zip(a[:-1], x)) + a[-1])
        den += w
    return num / den


def test_three_rule_oracle(rng):
    for _ in range(20):
        c = rng.uniform(size=(3, 2))
        s = rng.uniform(0.2, 0.6, (3, 2))
        q = rng.normal(size=(3, 3))
        m = AnfisModel(c, s, q)
        for x in rng.uniform(size=(10, 2)):
            assert infer(m, x) == pytest.approx(brute_infer(c, s, q, x), rel=1e-12, abs=1e-12)


def test_strengths_sum_to_one_far_away(rng):
    c = rng.uniform(size=(4, 2))
    s = np.full((4, 2), 1e-3)
    wn = normalized_strengths(c, s, np.array([[50.0, -50.0], [0.5, 0.5]]))
    np.testing.assert_allclose(wn.sum(axis=1), 1.0, rtol=0, atol=1e-15)


def test_no_rule_coverage():
    m = AnfisModel([[0.0]], [[1.0]], [[1.0, 0.0]])
    with pytest.raises(ModelError, match="no rule coverage"):
        infer(m, [np.inf])


def test_lse_phase_never_increases_rmse(rng):
    X = rng.uniform(size=(150, 2))
    y = smooth(X)
    norm = Normalization.fit(X, y)
    model = fit_anfis(X, y, SubtractiveConfig(radius=0.3), epochs=30, normalization=norm)
    assert len(model.lse_trace) == 30 == len(model.history)
    assert all(after <= before * (1 + 1e-12) + 1e-15 for before, after in model.lse_trace)
    assert np.all(model.widths >= 1e-4)


def test_training_halves_test_error():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(400, 2))
    y = smooth(X)
    Xtr, ytr, Xte, yte = X[:300], y[:300], X[300:], y[300:]
    norm = Normalization.fit(Xtr, ytr)
    Xn = (Xtr - norm.inputs.lo) / (norm.inputs.hi - norm.inputs.lo)
    start = build_fis(subtractive_clustering(Xn, SubtractiveConfig(radius=0.3)), Xtr, ytr, 0.3, norm)
    trained = train_anfis(start, Xtr, ytr, epochs=200)
    assert aape(yte, trained.predict(Xte)) <= 0.5 * aape(yte, start.predict(Xte))


def test_zero_epochs_identity(rng):
    X = rng.uniform(size=(40, 2))
    y = smooth(X)
    model = build_fis(subtractive_clustering(X, SubtractiveConfig(radius=0.5)), X, y, 0.5)
    assert train_anfis(model, X, y, epochs=0) is model
    with pytest.raises(DataError):
        train_anfis(model, X, y, epochs=-1)
