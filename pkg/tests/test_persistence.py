import json

import numpy as np
import pytest

from pefml.automl import FAMILY_ORDER, default_space, fit_family
from pefml.errors import ModelError
from pefml.persistence import (
    FORMAT_VERSION,
    data_fingerprint,
    dumps,
    from_envelope,
    load_model,
    save_model,
    to_envelope,
)
from pefml.preprocess import Normalization


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(8)
    X = rng.uniform([1.9, 0.0, 10.0, 40.0, 70.0], [2.9, 0.4, 150.0, 140.0, 250.0], (80, 5))
    y = 2.0 + 3.0 * (X[:, 0] - 1.9) + 0.01 * X[:, 2] + rng.normal(0, 0.05, 80)
    norm = Normalization.fit(X, y)
    models = {}
    for family in FAMILY_ORDER:
        space = default_space(family)
        params = dict(space.sample(np.random.default_rng(1)), **space.fixed)
        if family == "ann":
            params["max_epochs"] = 10
        if family == "anfis":
            params["epochs"] = 10
        models[family] = fit_family(family, params, X, y, norm, seed=2)
    return models, X


@pytest.mark.parametrize("family", FAMILY_ORDER)
def test_round_trip_predictions(fitted, family, tmp_path):
    models, X = fitted
    model = models[family]
    path = tmp_path / "model.json"
    save_model(model, path, {"seed": 2})
    loaded = load_model(path)
    assert loaded.family == family
    rng = np.random.default_rng(99)
    lo, hi = X.min(axis=0), X.max(axis=0)
    Q = rng.uniform(lo - 0.1 * (hi - lo), hi + 0.1 * (hi - lo), (1000, X.shape[1]))
    a, b = model.predict(Q), loaded.predict(Q)
    assert np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)) <= 1e-12
    # saving the reloaded model gives the same bytes
    again = tmp_path / "again.json"
    save_model(loaded, again, {"seed": 2})
    assert again.read_bytes() == path.read_bytes()


def test_gpr_intervals_survive(fitted, tmp_path):
    models, X = fitted
    save_model(models["gpr"], tmp_path / "g.json")
    loaded = load_model(tmp_path / "g.json")
    a, b = models["gpr"].predict(X[:50], level=0.99), loaded.predict(X[:50], level=0.99)
    np.testing.assert_allclose(b.std, a.std, rtol=1e-12)


def test_envelope_fields(fitted):
    env = to_envelope(fitted[0]["linear"], {"seed": 4})
    assert env["format_version"] == FORMAT_VERSION
    assert env["family"] == "linear"
    assert env["metadata"] == {"seed": 4}
    text = dumps(env)
    assert json.loads(text) == env
    assert text == dumps(json.loads(text))


def test_envelope_errors(fitted, tmp_path):
    env = to_envelope(fitted[0]["linear"])
    with pytest.raises(ModelError, match="unsupported model version"):
        from_envelope(dict(env, format_version=99))
    with pytest.raises(ModelError, match="unknown model family"):
        from_envelope(dict(env, family="xgboost"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelError, match="corrupt model"):
        load_model(bad)


def test_gpr_tamper_detected(fitted):
    env = to_envelope(fitted[0]["gpr"])
    env["payload"]["dual_weights"][0] += 1.0
    with pytest.raises(ModelError, match="corrupt model"):
        from_envelope(env)


def test_fingerprint():
    a = np.arange(6.0).reshape(2, 3)
    assert data_fingerprint(a) == data_fingerprint(a.copy())
    assert data_fingerprint(a) != data_fingerprint(a.reshape(3, 2))
    assert data_fingerprint(a) != data_fingerprint(a + np.eye(2, 3) * 1e-12)
