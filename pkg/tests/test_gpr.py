import math

import numpy as np
import pytest
from scipy.stats import norm

from pefml.errors import ArityError, ModelError
from pefml.gpr import (
    GprHyperparams,
    KernelSpec,
    fit_gpr,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    predict_gpr,
    predict_latent,
    z_value,
)
from pefml.preprocess import Normalization

EXP = KernelSpec("exponential", 0.602, 1.0)


def hp(noise=0.0, basis="zero", jitter=0.0, kernel=EXP):
    return GprHyperparams(kernel, noise, basis, jitter)


def test_kernel_values():
    assert kernel_eval(EXP, [0.0, 0.0], [0.0, 0.0]) == 1.0
    assert kernel_eval(KernelSpec("exponential", 0.602, 2.0), [1.0], [1.0]) == 4.0
    assert kernel_eval(EXP, [0.0], [0.602]) == pytest.approx(math.exp(-1), rel=1e-15)
    se = KernelSpec("squared_exponential", 0.5, 1.5)
    assert kernel_eval(se, [0.0, 0.0], [0.3, 0.4]) == pytest.approx(2.25 * math.exp(-0.25 / 0.5), rel=1e-15)
    x, y = np.array([0.1, 0.7]), np.array([0.4, -0.2])
    assert kernel_eval(EXP, x, y) == kernel_eval(EXP, y, x)
    with pytest.raises(ArityError):
        kernel_eval(EXP, [0.0], [0.0, 1.0])


def test_kernel_matrix_agrees_with_pointwise(rng):
    A, B = rng.uniform(size=(5, 3)), rng.uniform(size=(4, 3))
    K = kernel_matrix(EXP, A, B)
    for i in range(5):
        for j in range(4):
            assert K[i, j] == pytest.approx(kernel_eval(EXP, A[i], B[j]), rel=1e-14)


def test_single_point_absorbed_by_basis():
    m = fit_gpr([[0.3]], [2.5], hp(noise=0.032, basis="constant", jitter=1e-10))
    assert m.basis_coefficients[0] == pytest.approx(2.5)
    assert np.allclose(m.dual_weights, 0.0, atol=1e-12)


def test_two_point_closed_form():
    a, s, ell = 0.2, 1.3, 0.602
    spec = KernelSpec("exponential", ell, s)
    X, y = np.array([[-a], [a]]), np.array([1.0, 3.0])
    m = fit_gpr(X, y, hp(kernel=spec))
    s2, k = s * s, s * s * math.exp(-2 * a / ell)
    det = s2 * s2 - k * k
    alpha = np.array([s2 * y[0] - k * y[1], -k * y[0] + s2 * y[1]]) / det
    assert np.allclose(m.dual_weights, alpha, rtol=1e-10)
    assert np.allclose(predict_gpr(m, X).mean, y, rtol=1e-10)
    xs = 0.5
    ks = s2 * np.exp(-np.abs(xs - X[:, 0]) / ell)
    mean = ks @ alpha
    var = s2 - (s2 * (ks @ ks) - 2 * k * ks[0] * ks[1]) / det
    p = predict_gpr(m, [[xs]])
    assert p.mean[0] == pytest.approx(mean, rel=1e-10)
    assert p.std[0] ** 2 == pytest.approx(var, rel=1e-10)


def test_duplicate_rows_fail_without_noise():
    with pytest.raises(ModelError, match="not positive definite") as err:
        fit_gpr([[0.5], [0.5]], [1.0, 2.0], hp())
    assert "duplicate" in err.value.detail


def test_jitter_escalates(rng):
    X = np.repeat(rng.uniform(size=(3, 1)), 2, axis=0)
    m = fit_gpr(X, rng.normal(size=6), hp(jitter=1e-10))
    assert 1e-10 <= m.jitter_used <= 1e-6
    L = m.cholesky_factor
    assert np.allclose(L, np.tril(L)) and np.all(np.diag(L) > 0)


def test_interpolation_at_training_points(rng):
    X = rng.uniform(size=(60, 2))
    y = 5 + np.sin(6 * X[:, 0]) + X[:, 1]
    m = fit_gpr(X, y, hp(noise=1e-12, basis="constant", jitter=1e-10))
    mean = predict_gpr(m, X).mean
    assert np.max(np.abs(mean - y) / np.abs(y)) < 1e-6


def test_prior_reversion_far_away():
    m = fit_gpr([[0.0], [0.1]], [1.0, 2.0], hp(noise=0.1))
    p = predict_gpr(m, [[500.0]])
    assert abs(p.mean[0]) < 1e-12
    assert p.std[0] == pytest.approx(math.sqrt(1.0 + 0.01), rel=1e-12)


def test_interval_shape_and_levels(rng):
    X = rng.uniform(size=(40, 2))
    y = 3 + X.sum(1) + 0.05 * rng.normal(size=40)
    m = fit_gpr(X, y, GprHyperparams(), Normalization.fit(X, y))
    Q = rng.uniform(-0.2, 1.2, size=(100, 2))
    p95, p99 = predict_gpr(m, Q, 0.95), predict_gpr(m, Q, 0.99)
    assert np.all(p95.std >= 0)
    assert np.all(p95.lower <= p95.mean) and np.all(p95.mean <= p95.upper)
    assert np.all(p99.upper - p99.lower > p95.upper - p95.lower)
    assert z_value(0.95) == pytest.approx(1.959964, abs=1e-6)
    assert z_value(0.99) == pytest.approx(2.575829, abs=1e-6)


def test_latent_variance_not_negative(rng):
    X = rng.uniform(size=(200, 3))
    m = fit_gpr(X, rng.normal(size=200), hp(noise=0.01, basis="constant", jitter=1e-10))
    _, var = predict_latent(m, np.vstack([X, rng.uniform(size=(200, 3))]))
    assert var.min() > -1e-8


def test_gls_beta_matches_direct_formula(rng):
    X = rng.uniform(size=(30, 2))
    y = 2 + X @ [1.0, -1.0] + 0.1 * rng.normal(size=30)
    h = hp(noise=0.1, basis="linear", jitter=0.0)
    m = fit_gpr(X, y, h)
    A = kernel_matrix(EXP, X, X) + 0.01 * np.eye(30)
    H = np.column_stack([np.ones(30), X])
    Ai = np.linalg.inv(A)
    beta = np.linalg.solve(H.T @ Ai @ H, H.T @ Ai @ y)
    assert np.allclose(m.basis_coefficients, beta, rtol=1e-8)
    assert np.allclose(m.dual_weights, Ai @ (y - H @ beta), rtol=1e-7, atol=1e-9)


def test_lml_scalar_case():
    s, sn, y = 1.3, 0.2, 0.7
    m = fit_gpr([[0.0]], [y], hp(noise=sn, kernel=KernelSpec("exponential", 1.0, s)))
    v = s * s + sn * sn
    assert log_marginal_likelihood(m) == pytest.approx(-0.5 * y * y / v - 0.5 * math.log(2 * math.pi * v), rel=1e-12)


def test_lml_matches_dense_gaussian_density(rng):
    X = rng.uniform(size=(15, 2))
    y = rng.normal(size=15)
    m = fit_gpr(X, y, hp(noise=0.3))
    cov = kernel_matrix(EXP, X, X) + 0.09 * np.eye(15)
    sign, logdet = np.linalg.slogdet(cov)
    ref = -0.5 * y @ np.linalg.solve(cov, y) - 0.5 * logdet - 7.5 * math.log(2 * math.pi)
    assert log_marginal_likelihood(m) == pytest.approx(ref, rel=1e-10)


def test_lml_noise_and_permutation(rng):
    X = rng.uniform(size=(50, 1))
    y = rng.normal(size=50)
    noisy = log_marginal_likelihood(fit_gpr(X, y, hp(noise=1.0, jitter=1e-10)))
    tight = log_marginal_likelihood(fit_gpr(X, y, hp(noise=1e-9, jitter=1e-10)))
    assert noisy > tight
    perm = rng.permutation(50)
    a = log_marginal_likelihood(fit_gpr(X, y, hp(noise=0.5)))
    b = log_marginal_likelihood(fit_gpr(X[perm], y[perm], hp(noise=0.5)))
    assert a == pytest.approx(b, rel=1e-10)


def test_observation_interval_coverage(rng):
    # small calibration smoke test; the full check lives in the acceptance suite
    f = lambda X: 5 + np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])
    X = rng.uniform(size=(400, 2))
    sn = 0.1
    y = f(X) + sn * rng.normal(size=400)
    Q = rng.uniform(size=(2000, 2))
    yq = f(Q) + sn * rng.normal(size=2000)
    m = fit_gpr(X, y, GprHyperparams(KernelSpec("squared_exponential", 0.5, 1.0), sn, "constant"))
    p = predict_gpr(m, Q, 0.95)
    outside = np.mean((yq < p.lower) | (yq > p.upper))
    assert 0.02 <= outside <= 0.08
    assert 2 * norm.sf(1.959964) == pytest.approx(0.05, abs=1e-6)


def test_arity_on_predict():
    m = fit_gpr([[0.0, 1.0]], [1.0], GprHyperparams())
    with pytest.raises(ArityError):
        predict_gpr(m, [[0.0]])
    assert predict_gpr(m, np.zeros((0, 2))).mean.size == 0
