"""Exact Gaussian process regression with an explicit mean basis.

The model works in normalized units: inputs and target are min-max scaled
with the stored :class:`~pefml.preprocess.Normalization` before fitting, and
predictions are mapped back to target units. Hyperparameters (length scale,
noise std) are therefore expressed in normalized units.

Notation (n training points, ``H`` the basis design matrix)::

    A     = K + (noise_std**2 + jitter) I = L L^T
    beta  = (H^T A^-1 H)^-1 H^T A^-1 y
    alpha = A^-1 (y - H beta)
    mean* = h*^T beta + k*^T alpha
    var*  = k** - k*^T A^-1 k* + noise_std**2
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .errors import ArityError, DataError, ModelError
from .preprocess import Normalization, denormalize, normalize

KERNELS = ("exponential", "squared_exponential")
BASES = ("zero", "constant", "linear")

JITTER_MAX = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    family: str = "exponential"
    length_scale: float = 0.602
    signal_std: float = 1.0

    def __post_init__(self):
        if self.family not in KERNELS:
            raise DataError("unknown kernel", self.family)
        if not (self.length_scale > 0 and self.signal_std > 0):
            raise DataError("invalid kernel", "length_scale and signal_std must be positive")


@dataclass(frozen=True)
class GprHyperparams:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    noise_std: float = 0.032
    basis: str = "constant"
    jitter: float = 1e-10

    def __post_init__(self):
        if self.basis not in BASES:
            raise DataError("unknown basis", self.basis)
        if not (self.noise_std >= 0 and self.jitter >= 0):
            raise DataError("invalid hyperparameters", "noise_std and jitter must be non-negative")

    def to_dict(self):
        return {
            "kernel": self.kernel.family,
            "length_scale": self.kernel.length_scale,
            "signal_std": self.kernel.signal_std,
            "noise_std": self.noise_std,
            "basis": self.basis,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d):
        k = KernelSpec(d.get("kernel", "exponential"), float(d.get("length_scale", 0.602)), float(d.get("signal_std", 1.0)))
        return cls(k, float(d.get("noise_std", 0.032)), d.get("basis", "constant"), float(d.get("jitter", 1e-10)))


def _apply(spec, r):
    s2 = spec.signal_std**2
    if spec.family == "exponential":
        return s2 * np.exp(-r / spec.length_scale)
    return s2 * np.exp(-(r**2) / (2.0 * spec.length_scale**2))


def kernel_eval(spec, x, x2):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x2 = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    if x.shape != x2.shape:
        raise ArityError(f"points of dimension {x.size} and {x2.size}")
    return float(_apply(spec, np.sqrt(np.sum((x - x2) ** 2))))


def kernel_matrix(spec, A, B):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] != B.shape[1]:
        raise ArityError(f"dimensions {A.shape[1]} and {B.shape[1]}")
    return _apply(spec, cdist(A, B))


def basis_matrix(basis, X):
    n = X.shape[0]
    if basis == "zero":
        return np.zeros((n, 0))
    if basis == "constant":
        return np.ones((n, 1))
    return np.column_stack([np.ones(n), X])


def _cholesky(A, jitter):
    """Cholesky of ``A + jitter I``, doubling a positive jitter up to ``JITTER_MAX``.

    Returns ``(L, jitter_used)`` or ``(None, last_jitter)`` on failure.
    """
    eye = np.eye(A.shape[0])
    j = jitter
    while True:
        try:
            L = np.linalg.cholesky(A + j * eye)
            if np.all(np.diag(L) > 0):
                return L, j
        except np.linalg.LinAlgError:
            pass
        if j <= 0 or j * 2 > JITTER_MAX:
            return None, j
        j *= 2


@dataclass(frozen=True, eq=False)
class GprModel:
    family = "gpr"

    training_inputs: np.ndarray
    training_targets: np.ndarray
    hyperparams: GprHyperparams
    cholesky_factor: np.ndarray
    dual_weights: np.ndarray
    basis_coefficients: np.ndarray
    normalization: Normalization
    jitter_used: float = 0.0

    @property
    def input_dim(self):
        return self.training_inputs.shape[1]

    def predict(self, X, level=None):
        """Denormalized mean, or a :class:`PredictionWithCI` when ``level`` is set."""
        if level is None:
            return predict_gpr(self, X, 0.95).mean
        return predict_gpr(self, X, level)

    def to_payload(self):
        return {
            "hyperparams": self.hyperparams.to_dict(),
            "training_inputs": self.training_inputs.tolist(),
            "training_targets": self.training_targets.tolist(),
            "dual_weights": self.dual_weights.tolist(),
            "basis_coefficients": self.basis_coefficients.tolist(),
            "dual_weights_sha256": _checksum(self.dual_weights),
        }

    @classmethod
    def from_payload(cls, payload, normalization):
        hp = GprHyperparams.from_dict(payload["hyperparams"])
        X = np.asarray(payload["training_inputs"], dtype=np.float64).reshape(len(payload["training_inputs"]), -1)
        y = np.asarray(payload["training_targets"], dtype=np.float64)
        alpha = np.asarray(payload["dual_weights"], dtype=np.float64)
        beta = np.asarray(payload["basis_coefficients"], dtype=np.float64)
        if _checksum(alpha) != payload.get("dual_weights_sha256"):
            raise ModelError("corrupt model", "dual weight checksum mismatch")
        refit = _fit_normalized(X, y, hp)
        if not np.allclose(refit.dual_weights, alpha, rtol=1e-6, atol=1e-8 * max(1.0, np.abs(alpha).max(initial=0))):
            raise ModelError("corrupt model", "dual weights inconsistent with training data")
        return replace(refit, dual_weights=alpha, basis_coefficients=beta, normalization=normalization)


def _checksum(a):
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()


def _fit_normalized(X, y, hp):
    n = X.shape[0]
    K = kernel_matrix(hp.kernel, X, X)
    A = K + hp.noise_std**2 * np.eye(n)
    L, j = _cholesky(A, hp.jitter)
    if L is None:
        hint = ""
        if np.unique(X, axis=0).shape[0] < n:
            hint = "; training inputs contain duplicate rows, use noise_std > 0"
        raise ModelError("kernel matrix not positive definite", f"jitter up to {j:g}{hint}")
    H = basis_matrix(hp.basis, X)
    if H.shape[1]:
        AiH = cho_solve((L, True), H)
        Aiy = cho_solve((L, True), y)
        beta = np.linalg.lstsq(H.T @ AiH, H.T @ Aiy, rcond=None)[0]
    else:
        beta = np.zeros(0)
    alpha = cho_solve((L, True), y - H @ beta)
    return GprModel(X, y, hp, L, alpha, beta, Normalization.identity(X.shape[1]), j)


def fit_gpr(X, y, hp=None, normalization=None):
    """Fit an exact GP.

    ``normalization`` maps raw ``X``/``y`` into the units the hyperparameters
    refer to; ``None`` means the data are used as given.
    """
    hp = hp or GprHyperparams()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise ArityError(f"{X.shape[0]} input rows, {y.size} targets")
    if y.size < 1:
        raise DataError("no data")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite input", "X and y must be finite")
    if normalization is not None:
        X = normalize(X, normalization.inputs)
        y = normalize(y, normalization.target)
    model = _fit_normalized(X, y, hp)
    if normalization is not None:
        model = replace(model, normalization=normalization)
    return model


@dataclass(frozen=True, eq=False)
class PredictionWithCI:
    mean: np.ndarray
    std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def z_value(level):
    """Two-sided standard-normal quantile, e.g. 1.959964 for 0.95."""
    if not 0 < level < 1:
        raise DataError("invalid level", str(level))
    return float(norm.ppf(0.5 + level / 2.0))


def predict_latent(model, Xn):
    """Mean and latent (noise-free) variance at normalized query points."""
    Ks = kernel_matrix(model.hyperparams.kernel, Xn, model.training_inputs)
    mean = basis_matrix(model.hyperparams.basis, Xn) @ model.basis_coefficients + Ks @ model.dual_weights
    v = solve_triangular(model.cholesky_factor, Ks.T, lower=True)
    var = model.hyperparams.kernel.signal_std**2 - np.sum(v * v, axis=0)
    return mean, var


def predict_gpr(model, X, level=0.95):
    """Predictive mean and an observation interval (noise variance included)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        e = np.zeros(0)
        return PredictionWithCI(e, e, e, e, level)
    if X.shape[1] != model.input_dim:
        raise ArityError(f"query dimension {X.shape[1]}, model dimension {model.input_dim}")
    Xn = normalize(X, model.normalization.inputs)
    mean, var = predict_latent(model, Xn)
    var = np.maximum(var + model.hyperparams.noise_std**2, 0.0)
    std = np.sqrt(var)
    z = z_value(level)
    tn = model.normalization.target
    mean_o = denormalize(mean, tn)
    std_o = std * tn.span
    return PredictionWithCI(mean_o, std_o, mean_o - z * std_o, mean_o + z * std_o, level)


def log_marginal_likelihood(model, y=None):
    """Log evidence in normalized units; ``y`` defaults to the training targets."""
    if y is None:
        y = model.training_targets
        alpha = model.dual_weights
    else:
        y = normalize(np.asarray(y, dtype=np.float64).ravel(), model.normalization.target)
        H = basis_matrix(model.hyperparams.basis, model.training_inputs)
        alpha = cho_solve((model.cholesky_factor, True), y - H @ model.basis_coefficients)
    H = basis_matrix(model.hyperparams.basis, model.training_inputs)
    r = y - H @ model.basis_coefficients
    n = y.size
    return float(-0.5 * r @ alpha - np.sum(np.log(np.diag(model.cholesky_factor))) - 0.5 * n * np.log(2 * np.pi))
