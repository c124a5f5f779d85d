"""First-order Sugeno fuzzy inference seeded by subtractive clustering.

Rule ``k`` fires with strength ``prod_j exp(-(x_j - c_kj)**2 / (2 s_kj**2))``
and contributes the linear consequent ``a_k . x + b_k``; the output is the
strength-weighted average. Memberships are combined in log space so that
distant queries still receive a defined (normalized) weighting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ArityError, DataError, ModelError
from .preprocess import Normalization, denormalize, normalize

MIN_WIDTH = 1e-4


@dataclass(frozen=True)
class SubtractiveConfig:
    radius: float = 0.139
    squash_factor: float = 1.25
    accept_ratio: float = 0.5
    reject_ratio: float = 0.15
    max_clusters: int = 100

    def __post_init__(self):
        if not 0 < self.radius <= 1:
            raise DataError("invalid clustering config", "radius must lie in (0, 1]")
        if not 0 < self.reject_ratio < self.accept_ratio <= 1:
            raise DataError("invalid clustering config", "need 0 < reject_ratio < accept_ratio <= 1")
        if self.squash_factor < 1:
            raise DataError("invalid clustering config", "squash_factor must be >= 1")
        if self.max_clusters < 1:
            raise DataError("invalid clustering config", "max_clusters must be >= 1")


@dataclass(frozen=True, eq=False)
class Cluster:
    center: np.ndarray
    potential_at_selection: float
    index: int


def _sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _potentials(X, radius, chunk=1024):
    a = 4.0 / radius**2
    P = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        P[s : s + chunk] = np.exp(-a * _sq_dists(X[s : s + chunk], X)).sum(1)
    return P


def subtractive_clustering(X, cfg=None):
    """Chiu's subtractive clustering on (roughly unit-scaled) data rows.

    Centers are always rows of ``X``; potentials at selection are
    non-increasing.
    """
    cfg = cfg or SubtractiveConfig()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise DataError("no data")
    ra = cfg.radius
    rb = cfg.squash_factor * ra
    P = _potentials(X, ra)
    first = int(np.argmax(P))
    p1 = P[first]
    clusters = []

    def accept(k, pk):
        clusters.append(Cluster(X[k].copy(), float(pk), k))
        P[:] -= pk * np.exp(-4.0 / rb**2 * ((X - X[k]) ** 2).sum(1))

    accept(first, p1)
    while len(clusters) < cfg.max_clusters:
        k = int(np.argmax(P))
        pk = P[k]
        if pk > cfg.accept_ratio * p1:
            accept(k, pk)
        elif pk < cfg.reject_ratio * p1:
            break
        else:
            centers = np.array([c.center for c in clusters])
            d_min = np.sqrt(((centers - X[k]) ** 2).sum(1).min())
            if d_min / ra + pk / p1 >= 1:
                accept(k, pk)
            else:
                P[k] = 0.0
    return clusters


@dataclass(frozen=True)
class FuzzyRule:
    centers: np.ndarray
    widths: np.ndarray
    coefficients: np.ndarray
    constant: float


@dataclass(frozen=True, eq=False)
class AnfisModel:
    """Rule base stored as arrays: ``centers``/``widths`` are ``K x d``,
    ``consequents`` is ``K x (d + 1)`` with the constant last."""

    family = "anfis"

    centers: np.ndarray
    widths: np.ndarray
    consequents: np.ndarray
    normalization: Normalization = None
    history: tuple = ()
    lse_trace: tuple = ()

    def __post_init__(self):
        c = np.atleast_2d(np.array(self.centers, dtype=np.float64))
        w = np.atleast_2d(np.array(self.widths, dtype=np.float64))
        q = np.atleast_2d(np.array(self.consequents, dtype=np.float64))
        if c.shape[0] < 1 or c.shape != w.shape or q.shape != (c.shape[0], c.shape[1] + 1):
            raise ArityError(f"rule arrays of shapes {c.shape}, {w.shape}, {q.shape}")
        if not np.all(w > 0):
            raise DataError("invalid rule", "membership widths must be positive")
        for a in (c, w, q):
            a.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "consequents", q)
        if self.normalization is None:
            object.__setattr__(self, "normalization", Normalization.identity(c.shape[1]))

    @property
    def input_dim(self):
        return self.centers.shape[1]

    @property
    def n_rules(self):
        return self.centers.shape[0]

    @property
    def rules(self):
        return [
            FuzzyRule(self.centers[k], self.widths[k], self.consequents[k, :-1], float(self.consequents[k, -1]))
            for k in range(self.n_rules)
        ]

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            return np.zeros(0)
        if X.shape[1] != self.input_dim:
            raise ArityError(f"input dimension {X.shape[1]}, model expects {self.input_dim}")
        out = _output(self.centers, self.widths, self.consequents, normalize(X, self.normalization.inputs))
        return denormalize(out, self.normalization.target)

    def to_payload(self):
        return {
            "centers": self.centers.tolist(),
            "widths": self.widths.tolist(),
            "consequents": self.consequents.tolist(),
            "history": list(self.history),
        }

    @classmethod
    def from_payload(cls, payload, normalization):
        return cls(payload["centers"], payload["widths"], payload["consequents"], normalization, tuple(payload.get("history", ())))


def normalized_strengths(centers, widths, X):
    """Firing strengths divided by their sum, ``n x K``."""
    diff = X[:, None, :] - centers[None, :, :]
    logw = -0.5 * np.sum((diff / widths[None, :, :]) ** 2, axis=2)
    top = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise ModelError("no rule coverage", "firing strengths are undefined for some inputs")
    w = np.exp(logw - top)
    return w / w.sum(axis=1, keepdims=True)


def _design(wn, X):
    """Least-squares design: column block ``k`` is ``wn_k * [x, 1]``."""
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    return (wn[:, :, None] * Xa[:, None, :]).reshape(X.shape[0], -1)


def _output(centers, widths, consequents, X):
    wn = normalized_strengths(centers, widths, X)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    return np.sum(wn * (Xa @ consequents.T), axis=1)


def infer(model, x):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != model.input_dim:
        raise ArityError(f"input dimension {x.size}, model expects {model.input_dim}")
    return float(model.predict(x[None, :])[0])


def _lse(centers, widths, X, y):
    D = _design(normalized_strengths(centers, widths, X), X)
    coef = np.linalg.lstsq(D, y, rcond=None)[0]
    return coef.reshape(centers.shape[0], X.shape[1] + 1)


def _prepare(X, y, normalization):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise ArityError(f"{X.shape[0]} input rows, {y.size} targets")
    if normalization is not None:
        X = normalize(X, normalization.inputs)
        y = normalize(y, normalization.target)
    return X, y


def build_fis(clusters, X, y, radius=0.139, normalization=None):
    """One rule per cluster; widths ``radius * range_j / sqrt(8)``;
    consequents by global least squares (minimum norm).

    ``clusters`` are in normalized units when ``normalization`` is given.
    """
    if not clusters:
        raise DataError("no clusters", "at least one cluster is required")
    Xn, yn = _prepare(X, y, normalization)
    span = Xn.max(axis=0) - Xn.min(axis=0)
    span = np.where(span > 0, span, 1.0)
    centers = np.array([c.center for c in clusters], dtype=np.float64)
    widths = np.tile(np.maximum(radius * span / np.sqrt(8.0), MIN_WIDTH), (len(clusters), 1))
    consequents = _lse(centers, widths, Xn, yn)
    return AnfisModel(centers, widths, consequents, normalization)


def _rmse_and_grad(centers, widths, consequents, X, y):
    """Training RMSE and its gradient with respect to centers and widths."""
    wn = normalized_strengths(centers, widths, X)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    g = Xa @ consequents.T
    f = np.sum(wn * g, axis=1)
    r = f - y
    rmse = np.sqrt(np.mean(r * r))
    if rmse == 0:
        return 0.0, np.zeros_like(centers), np.zeros_like(widths)
    # d f / d logw_k = wn_k (g_k - f)
    dl = (2.0 / y.size) * r[:, None] * wn * (g - f[:, None]) / (2.0 * rmse)
    diff = X[:, None, :] - centers[None, :, :]
    dc = np.einsum("nk,nkj->kj", dl, diff / widths**2)
    ds = np.einsum("nk,nkj->kj", dl, diff**2 / widths**3)
    return rmse, dc, ds


def _rmse(centers, widths, consequents, X, y):
    r = _output(centers, widths, consequents, X) - y
    return float(np.sqrt(np.mean(r * r)))


def train_anfis(model, X, y, epochs=200, step_size=0.01, increase=1.1, decrease=0.5):
    """Hybrid training: per epoch, refit consequents by least squares with
    the premises frozen, then take one normalized gradient step on the
    premises. The step grows by ``increase`` after an improvement; a step
    that raises the error is reverted and the step shrinks by ``decrease``.

    ``X``/``y`` are raw values, scaled with the model's normalization.
    """
    if epochs < 0:
        raise DataError("invalid epochs", str(epochs))
    if epochs == 0:
        return model
    Xn, yn = _prepare(X, y, model.normalization)
    c = model.centers.copy()
    s = model.widths.copy()
    q = model.consequents.copy()
    history = list(model.history)
    lse = list(model.lse_trace)
    eta = step_size
    for epoch in range(1, epochs + 1):
        before = _rmse(c, s, q, Xn, yn)
        q = _lse(c, s, Xn, yn)
        err, dc, ds = _rmse_and_grad(c, s, q, Xn, yn)
        lse.append((before, err))
        if not np.isfinite(err):
            raise ModelError("divergence", f"non-finite loss at epoch {epoch}")
        norm = np.sqrt(np.sum(dc * dc) + np.sum(ds * ds))
        if norm > 0:
            c_new = c - eta * dc / norm
            s_new = np.maximum(s - eta * ds / norm, MIN_WIDTH)
            err_new = _rmse(c_new, s_new, q, Xn, yn)
            if err_new < err:
                c, s, err = c_new, s_new, err_new
                eta *= increase
            else:
                eta *= decrease
        history.append(err)
    return replace(model, centers=c, widths=s, consequents=q, history=tuple(history), lse_trace=tuple(lse))


def fit_anfis(X, y, cfg=None, epochs=200, normalization=None):
    """Cluster, build and train in one call."""
    cfg = cfg or SubtractiveConfig()
    Xn, _ = _prepare(X, y, normalization)
    clusters = subtractive_clustering(Xn, cfg)
    model = build_fis(clusters, X, y, cfg.radius, normalization)
    return train_anfis(model, X, y, epochs)
