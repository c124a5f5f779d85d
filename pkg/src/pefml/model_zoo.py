"""The other candidate regressors: linear, Nadaraya-Watson, CART, SVR,
least-squares boosting and bagged trees.

Every regressor exposes ``family``, ``input_dim``, ``predict(X)`` (raw units)
and ``to_payload()`` / ``from_payload()`` for persistence. Fits accept an
optional :class:`~pefml.preprocess.Normalization`; hyperparameters such as
bandwidths and ``gamma`` are then in normalized units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ArityError, DataError, ModelError
from .preprocess import Normalization, denormalize, normalize


def _prepare(X, y, normalization):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise ArityError(f"{X.shape[0]} input rows, {y.size} targets")
    if y.size == 0:
        raise DataError("no data")
    if normalization is None:
        normalization = Normalization.identity(X.shape[1])
    return normalize(X, normalization.inputs), normalize(y, normalization.target), normalization


class Regressor:
    """Shared raw-units prediction wrapper; subclasses implement ``_predict``."""

    family = ""
    normalization: Normalization
    input_dim: int

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            return np.zeros(0)
        if X.shape[1] != self.input_dim:
            raise ArityError(f"input dimension {X.shape[1]}, model expects {self.input_dim}")
        return denormalize(self._predict(normalize(X, self.normalization.inputs)), self.normalization.target)


# -- linear -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearRegressor(Regressor):
    family = "linear"

    coef: np.ndarray
    intercept: float
    normalization: Normalization

    @property
    def input_dim(self):
        return self.coef.size

    def _predict(self, Xn):
        return Xn @ self.coef + self.intercept

    def to_payload(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept}

    @classmethod
    def from_payload(cls, p, normalization):
        return cls(np.asarray(p["coef"], dtype=np.float64), float(p["intercept"]), normalization)


def fit_linear(X, y, normalization=None):
    """Least squares with intercept; minimum-norm slopes when rank deficient."""
    Xn, yn, norm = _prepare(X, y, normalization)
    xm = Xn.mean(axis=0)
    ym = yn.mean()
    coef = np.linalg.lstsq(Xn - xm, yn - ym, rcond=None)[0]
    return LinearRegressor(coef, float(ym - xm @ coef), norm)


# -- Nadaraya-Watson ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelRegressor(Regressor):
    family = "kernel_regression"

    X: np.ndarray
    y: np.ndarray
    bandwidth: float
    normalization: Normalization

    @property
    def input_dim(self):
        return self.X.shape[1]

    def predict_with_flags(self, X):
        """Predictions plus a mask of queries that fell back to the nearest neighbour."""
        Xq = normalize(np.atleast_2d(np.asarray(X, dtype=np.float64)), self.normalization.inputs)
        out, flags = self._nw(Xq)
        return denormalize(out, self.normalization.target), flags

    def _nw(self, Xn):
        d2 = cdist(Xn, self.X, "sqeuclidean")
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            logw = -d2 / (2.0 * self.bandwidth**2)
        top = logw.max(axis=1, keepdims=True)
        flags = ~np.isfinite(top[:, 0])
        with np.errstate(invalid="ignore"):
            w = np.exp(logw - top)
        out = np.empty(Xn.shape[0])
        ok = ~flags
        out[ok] = (w[ok] @ self.y) / w[ok].sum(axis=1)
        if flags.any():
            out[flags] = self.y[np.argmin(d2[flags], axis=1)]
        return out, flags

    def _predict(self, Xn):
        return self._nw(Xn)[0]

    def to_payload(self):
        return {"X": self.X.tolist(), "y": self.y.tolist(), "bandwidth": self.bandwidth}

    @classmethod
    def from_payload(cls, p, normalization):
        X = np.asarray(p["X"], dtype=np.float64).reshape(len(p["X"]), -1)
        return cls(X, np.asarray(p["y"], dtype=np.float64), float(p["bandwidth"]), normalization)


def fit_kernel_regression(X, y, bandwidth=0.1, normalization=None):
    if not bandwidth > 0:
        raise DataError("invalid bandwidth", str(bandwidth))
    Xn, yn, norm = _prepare(X, y, normalization)
    return KernelRegressor(Xn, yn, float(bandwidth), norm)


# -- CART ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TreeArrays:
    """Flat tree: ``feature[i] < 0`` marks a leaf holding ``value[i]``.
    Samples with ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = node[active]
            go_left = X[active, self.feature[idx]] <= self.threshold[idx]
            node[active] = np.where(go_left, self.left[idx], self.right[idx])
            active = self.feature[node] >= 0
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    @property
    def depth(self):
        def walk(i):
            return 0 if self.feature[i] < 0 else 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(X, y, idx, features, min_leaf):
    """Largest SSE reduction over ``features``; ties keep the first
    (lowest feature index, then lowest threshold)."""
    n = idx.size
    ys = y[idx]
    ys = ys - ys.mean()  # centering keeps the running sums well conditioned
    total = ys.sum()
    base = (ys * ys).sum() - total * total / n
    best = (0.0, -1, 0.0)
    for j in features:
        xj = X[idx, j]
        order = np.argsort(xj, kind="stable")
        xs = xj[order]
        cs = np.cumsum(ys[order])
        cs2 = np.cumsum(ys[order] ** 2)
        k = np.arange(min_leaf, n - min_leaf + 1)  # left size
        if k.size == 0:
            continue
        valid = xs[k - 1] < xs[np.minimum(k, n - 1)]
        if not valid.any():
            continue
        k = k[valid]
        left_s, left_s2 = cs[k - 1], cs2[k - 1]
        right_s, right_s2 = total - left_s, cs2[-1] - left_s2
        sse = (left_s2 - left_s**2 / k) + (right_s2 - right_s**2 / (n - k))
        gain = base - sse
        m = int(np.argmax(gain))
        if gain[m] > best[0] and gain[m] > 1e-12 * max(base, 1e-300):
            best = (float(gain[m]), int(j), 0.5 * (xs[k[m] - 1] + xs[k[m]]))
    return best


def build_tree(X, y, min_leaf=1, max_depth=None, max_features=None, rng=None):
    """Greedy CART regression tree. ``max_features`` < d samples features per split."""
    if min_leaf < 1:
        raise DataError("invalid tree parameters", "min_leaf must be >= 1")
    d = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            arr.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        value[node] = float(y[idx].mean())
        if idx.size < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, max_features, replace=False))
        else:
            feats = range(d)
        gain, j, thr = _best_split(X, y, idx, feats, min_leaf)
        if j < 0:
            continue
        mask = X[idx, j] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = j, thr, lnode, rnode
        stack.append((rnode, idx[~mask], depth + 1))
        stack.append((lnode, idx[mask], depth + 1))
    return TreeArrays(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value),
    )


@dataclass(frozen=True, eq=False)
class TreeRegressor(Regressor):
    family = "tree"

    tree: TreeArrays
    input_dim: int
    normalization: Normalization

    def _predict(self, Xn):
        return self.tree.predict(Xn)

    def to_payload(self):
        return {"tree": self.tree.to_dict(), "input_dim": self.input_dim}

    @classmethod
    def from_payload(cls, p, normalization):
        return cls(TreeArrays.from_dict(p["tree"]), int(p["input_dim"]), normalization)


def fit_tree(X, y, min_leaf=1, max_depth=None, normalization=None):
    Xn, yn, norm = _prepare(X, y, normalization)
    return TreeRegressor(build_tree(Xn, yn, int(min_leaf), max_depth), Xn.shape[1], norm)


# -- epsilon-SVR ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SvrRegressor(Regressor):
    family = "svr"

    support: np.ndarray
    dual_coef: np.ndarray  # alpha - alpha*
    intercept: float
    gamma: float
    normalization: Normalization
    alphas: np.ndarray = field(default=None, repr=False)
    iterations: int = 0

    @property
    def input_dim(self):
        return self.support.shape[1]

    def _predict(self, Xn):
        if self.support.shape[0] == 0:
            return np.full(Xn.shape[0], self.intercept)
        return np.exp(-self.gamma * cdist(Xn, self.support, "sqeuclidean")) @ self.dual_coef + self.intercept

    def to_payload(self):
        return {
            "support": self.support.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "intercept": self.intercept,
            "gamma": self.gamma,
            "input_dim": self.input_dim,
        }

    @classmethod
    def from_payload(cls, p, normalization):
        support = np.asarray(p["support"], dtype=np.float64).reshape(-1, int(p["input_dim"]))
        return cls(support, np.asarray(p["dual_coef"], dtype=np.float64), float(p["intercept"]), float(p["gamma"]), normalization)


def smo_solve(K, y, C, epsilon, tol=1e-3, max_iter=None):
    """Dual epsilon-SVR by SMO over 2n variables ``[alpha; alpha*]``.

    Each iteration updates the maximal KKT-violating pair (lowest index on
    ties). Returns ``(alpha, alpha_star, b, iterations, violation)``.
    """
    n = y.size
    s = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    beta = np.zeros(2 * n)
    G = p.copy()
    diagK = np.diag(K)
    max_iter = max_iter or max(100_000, 100 * n)

    def kcol(i):
        return s * s[i] * np.concatenate([K[:, i % n], K[:, i % n]])

    it = 0
    viol = 0.0
    while True:
        up = ((s > 0) & (beta < C)) | ((s < 0) & (beta > 0))
        low = ((s < 0) & (beta < C)) | ((s > 0) & (beta > 0))
        score = -s * G
        if not up.any() or not low.any():
            viol = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        viol = score[i] - score[j]
        if viol < tol:
            break
        if it >= max_iter:
            raise ModelError("SMO iteration cap", f"KKT violation {viol:.3g} after {it} iterations")
        it += 1
        Qi, Qj = kcol(i), kcol(j)
        quad = max(diagK[i % n] + diagK[j % n] - 2 * s[i] * s[j] * Qi[j], 1e-12)
        # move along s_i e_i - s_j e_j, keeping s^T beta fixed
        t = viol / quad
        ti = C - beta[i] if s[i] > 0 else beta[i]
        tj = beta[j] if s[j] > 0 else C - beta[j]
        t = min(t, ti, tj)
        beta[i] += s[i] * t
        beta[j] -= s[j] * t
        G += t * (s[i] * Qi - s[j] * Qj)
    a, a_star = beta[:n], beta[n:]
    free = (beta > 0) & (beta < C)
    sG = s * G
    if free.any():
        rho = sG[free].mean()
    else:
        at_ub = beta >= C
        ub_mask = (at_ub & (s < 0)) | (~at_ub & (s > 0))
        lb_mask = ~ub_mask
        ub = sG[ub_mask].min() if ub_mask.any() else np.inf
        lb = sG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return a, a_star, float(-rho), it, float(viol)


def fit_svr(X, y, C=1.0, epsilon=0.01, gamma=1.0, tol=1e-3, max_iter=None, normalization=None):
    if not (C > 0 and epsilon >= 0 and gamma > 0):
        raise DataError("invalid SVR parameters", "need C > 0, epsilon >= 0, gamma > 0")
    Xn, yn, norm = _prepare(X, y, normalization)
    K = np.exp(-gamma * cdist(Xn, Xn, "sqeuclidean"))
    a, a_star, b, it, _ = smo_solve(K, yn, C, epsilon, tol, max_iter)
    coef = a - a_star
    sv = coef != 0
    return SvrRegressor(Xn[sv], coef[sv], b, float(gamma), norm, np.concatenate([a, a_star]), it)


# -- least-squares boosting ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoostRegressor(Regressor):
    family = "lsboost"

    init: float
    learning_rate: float
    trees: tuple
    input_dim: int
    normalization: Normalization

    def _predict(self, Xn, stages=None):
        out = np.full(Xn.shape[0], self.init)
        for t in self.trees[: len(self.trees) if stages is None else stages]:
            out = out + self.learning_rate * t.predict(Xn)
        return out

    def staged_predict(self, X, stages):
        """Prediction using only the first ``stages`` trees (0 gives the mean)."""
        Xn = normalize(np.atleast_2d(np.asarray(X, dtype=np.float64)), self.normalization.inputs)
        return denormalize(self._predict(Xn, stages), self.normalization.target)

    def to_payload(self):
        return {
            "init": self.init,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
            "input_dim": self.input_dim,
        }

    @classmethod
    def from_payload(cls, p, normalization):
        trees = tuple(TreeArrays.from_dict(t) for t in p["trees"])
        return cls(float(p["init"]), float(p["learning_rate"]), trees, int(p["input_dim"]), normalization)


def fit_lsboost(X, y, n_stages=100, learning_rate=0.1, max_depth=3, min_leaf=1, normalization=None):
    if n_stages < 1 or not 0 < learning_rate <= 1:
        raise DataError("invalid boosting parameters", "need n_stages >= 1 and learning_rate in (0, 1]")
    Xn, yn, norm = _prepare(X, y, normalization)
    F = np.full(yn.size, yn.mean())
    trees = []
    for _ in range(int(n_stages)):
        t = build_tree(Xn, yn - F, int(min_leaf), max_depth)
        F = F + learning_rate * t.predict(Xn)
        trees.append(t)
    return BoostRegressor(float(yn.mean()), float(learning_rate), tuple(trees), Xn.shape[1], norm)


# -- bagging / random forest --------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForestRegressor(Regressor):
    family = "bagging"

    trees: tuple
    input_dim: int
    normalization: Normalization

    def _predict(self, Xn):
        return np.mean([t.predict(Xn) for t in self.trees], axis=0)

    def to_payload(self):
        return {"trees": [t.to_dict() for t in self.trees], "input_dim": self.input_dim}

    @classmethod
    def from_payload(cls, p, normalization):
        return cls(tuple(TreeArrays.from_dict(t) for t in p["trees"]), int(p["input_dim"]), normalization)


def fit_bagging(
    X, y, n_trees=50, seed=0, feature_fraction=1 / 3, bootstrap=True, min_leaf=5, max_depth=None, normalization=None
):
    """Bagged CART trees. Tree ``i`` draws from ``default_rng([seed, i])``, so
    results do not depend on the order in which trees are built."""
    if n_trees < 1:
        raise DataError("invalid forest parameters", "n_trees must be >= 1")
    if not 0 < feature_fraction <= 1:
        raise DataError("invalid forest parameters", "feature_fraction must lie in (0, 1]")
    Xn, yn, norm = _prepare(X, y, normalization)
    n, d = Xn.shape
    m = max(1, math.ceil(feature_fraction * d))
    trees = []
    for i in range(int(n_trees)):
        rng = np.random.default_rng([int(seed), i])
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(build_tree(Xn[idx], yn[idx], int(min_leaf), max_depth, m, rng))
    return ForestRegressor(tuple(trees), d, norm)


FAMILIES = {
    "linear": LinearRegressor,
    "kernel_regression": KernelRegressor,
    "tree": TreeRegressor,
    "svr": SvrRegressor,
    "lsboost": BoostRegressor,
    "bagging": ForestRegressor,
}


def predict(regressor, X):
    """Family-dispatched prediction in target units."""
    return regressor.predict(X)
