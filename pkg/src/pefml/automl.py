"""Per-family Bayesian hyperparameter search and cross-family selection.

Each family gets ``budget`` trials: ``max(3, budget // 4)`` random ones, then
suggestions maximizing expected improvement under a GP surrogate. Trials are
scored by AAPE on the validation split (target units). The winner is the
lowest objective; ties go to the earlier family in :data:`FAMILY_ORDER`,
then the earlier trial.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import anfis, ann, gpr, model_zoo
from .errors import DataError, PefError
from .metrics import aape
from .preprocess import Normalization, normalize

FAMILY_ORDER = ("linear", "tree", "kernel_regression", "svr", "lsboost", "bagging", "anfis", "ann", "gpr")

N_CANDIDATES = 1024


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # continuous | integer | categorical
    low: float = None
    high: float = None
    choices: tuple = ()
    log: bool = False

    def __post_init__(self):
        if self.kind == "categorical":
            if not self.choices:
                raise DataError("invalid search space", f"{self.name}: no choices")
        elif self.kind in ("continuous", "integer"):
            if not self.low <= self.high:
                raise DataError("invalid search space", f"{self.name}: bounds out of order")
            if self.log and self.low <= 0:
                raise DataError("invalid search space", f"{self.name}: log scale needs positive bounds")
        else:
            raise DataError("invalid search space", f"{self.name}: unknown kind {self.kind!r}")

    @property
    def width(self):
        """Columns this parameter occupies in the unit-box encoding."""
        return len(self.choices) if self.kind == "categorical" else 1

    def sample(self, rng):
        if self.kind == "categorical":
            return self.choices[int(rng.integers(len(self.choices)))]
        u = rng.uniform()
        if self.log:
            v = math.exp(math.log(self.low) + u * (math.log(self.high) - math.log(self.low)))
        else:
            v = self.low + u * (self.high - self.low)
        if self.kind == "integer":
            return int(min(max(round(v), self.low), self.high))
        return float(v)

    def encode(self, value):
        if self.kind == "categorical":
            out = [0.0] * len(self.choices)
            out[self.choices.index(value)] = 1.0
            return out
        if self.high == self.low:
            return [0.5]
        if self.log:
            return [(math.log(value) - math.log(self.low)) / (math.log(self.high) - math.log(self.low))]
        return [(value - self.low) / (self.high - self.low)]


@dataclass(frozen=True)
class SearchSpace:
    family: str
    params: tuple = ()
    fixed: dict = field(default_factory=dict)

    def sample(self, rng):
        out = {p.name: p.sample(rng) for p in self.params}
        return out

    def encode(self, assignment):
        return np.array([v for p in self.params for v in p.encode(assignment[p.name])], dtype=np.float64)

    @property
    def dim(self):
        return sum(p.width for p in self.params)


def _c(name, lo, hi, log=False):
    return Param(name, "continuous", lo, hi, log=log)


def _i(name, lo, hi, log=False):
    return Param(name, "integer", lo, hi, log=log)


def _cat(name, *choices):
    return Param(name, "categorical", choices=tuple(choices))


def default_space(family):
    if family == "linear":
        return SearchSpace("linear")
    if family == "tree":
        return SearchSpace("tree", (_i("min_leaf", 1, 50, log=True), _i("max_depth", 2, 20)))
    if family == "kernel_regression":
        return SearchSpace("kernel_regression", (_c("bandwidth", 1e-3, 1.0, log=True),))
    if family == "svr":
        return SearchSpace(
            "svr", (_c("C", 1e-2, 1e2, log=True), _c("epsilon", 1e-3, 0.2, log=True), _c("gamma", 0.1, 100.0, log=True))
        )
    if family == "lsboost":
        return SearchSpace(
            "lsboost",
            (
                _i("n_stages", 10, 200, log=True),
                _c("learning_rate", 0.01, 1.0, log=True),
                _i("max_depth", 1, 6),
                _i("min_leaf", 1, 20, log=True),
            ),
        )
    if family == "bagging":
        return SearchSpace(
            "bagging",
            (_i("n_trees", 10, 100, log=True), _i("min_leaf", 1, 20, log=True), _c("feature_fraction", 0.2, 1.0)),
        )
    if family == "anfis":
        return SearchSpace("anfis", (_c("radius", 0.05, 1.0),), {"epochs": 200, "max_clusters": 50})
    if family == "ann":
        return SearchSpace(
            "ann",
            (
                _i("layers", 1, 3),
                _i("neurons_1", 5, 35),
                _i("neurons_2", 5, 35),
                _i("neurons_3", 5, 35),
                _cat("transfer", *ann.DIFFERENTIABLE),
                _cat("algorithm", *ann.ALGORITHMS),
            ),
            {"max_epochs": 100},
        )
    if family == "gpr":
        return SearchSpace(
            "gpr",
            (
                _c("noise_std", 1e-4, 0.3, log=True),
                _c("length_scale", 0.05, 3.0, log=True),
                _c("signal_std", 0.1, 3.0, log=True),
                _cat("kernel", *gpr.KERNELS),
                _cat("basis", *gpr.BASES),
            ),
        )
    raise DataError("unknown model family", family)


def expected_improvement(mu, sigma, best_so_far):
    """EI for minimization; reduces to ``max(best - mu, 0)`` when ``sigma == 0``."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise DataError("invalid sigma", "sigma must be non-negative")
    imp = best_so_far - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, imp / np.where(sigma > 0, sigma, 1.0), 0.0)
    ei = np.where(sigma > 0, imp * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(imp, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


SURROGATE_LENGTH_SCALES = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6)
SURROGATE_NOISE = 1e-3


def _fit_surrogate(U, f):
    """SE-kernel GP on standardized objectives; length scale by maximum evidence."""
    best = None
    for ls in SURROGATE_LENGTH_SCALES:
        hp = gpr.GprHyperparams(gpr.KernelSpec("squared_exponential", ls, 1.0), SURROGATE_NOISE, "constant", 1e-10)
        try:
            m = gpr.fit_gpr(U, f, hp)
        except PefError:
            continue
        lml = gpr.log_marginal_likelihood(m)
        if best is None or lml > best[0]:
            best = (lml, m)
    return None if best is None else best[1]


def bo_suggest(history, space, seed):
    """Next assignment to evaluate for ``space`` given past trials."""
    rng = np.random.default_rng(seed)
    ok = [t for t in history if t.status == "ok" and np.isfinite(t.objective)]
    if len(ok) < 2 or not space.params:
        return space.sample(rng)
    U = np.array([space.encode(t.params) for t in ok])
    y = np.array([t.objective for t in ok])
    scale = y.std()
    f = (y - y.mean()) / (scale if scale > 0 else 1.0)
    model = _fit_surrogate(U, f)
    cands = [space.sample(rng) for _ in range(N_CANDIDATES)]
    if model is None:
        return cands[0]
    C = np.array([space.encode(c) for c in cands])
    mu, var = gpr.predict_latent(model, C)
    ei = expected_improvement(mu, np.sqrt(np.maximum(var, 0.0)), f.min())
    return cands[int(np.argmax(ei))]


def fit_family(family, params, X, y, normalization, seed=0):
    """Fit one candidate model from a flat hyperparameter assignment."""
    p = dict(params)
    if family == "linear":
        return model_zoo.fit_linear(X, y, normalization)
    if family == "tree":
        return model_zoo.fit_tree(X, y, p.get("min_leaf", 1), p.get("max_depth"), normalization)
    if family == "kernel_regression":
        return model_zoo.fit_kernel_regression(X, y, p.get("bandwidth", 0.1), normalization)
    if family == "svr":
        return model_zoo.fit_svr(
            X, y, p.get("C", 1.0), p.get("epsilon", 0.01), p.get("gamma", 1.0), normalization=normalization
        )
    if family == "lsboost":
        return model_zoo.fit_lsboost(
            X, y, p.get("n_stages", 100), p.get("learning_rate", 0.1), p.get("max_depth", 3), p.get("min_leaf", 1), normalization
        )
    if family == "bagging":
        return model_zoo.fit_bagging(
            X,
            y,
            p.get("n_trees", 50),
            seed,
            p.get("feature_fraction", 1 / 3),
            min_leaf=p.get("min_leaf", 5),
            normalization=normalization,
        )
    if family == "anfis":
        cfg = anfis.SubtractiveConfig(radius=p.get("radius", 0.139), max_clusters=p.get("max_clusters", 100))
        return anfis.fit_anfis(X, y, cfg, p.get("epochs", 200), normalization)
    if family == "ann":
        layers = int(p.get("layers", 2))
        tf = p.get("transfer", "logsig")
        hidden = tuple((int(p.get(f"neurons_{k + 1}", 10)), tf) for k in range(layers))
        spec = ann.NetworkSpec(np.atleast_2d(X).shape[1], hidden)
        alg = ann.TrainingAlgorithm(p.get("algorithm", "bayesian_regularization"), int(p.get("max_epochs", 100)))
        return ann.train(spec, X, y, alg, seed, normalization)
    if family == "gpr":
        hp = gpr.GprHyperparams(
            gpr.KernelSpec(p.get("kernel", "exponential"), p.get("length_scale", 0.602), p.get("signal_std", 1.0)),
            p.get("noise_std", 0.032),
            p.get("basis", "constant"),
        )
        return gpr.fit_gpr(X, y, hp, normalization)
    raise DataError("unknown model family", family)


@dataclass
class Trial:
    family: str
    index: int
    params: dict
    objective: float = math.inf
    train_aape: float = None
    wall_time: float = 0.0
    status: str = "ok"
    reason: str = None

    def to_dict(self):
        d = {
            "family": self.family,
            "index": self.index,
            "params": _plain(self.params),
            "status": self.status,
            "objective": self.objective if self.status == "ok" else None,
            "train_aape": self.train_aape,
        }
        if self.reason is not None:
            d["reason"] = self.reason
        return d


def _plain(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        out[k] = v
    return out


def _order_key(t):
    return (t.objective, FAMILY_ORDER.index(t.family), t.index)


@dataclass
class Leaderboard:
    trials: list

    def __post_init__(self):
        ok = sorted((t for t in self.trials if t.status == "ok"), key=_order_key)
        failed = sorted((t for t in self.trials if t.status != "ok"), key=lambda t: (FAMILY_ORDER.index(t.family), t.index))
        self.trials = ok + failed

    @property
    def winner(self):
        for t in self.trials:
            if t.status == "ok":
                return t
        return None

    @property
    def per_family_best(self):
        out = {}
        for t in self.trials:
            if t.status == "ok" and t.family not in out:
                out[t.family] = t
        return out

    def to_dict(self):
        w = self.winner
        return {
            "trials": [t.to_dict() for t in self.trials],
            "winner": None if w is None else {"family": w.family, "index": w.index},
            "per_family_best": {f: {"index": t.index, "objective": t.objective} for f, t in self.per_family_best.items()},
        }

    def timings(self):
        """Wall times, kept apart from :meth:`to_dict` so that stays reproducible."""
        return [{"family": t.family, "index": t.index, "wall_time": t.wall_time} for t in self.trials]

    def format_table(self, top=20):
        lines = [f"{'rank':>4}  {'family':<18} {'trial':>5}  {'val AAPE %':>10}  status"]
        for r, t in enumerate(self.trials[:top], start=1):
            obj = f"{t.objective:10.4f}" if t.status == "ok" else f"{'-':>10}"
            lines.append(f"{r:>4}  {t.family:<18} {t.index:>5}  {obj}  {t.status}")
        return "\n".join(lines)


@dataclass
class AutoMLResult:
    leaderboard: Leaderboard
    winner_model: object
    normalization: Normalization


def _derived_seed(*parts):
    return int(np.random.default_rng([int(p) for p in parts]).integers(0, 2**31 - 1))


def run_automl(X_train, y_train, X_val, y_val, families=None, budget=15, seed=0, normalization=None, spaces=None):
    """Search every family in ``families`` and return the ranked trials and fitted winner.

    ``normalization`` defaults to min-max parameters fitted on the training
    split. Failed trials are recorded with their reason and never abort the run.
    """
    families = list(families or FAMILY_ORDER)
    for f in families:
        if f not in FAMILY_ORDER:
            raise DataError("unknown model family", f)
    if budget < 3:
        raise DataError("invalid budget", "at least 3 trials per family")
    X_train = np.atleast_2d(np.asarray(X_train, dtype=np.float64))
    X_val = np.atleast_2d(np.asarray(X_val, dtype=np.float64))
    y_train = np.asarray(y_train, dtype=np.float64).ravel()
    y_val = np.asarray(y_val, dtype=np.float64).ravel()
    if y_train.size == 0 or y_val.size == 0:
        raise DataError("no data")
    norm_ = normalization or Normalization.fit(X_train, y_train)
    spaces = dict(spaces or {})
    trials = []
    best_models = {}
    n_init = min(budget, max(3, budget // 4))
    for family in families:
        fam = FAMILY_ORDER.index(family)
        space = spaces.get(family) or default_space(family)
        history = []
        best = None
        for k in range(budget):
            s = _derived_seed(seed, fam, k)
            if k < n_init:
                params = space.sample(np.random.default_rng(s))
            else:
                params = bo_suggest(history, space, s)
            params = dict(params, **space.fixed)
            trial = Trial(family, k, params)
            t0 = time.perf_counter()
            try:
                model = fit_family(family, params, X_train, y_train, norm_, seed=s)
                pred = model.predict(X_val)
                if not np.all(np.isfinite(pred)):
                    raise DataError("non-finite prediction")
                trial.objective = aape(y_val, pred)
                trial.train_aape = aape(y_train, model.predict(X_train))
                if best is None or trial.objective < best[0]:
                    best = (trial.objective, model)
            except (PefError, np.linalg.LinAlgError, FloatingPointError) as exc:
                trial.status = "failed"
                trial.reason = str(exc)
            trial.wall_time = time.perf_counter() - t0
            history.append(trial)
            trials.append(trial)
        if best is not None:
            best_models[family] = best[1]
    board = Leaderboard(trials)
    w = board.winner
    if w is None:
        reasons = "; ".join(f"{t.family}#{t.index}: {t.reason}" for t in board.trials)
        raise DataError("no viable model", reasons)
    return AutoMLResult(board, best_models[w.family], norm_)
