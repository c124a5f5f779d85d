"""Feed-forward networks with one linear output unit.

Parameters are flattened layer by layer as ``W.ravel()`` (row-major,
``W`` shaped ``out x in``) followed by ``b``; the output layer comes last.
All training is full-batch on normalized data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import ArityError, DataError, ModelError
from .preprocess import Normalization, denormalize, normalize

TRANSFERS = ("tansig", "logsig", "hardlim", "purelin", "radbas", "softmax")
DIFFERENTIABLE = tuple(t for t in TRANSFERS if t != "hardlim")
ALGORITHMS = ("levenberg_marquardt", "bfgs", "bayesian_regularization", "conjugate_gradient")

MIN_NEURONS, MAX_NEURONS = 5, 35
MAX_HIDDEN = 3


def activate(tag, v):
    if tag == "tansig":
        return np.tanh(v)
    if tag == "logsig":
        return expit(v)
    if tag == "hardlim":
        return (v >= 0).astype(np.float64)
    if tag == "purelin":
        return v
    if tag == "radbas":
        return np.exp(-v * v)
    if tag == "softmax":
        e = np.exp(v - v.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    raise DataError("unknown transfer", tag)


def _backward(tag, v, a, g):
    """Pull ``g = dL/da`` back through the transfer to ``dL/dv``."""
    if tag == "tansig":
        return g * (1.0 - a * a)
    if tag == "logsig":
        return g * a * (1.0 - a)
    if tag == "purelin":
        return g
    if tag == "radbas":
        return g * (-2.0 * v * a)
    if tag == "softmax":
        return a * (g - np.sum(g * a, axis=-1, keepdims=True))
    raise ModelError("non-differentiable transfer", tag)


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_layers: tuple  # of (neuron_count, transfer)

    def __post_init__(self):
        layers = tuple((int(n), str(t)) for n, t in self.hidden_layers)
        object.__setattr__(self, "hidden_layers", layers)
        if self.input_dim < 1:
            raise DataError("invalid network", "input_dim must be >= 1")
        if not 1 <= len(layers) <= MAX_HIDDEN:
            raise DataError("invalid network", f"1 to {MAX_HIDDEN} hidden layers required, got {len(layers)}")
        for n, t in layers:
            if not MIN_NEURONS <= n <= MAX_NEURONS:
                raise DataError("invalid network", f"neuron count {n} outside [{MIN_NEURONS}, {MAX_NEURONS}]")
            if t not in TRANSFERS:
                raise DataError("unknown transfer", t)

    @property
    def shapes(self):
        """``(out, in)`` for every layer including the output unit."""
        dims = [self.input_dim] + [n for n, _ in self.hidden_layers] + [1]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.shapes)

    @property
    def transfers(self):
        return tuple(t for _, t in self.hidden_layers)

    def to_dict(self):
        return {"input_dim": self.input_dim, "hidden_layers": [list(h) for h in self.hidden_layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["input_dim"]), tuple(tuple(h) for h in d["hidden_layers"]))


@dataclass(frozen=True)
class TrainingAlgorithm:
    name: str = "levenberg_marquardt"
    max_epochs: int = 200
    mu_init: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    min_grad: float = 1e-7
    c1: float = 1e-4
    max_halvings: int = 60
    alpha_init: float = 0.01
    beta_init: float = 1.0

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise DataError("unknown training algorithm", self.name)
        if self.max_epochs < 1:
            raise DataError("invalid training algorithm", "max_epochs must be >= 1")
        if not self.mu_init > 0:
            raise DataError("invalid training algorithm", "damping must be positive")


def unflatten(spec, theta):
    layers = []
    k = 0
    for o, i in spec.shapes:
        W = theta[k : k + o * i].reshape(o, i)
        k += o * i
        b = theta[k : k + o]
        k += o
        layers.append((W, b))
    return layers


def _forward(spec, layers, X):
    acts = [X]
    pre = []
    a = X
    for (W, b), t in zip(layers[:-1], spec.transfers):
        v = a @ W.T + b
        a = activate(t, v)
        pre.append(v)
        acts.append(a)
    W, b = layers[-1]
    return (a @ W.T + b)[:, 0], pre, acts


def _jacobian(spec, layers, pre, acts):
    """d(output_i)/d(theta) for every sample, ``n x P``."""
    n = acts[0].shape[0]
    blocks = []
    delta = np.ones((n, 1))
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        a_in = acts[li]
        blocks.append((delta[:, :, None] * a_in[:, None, :]).reshape(n, -1))
        blocks[-1] = np.hstack([blocks[-1], delta])
        if li == 0:
            break
        g = delta @ W
        delta = _backward(spec.transfers[li - 1], pre[li - 1], acts[li], g)
    return np.hstack(blocks[::-1])


@dataclass(frozen=True, eq=False)
class TrainedNetwork:
    family = "ann"

    spec: NetworkSpec
    theta: np.ndarray
    normalization: Normalization = None
    history: tuple = ()
    algorithm: str = ""
    trace: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).ravel()
        if theta.size != self.spec.n_params:
            raise ArityError(f"{theta.size} parameters for a network needing {self.spec.n_params}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.normalization is None:
            object.__setattr__(self, "normalization", Normalization.identity(self.spec.input_dim))
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))

    @property
    def layers(self):
        return unflatten(self.spec, self.theta)

    @property
    def weights(self):
        return [W for W, _ in self.layers]

    @property
    def biases(self):
        return [b for _, b in self.layers]

    @property
    def input_dim(self):
        return self.spec.input_dim

    def with_parameters(self, theta):
        return replace(self, theta=theta)

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            return np.zeros(0)
        if X.shape[1] != self.spec.input_dim:
            raise ArityError(f"input dimension {X.shape[1]}, network expects {self.spec.input_dim}")
        out, _, _ = _forward(self.spec, self.layers, normalize(X, self.normalization.inputs))
        return denormalize(out, self.normalization.target)

    def to_payload(self):
        return {
            "spec": self.spec.to_dict(),
            "theta": self.theta.tolist(),
            "history": list(self.history),
            "algorithm": self.algorithm,
        }

    @classmethod
    def from_payload(cls, payload, normalization):
        return cls(
            NetworkSpec.from_dict(payload["spec"]),
            np.asarray(payload["theta"], dtype=np.float64),
            normalization,
            tuple(payload.get("history", ())),
            payload.get("algorithm", ""),
        )


def network_from_layers(spec, layers, normalization=None):
    """Build a network from explicit ``[(W, b), ...]`` including the output layer."""
    theta = np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])
    return TrainedNetwork(spec, theta, normalization)


def forward(net, x):
    """Network output for one input vector, in target units."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != net.spec.input_dim:
        raise ArityError(f"input dimension {x.size}, network expects {net.spec.input_dim}")
    return float(net.predict(x[None, :])[0])


def _prepare(net_or_spec, X, y, normalization):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise ArityError(f"{X.shape[0]} input rows, {y.size} targets")
    if X.shape[1] != net_or_spec.input_dim:
        raise ArityError(f"input dimension {X.shape[1]}, network expects {net_or_spec.input_dim}")
    if normalization is not None:
        X = normalize(X, normalization.inputs)
        y = normalize(y, normalization.target)
    return X, y


def _check_differentiable(spec):
    if "hardlim" in spec.transfers:
        raise ModelError("non-differentiable transfer", "hardlim cannot be trained by gradient methods")


def backprop_gradient(net, X, y):
    """Gradient of ``0.5 * sum(residual**2)`` over all parameters, in normalized units."""
    _check_differentiable(net.spec)
    Xn, yn = _prepare(net.spec, X, y, net.normalization)
    layers = net.layers
    out, pre, acts = _forward(net.spec, layers, Xn)
    J = _jacobian(net.spec, layers, pre, acts)
    return J.T @ (out - yn)


def glorot_init(spec, rng):
    parts = []
    for o, i in spec.shapes:
        limit = np.sqrt(6.0 / (i + o))
        parts.append(rng.uniform(-limit, limit, o * i))
        parts.append(np.zeros(o))
    return np.concatenate(parts)


class _Problem:
    def __init__(self, spec, X, y):
        self.spec, self.X, self.y = spec, X, y

    def residual(self, theta):
        out, _, _ = _forward(self.spec, unflatten(self.spec, theta), self.X)
        return out - self.y

    def residual_jacobian(self, theta):
        layers = unflatten(self.spec, theta)
        out, pre, acts = _forward(self.spec, layers, self.X)
        return out - self.y, _jacobian(self.spec, layers, pre, acts)

    def loss_grad(self, theta):
        r, J = self.residual_jacobian(theta)
        return 0.5 * r @ r, J.T @ r, r


def _rmse(r):
    return float(np.sqrt(np.mean(r * r)))


def _diverged(value, epoch):
    if not np.all(np.isfinite(value)):
        raise ModelError("divergence", f"non-finite loss at epoch {epoch}")


def _levenberg_marquardt(prob, theta, alg, history):
    mu = alg.mu_init
    r, J = prob.residual_jacobian(theta)
    loss = r @ r
    eye = np.eye(theta.size)
    for epoch in range(1, alg.max_epochs + 1):
        g = J.T @ r
        if np.linalg.norm(g) < alg.min_grad:
            break
        JtJ = J.T @ J
        accepted = False
        while mu <= alg.mu_max:
            try:
                step = np.linalg.solve(JtJ + mu * eye, -g)
            except np.linalg.LinAlgError:
                mu *= alg.mu_inc
                continue
            r_new = prob.residual(theta + step)
            loss_new = r_new @ r_new
            if np.isfinite(loss_new) and loss_new < loss:
                theta = theta + step
                mu *= alg.mu_dec
                accepted = True
                break
            mu *= alg.mu_inc
        if not accepted:
            break
        r, J = prob.residual_jacobian(theta)
        loss = r @ r
        _diverged(loss, epoch)
        history.append(_rmse(r))
    return theta, {}


def _effective_params(JtJ, alpha, beta):
    """gamma = P - 2 alpha tr(H^-1) with H = 2 beta JtJ + 2 alpha I.

    Evaluated term-wise as sum(beta*lam / (beta*lam + alpha)) over the
    eigenvalues of JtJ, which avoids cancellation when alpha dominates.
    """
    lam = np.clip(np.linalg.eigvalsh(JtJ), 0.0, None)
    return float(np.sum(beta * lam / (beta * lam + alpha)))


def _bayesian_regularization(prob, theta, alg, history):
    alpha, beta = alg.alpha_init, alg.beta_init
    mu = alg.mu_init
    P = theta.size
    N = prob.y.size
    r, J = prob.residual_jacobian(theta)
    eye = np.eye(P)

    def objective(r, w):
        return beta * (r @ r) + alpha * (w @ w)

    F = objective(r, theta)
    trace = {"alpha": [alpha], "beta": [beta], "gamma": [], "n_params": P}
    for epoch in range(1, alg.max_epochs + 1):
        g = 2 * beta * (J.T @ r) + 2 * alpha * theta
        if np.linalg.norm(g) < alg.min_grad:
            break
        H = 2 * beta * (J.T @ J) + 2 * alpha * eye
        accepted = False
        while mu <= alg.mu_max:
            try:
                step = np.linalg.solve(H + mu * eye, -g)
            except np.linalg.LinAlgError:
                mu *= alg.mu_inc
                continue
            r_new = prob.residual(theta + step)
            F_new = objective(r_new, theta + step)
            if np.isfinite(F_new) and F_new < F:
                theta = theta + step
                mu *= alg.mu_dec
                accepted = True
                break
            mu *= alg.mu_inc
        if not accepted:
            break
        r, J = prob.residual_jacobian(theta)
        _diverged(r @ r, epoch)
        gamma = _effective_params(J.T @ J, alpha, beta)
        E_D = r @ r
        E_W = theta @ theta
        if E_W > 0 and E_D > 0 and N > gamma:
            alpha = max(gamma / (2 * E_W), 1e-12)
            beta = (N - gamma) / (2 * E_D)
        trace["gamma"].append(gamma)
        trace["alpha"].append(alpha)
        trace["beta"].append(beta)
        F = objective(r, theta)
        history.append(_rmse(r))
    return theta, trace


def _armijo(prob, theta, loss, g, d, alg):
    slope = g @ d
    t = 1.0
    for _ in range(alg.max_halvings):
        cand = theta + t * d
        r = prob.residual(cand)
        new = 0.5 * r @ r
        if np.isfinite(new) and new <= loss + alg.c1 * t * slope:
            return cand
        t *= 0.5
    return None


def _bfgs(prob, theta, alg, history):
    P = theta.size
    Hinv = np.eye(P)
    loss, g, _ = prob.loss_grad(theta)
    first = True
    for epoch in range(1, alg.max_epochs + 1):
        if np.linalg.norm(g) < alg.min_grad:
            break
        d = -Hinv @ g
        if g @ d >= 0:
            Hinv = np.eye(P)
            d = -g
        new = _armijo(prob, theta, loss, g, d, alg)
        if new is None:
            break
        loss_new, g_new, r = prob.loss_grad(new)
        _diverged(loss_new, epoch)
        s = new - theta
        yv = g_new - g
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if first:
                Hinv = np.eye(P) * (sy / (yv @ yv))
                first = False
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (yv @ Hy) + rho) * np.outer(s, s)
        theta, loss, g = new, loss_new, g_new
        history.append(_rmse(r))
    return theta, {}


def _conjugate_gradient(prob, theta, alg, history):
    P = theta.size
    loss, g, _ = prob.loss_grad(theta)
    d = -g
    k = 0
    for epoch in range(1, alg.max_epochs + 1):
        if np.linalg.norm(g) < alg.min_grad:
            break
        if g @ d >= 0:
            d = -g
            k = 0
        new = _armijo(prob, theta, loss, g, d, alg)
        if new is None:
            if k == 0:
                break
            d, k = -g, 0
            continue
        loss_new, g_new, r = prob.loss_grad(new)
        _diverged(loss_new, epoch)
        beta = g_new @ (g_new - g) / (g @ g)
        k += 1
        d = -g_new if k % P == 0 else -g_new + beta * d
        theta, loss, g = new, loss_new, g_new
        history.append(_rmse(r))
    return theta, {}


_TRAINERS = {
    "levenberg_marquardt": _levenberg_marquardt,
    "bayesian_regularization": _bayesian_regularization,
    "bfgs": _bfgs,
    "conjugate_gradient": _conjugate_gradient,
}


def train(spec, X, y, algorithm=None, seed=0, normalization=None, init=None):
    """Train a network full-batch. Deterministic given ``seed``.

    ``history`` holds the training RMSE (normalized units) at epoch 0 and
    after every accepted epoch.
    """
    algorithm = algorithm or TrainingAlgorithm()
    if isinstance(algorithm, str):
        algorithm = TrainingAlgorithm(algorithm)
    _check_differentiable(spec)
    Xn, yn = _prepare(spec, X, y, normalization)
    if yn.size == 0:
        raise DataError("no data")
    theta = glorot_init(spec, np.random.default_rng(seed)) if init is None else np.array(init, dtype=np.float64)
    prob = _Problem(spec, Xn, yn)
    r0 = prob.residual(theta)
    _diverged(r0 @ r0, 0)
    history = [_rmse(r0)]
    theta, trace = _TRAINERS[algorithm.name](prob, theta, algorithm, history)
    return TrainedNetwork(spec, theta, normalization, tuple(history), algorithm.name, trace)
