"""Trainable (unrolled) template optimization.

Layer ``k`` maps the current estimate ``xi`` to

    xi' = sum_i p_i(xi) (xi_i + W[k, i] x),   p = softmax(-lambda_k |xi - xi_i|^2)

over the ``m_k`` nearest anchors. The trainable parameters are the per-anchor
matrices ``W[k, i]`` (d x D) and the bandwidths ``lambda_k``; the neighbor set
is treated as locally constant, so it carries no gradient.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .counting import MultiplyCounter
from .errors import ConfigurationError, ContractViolation, DivergenceError, TrainingError
from .observation import make_rng
from .optimizer import kernel_weights, transposed

# bandwidths are projected back onto [_MIN_BANDWIDTH, inf) after each step
_MIN_BANDWIDTH = 1e-8


@dataclass
class UnrolledModel:
    anchors: np.ndarray     # (N, d)
    weights: np.ndarray     # (K, N, d, D)
    bandwidths: np.ndarray  # (K,)
    neighbors: list         # m_k per layer
    xi0: np.ndarray         # (d,)
    index: object = field(default=None, repr=False)
    anchor_signals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.bandwidths = np.asarray(self.bandwidths, dtype=float)
        self.neighbors = [int(m) for m in self.neighbors]
        if self.index is None:
            from .embedding import NeighborIndex
            self.index = NeighborIndex(self.anchors)

    @property
    def n_layers(self):
        return self.weights.shape[0]

    def copy(self):
        return replace(self, weights=self.weights.copy(), bandwidths=self.bandwidths.copy(),
                       neighbors=list(self.neighbors), xi0=self.xi0.copy())

    def with_neighbors(self, m):
        return replace(self, neighbors=[int(m)] * self.n_layers)

    def prefix(self, k):
        return replace(self, weights=self.weights[:k].copy(), bandwidths=self.bandwidths[:k].copy(),
                       neighbors=self.neighbors[:k], xi0=self.xi0.copy())


def init_from_field(field_, schedule, neighbors=None):
    """Weights ``alpha_k J~_k(xi_i)^T`` from a field and a tuned schedule."""
    weights = np.stack([
        alpha * transposed(field_.smoothed(lam))
        for alpha, lam in zip(schedule.step_sizes, schedule.bandwidths)
    ]) if schedule.n_layers else np.zeros((0, len(field_), field_.dim, field_.ambient_dim))
    ms = schedule.neighbors if neighbors is None else [neighbors] * schedule.n_layers
    return UnrolledModel(field_.anchors.copy(), weights, np.array(schedule.bandwidths, dtype=float),
                         ms, schedule.inits[0].copy(), field_.index, field_.anchor_signals)


@dataclass
class Tape:
    x: np.ndarray
    xis: list = field(default_factory=list)    # xi^k, (B, d) for k = 0..K
    idx: list = field(default_factory=list)    # (B, m)
    p: list = field(default_factory=list)      # normalized weights (B, m)
    d2: list = field(default_factory=list)     # squared distances (B, m)
    v: list = field(default_factory=list)      # xi_i + W x per neighbor, (B, m, d)


def forward(model: UnrolledModel, x, counter: MultiplyCounter = None):
    """Final estimates ``(B, d)`` and the tape needed by :func:`backward`."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    counter = counter if counter is not None else MultiplyCounter()
    B = x.shape[0]
    xi = np.broadcast_to(model.xi0, (B, model.xi0.size)).copy()
    tape = Tape(x)
    tape.xis.append(xi)
    for k in range(model.n_layers):
        dist, idx = model.index.query(xi, model.neighbors[k])
        p = kernel_weights(dist, model.bandwidths[k])
        v = model.anchors[idx] + counter.einsum("bmkj,bj->bmk", model.weights[k][idx], x)
        xi = np.einsum("bm,bmk->bk", p, v)
        if not np.all(np.isfinite(xi)):
            raise DivergenceError(f"non-finite iterate at layer {k}", layer=k)
        tape.idx.append(idx)
        tape.p.append(p)
        tape.d2.append(dist * dist)
        tape.v.append(v)
        tape.xis.append(xi)
    return xi, tape


def loss(outputs, labels):
    """Mean squared distance between estimates and target anchors."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    if outputs.shape != labels.shape:
        raise ContractViolation("outputs and labels differ in shape")
    # summing in sorted order makes the value independent of batch order
    per = np.sort(np.sum((outputs - labels) ** 2, axis=1))
    return float(per.sum() / per.size)


def loss_grad(outputs, labels):
    outputs = np.atleast_2d(outputs)
    return 2.0 * (outputs - labels) / outputs.shape[0]


def backward(model: UnrolledModel, tape: Tape, x, grad_out):
    """Reverse pass; returns ``(dW (K, N, d, D), dlambda (K,))``."""
    sparse, dlam = _backward_rows(model, tape, x, grad_out)
    dW = np.zeros_like(model.weights)
    for k, (touched, rows) in enumerate(sparse):
        dW[k][touched] = rows
    return dW, dlam


def _backward_rows(model, tape, x, grad_out):
    """Reverse pass keeping only touched anchors: ``[(anchors, dW rows)] per layer, dlambda``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape != tape.x.shape or not np.array_equal(x, tape.x):
        raise ContractViolation("tape was recorded on a different input")
    if len(tape.idx) != model.n_layers:
        raise ContractViolation("tape depth does not match the model")
    g = np.asarray(grad_out, dtype=float)
    dlam = np.zeros(model.n_layers)
    N, d, D = model.weights.shape[1:]
    sparse = [None] * model.n_layers
    for k in reversed(range(model.n_layers)):
        idx, p, d2, v = tape.idx[k], tape.p[k], tape.d2[k], tape.v[k]
        xi = tape.xis[k]
        # xi^{k+1} = sum_i p_i v_i, v_i = xi_i + W_i x
        coef = p[:, :, None] * g[:, None, :]                    # (B, m, d)
        # collect coefficients per touched anchor, then one dense product with x
        touched, inv = np.unique(idx.reshape(-1), return_inverse=True)
        rows = (inv.reshape(-1)[:, None] * d + np.arange(d)).reshape(-1)
        cols = np.repeat(np.arange(idx.shape[0]), idx.shape[1] * d)
        A = np.zeros((touched.size * d, idx.shape[0]))
        np.add.at(A, (rows, cols), coef.reshape(-1))
        sparse[k] = (touched, (A @ x).reshape(touched.size, d, D))
        gp = np.einsum("bk,bmk->bm", g, v)
        ge = p * (gp - np.sum(p * gp, axis=1, keepdims=True))   # through the softmax
        dlam[k] = -np.sum(ge * d2)
        diff = xi[:, None, :] - model.anchors[idx]              # (B, m, d)
        g = np.einsum("bm,bmk->bk", ge, -2.0 * model.bandwidths[k] * diff)
    return sparse, dlam


def label_argmax(grid_signals, x):
    """Index of the best-correlated anchor signal for each row (first on ties)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.argmax(x @ np.asarray(grid_signals).T, axis=1)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 100
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    train_bandwidths: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning rate must be nonnegative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch size must be positive and epochs nonnegative")


class Adam:
    """Adam with bias correction over a dict of arrays, updated in place."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            params[key] -= self._delta(self.m[key], self.v[key], g)

    def step_rows(self, key, param, rows, g_rows):
        """Update only ``rows`` of a 2-D ``param`` (call after :meth:`step`).

        Rows outside ``rows`` must have zero gradient and zero moments; their
        textbook update is then exactly zero, so skipping them is lossless.
        """
        if key not in self.m:
            self.m[key] = np.zeros_like(param)
            self.v[key] = np.zeros_like(param)
        m, v = self.m[key][rows], self.v[key][rows]
        param[rows] -= self._delta(m, v, g_rows)
        self.m[key][rows], self.v[key][rows] = m, v

    def _delta(self, m, v, g):
        bc1 = 1 - self.beta1**self.t
        bc2 = 1 - self.beta2**self.t
        m *= self.beta1
        m += (1 - self.beta1) * g
        v *= self.beta2
        v += (1 - self.beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += self.eps
        return (self.lr / bc1) * (m / denom)


def train(model: UnrolledModel, x, labels_xi, config: TrainConfig, select=None, select_every=0):
    """Minibatch Adam on the square loss; returns ``(trained, per-epoch losses)``.

    The shuffle order depends only on ``config.seed``. A zero learning rate
    leaves the parameters bitwise unchanged.

    With ``select`` (a model -> score callable) and ``select_every > 0`` the
    model is scored before training and every ``select_every`` batches, and the
    highest-scoring checkpoint is returned (earliest on ties).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels_xi = np.asarray(labels_xi, dtype=float)
    trained = model.copy()
    if config.learning_rate == 0 or config.epochs == 0:
        history = []
        for _ in range(config.epochs):
            out, _ = forward(trained, x)
            history.append(loss(out, labels_xi))
        return trained, history
    watch = select is not None and select_every > 0
    best, best_score = None, None
    if watch:
        best, best_score = trained.copy(), select(trained)
    step = 0
    rng = make_rng(config.seed, 17)
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    # W as a (K N, d D) view; only anchors that ever received a gradient are updated
    K, N = trained.weights.shape[:2]
    w_rows = trained.weights.reshape(K * N, -1)
    active = np.zeros(K * N, dtype=bool)
    params = {"lam": trained.bandwidths}
    history = []
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            xb, yb = x[batch], labels_xi[batch]
            try:
                out, tape = forward(trained, xb)
            except DivergenceError as exc:
                raise TrainingError(f"diverged in epoch {epoch}", epoch=epoch) from exc
            batch_loss = loss(out, yb)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            sparse, dlam = _backward_rows(trained, tape, xb, loss_grad(out, yb))
            opt.step(params, {"lam": dlam} if config.train_bandwidths else {})
            for k, (touched, _) in enumerate(sparse):
                active[k * N + touched] = True
            rows = np.flatnonzero(active)
            g_rows = np.zeros((rows.size, w_rows.shape[1]))
            for k, (touched, grad) in enumerate(sparse):
                g_rows[np.searchsorted(rows, k * N + touched)] = grad.reshape(touched.size, -1)
            opt.step_rows("W", w_rows, rows, g_rows)
            np.maximum(trained.bandwidths, _MIN_BANDWIDTH, out=trained.bandwidths)
            total += batch_loss * len(batch)
            count += len(batch)
            step += 1
            if watch and step % select_every == 0:
                score = select(trained)
                if score > best_score:
                    best, best_score = trained.copy(), score
        history.append(total / count)
        if not np.isfinite(history[-1]):
            raise TrainingError(f"non-finite loss in epoch {epoch}", epoch=epoch)
    return (best if watch else trained), history


def unrolled_statistic(model: UnrolledModel, x, counter: MultiplyCounter = None):
    """``<s(nearest anchor of xi^K), x>`` for each row, plus the anchor index."""
    counter = counter if counter is not None else MultiplyCounter()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi, _ = forward(model, x, counter)
    _, nn = model.index.nearest(xi)
    stat = counter.einsum("bj,bj->b", model.anchor_signals[nn], x)
    return stat, nn, xi
