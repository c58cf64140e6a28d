"""Untrained template optimization in embedding coordinates.

Each layer moves the current estimate using kernel-smoothed Jacobians
looked up at the ``m`` nearest anchors:

    g      = sum_i p_i  J~_k(xi_i)^T x         (p_i: normalized kernel weights)
    xi'    = xi + alpha_k g                    ("gradient" mode)
    xi'    = sum_i p_i xi_i + alpha_k g        ("interpolated" mode)

The interpolated form is exactly the unrolled-network layer with weights
initialized to ``alpha_k J~_k^T``, so the trainable model starts from this
optimizer. Smoothed Jacobians are precomputed per smoothing level; at test
time only the ``m`` lookups per layer and the final inner product cost
multiplications: ``M D (K d m + 1)`` in total.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np

from .counting import MultiplyCounter
from .errors import ConfigurationError, DivergenceError

MODES = ("interpolated", "gradient")

_CHUNK = 4096


@dataclass
class Schedule:
    step_sizes: list
    bandwidths: list
    neighbors: list
    inits: np.ndarray
    monotone: bool = True

    def __post_init__(self):
        self.step_sizes = [float(a) for a in self.step_sizes]
        self.bandwidths = [float(b) for b in self.bandwidths]
        if isinstance(self.neighbors, (int, np.integer)):
            self.neighbors = [int(self.neighbors)] * len(self.step_sizes)
        self.neighbors = [int(m) for m in self.neighbors]
        self.inits = np.atleast_2d(np.asarray(self.inits, dtype=float))
        K = len(self.step_sizes)
        if len(self.bandwidths) != K or len(self.neighbors) != K:
            raise ConfigurationError("per-layer lists must have equal length")
        if self.inits.shape[0] < 1:
            raise ConfigurationError("need at least one initialization")
        if any(a < 0 for a in self.step_sizes):
            raise ConfigurationError("step sizes must be nonnegative")
        if any(b < 0 for b in self.bandwidths):
            raise ConfigurationError("bandwidths must be nonnegative")
        if any(m < 1 for m in self.neighbors):
            raise ConfigurationError("neighbor counts must be positive")
        if self.monotone and any(b1 < b0 for b0, b1 in zip(self.bandwidths, self.bandwidths[1:])):
            raise ConfigurationError("bandwidths must be non-decreasing (coarse to fine)")

    @property
    def n_layers(self):
        return len(self.step_sizes)

    @property
    def n_inits(self):
        return self.inits.shape[0]

    def prefix(self, k):
        return Schedule(self.step_sizes[:k], self.bandwidths[:k], self.neighbors[:k],
                        self.inits, self.monotone)

    def with_neighbors(self, m):
        return Schedule(self.step_sizes, self.bandwidths, [m] * self.n_layers,
                        self.inits, self.monotone)

    def to_dict(self):
        return {
            "step_sizes": list(self.step_sizes),
            "bandwidths": list(self.bandwidths),
            "neighbors": list(self.neighbors),
            "inits": self.inits.tolist(),
            "monotone": bool(self.monotone),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["step_sizes"], data["bandwidths"], data["neighbors"],
                   np.array(data["inits"], dtype=float), data.get("monotone", True))


@dataclass
class TpoptResult:
    final_xi: np.ndarray      # (M, d)
    statistic: float
    signal_index: int
    multiplies: int
    init_index: int = 0
    trajectory: np.ndarray = field(default=None, repr=False)  # (K+1, M, d)


def tpopt_cost(n_inits, n_layers, dim, neighbors, ambient_dim):
    """``M D (K d m + 1)``; ``neighbors`` may be a per-layer sequence."""
    if n_layers == 0:
        return int(n_inits) * int(ambient_dim)
    ms = [neighbors] * n_layers if np.isscalar(neighbors) else list(neighbors)
    if len(ms) != n_layers:
        raise ConfigurationError("need one neighbor count per layer")
    return int(n_inits) * int(ambient_dim) * (int(dim) * sum(int(m) for m in ms) + 1)


def kernel_weights(dist, bandwidth):
    """Normalized truncated-Gaussian weights over each row's active set.

    The minimum squared distance is subtracted before exponentiating; the
    normalized weights are unchanged and cannot all underflow.
    """
    d2 = dist * dist
    e = -bandwidth * (d2 - d2.min(axis=1, keepdims=True))
    w = np.exp(e)
    return w / w.sum(axis=1, keepdims=True)


def layer_update(xi, x, anchors, jac_t, index, bandwidth, m, step, mode, counter):
    """One layer for a batch of rows. ``jac_t`` is ``(N, d, D)``.

    Returns ``(new_xi, g)``.
    """
    dist, idx = index.query(xi, m)
    p = kernel_weights(dist, bandwidth)
    proj = counter.einsum("bmkj,bj->bmk", jac_t[idx], x)
    g = np.einsum("bm,bmk->bk", p, proj)
    if mode == "interpolated":
        base = np.einsum("bm,bmk->bk", p, anchors[idx])
    elif mode == "gradient":
        base = xi
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    return base + step * g, g


def _final_statistic(xi, x, anchor_signals, index, counter):
    _, nn = index.nearest(xi)
    stat = counter.einsum("bj,bj->b", anchor_signals[nn], x)
    return stat, nn


def _check_field(field_, grid):
    if grid is not None and (len(grid) != len(field_) or not np.array_equal(grid.points, field_.anchors)):
        raise ConfigurationError("field and grid do not share anchors")


def transposed(jac):
    """``(N, D, d)`` Jacobians as ``(N, d, D)`` step matrices."""
    return np.ascontiguousarray(np.transpose(jac, (0, 2, 1)))


def tpopt_batch(X, field_, grid, schedule: Schedule, mode="interpolated",
                counter: MultiplyCounter = None, trajectory=False):
    """Run the schedule on every row of ``X``, best over initializations.

    Returns a dict with ``statistic`` (B,), ``signal_index`` (B,),
    ``final_xi`` (B, M, d), ``best_init`` (B,) and optionally
    ``trajectory`` (K+1, B, M, d).
    """
    _check_field(field_, grid)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    counter = counter if counter is not None else MultiplyCounter()
    B, M, d = X.shape[0], schedule.n_inits, field_.dim
    steps = [transposed(field_.smoothed(lam)) for lam in schedule.bandwidths]
    xi = np.broadcast_to(schedule.inits, (B, M, d)).reshape(B * M, d).copy()
    xrep = np.repeat(X, M, axis=0)
    traj = [xi.copy()] if trajectory else None
    for k in range(schedule.n_layers):
        new = np.empty_like(xi)
        for lo in range(0, xi.shape[0], _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            new[sl], _ = layer_update(xi[sl], xrep[sl], field_.anchors, steps[k], field_.index,
                                      schedule.bandwidths[k], schedule.neighbors[k],
                                      schedule.step_sizes[k], mode, counter)
        if not np.all(np.isfinite(new)):
            raise DivergenceError(f"non-finite iterate at layer {k}", layer=k)
        xi = new
        if trajectory:
            traj.append(xi.copy())
    stat, nn = _final_statistic(xi, xrep, field_.anchor_signals, field_.index, counter)
    stat = stat.reshape(B, M)
    nn = nn.reshape(B, M)
    best = np.argmax(stat, axis=1)
    rows = np.arange(B)
    out = {
        "statistic": stat[rows, best],
        "signal_index": nn[rows, best],
        "final_xi": xi.reshape(B, M, d),
        "best_init": best,
        "multiplies": counter.count,
    }
    if trajectory:
        out["trajectory"] = np.stack(traj).reshape(schedule.n_layers + 1, B, M, d)
    return out


def tpopt_run(x, field_, grid, schedule: Schedule, mode="interpolated", counter=None):
    """Template optimization for a single observation."""
    counter = counter if counter is not None else MultiplyCounter()
    start = counter.count
    out = tpopt_batch(np.asarray(x, dtype=float)[None, :], field_, grid, schedule, mode,
                      counter, trajectory=True)
    return TpoptResult(
        final_xi=out["final_xi"][0],
        statistic=float(out["statistic"][0]),
        signal_index=int(out["signal_index"][0]),
        multiplies=counter.count - start,
        init_index=int(out["best_init"][0]),
        trajectory=out["trajectory"][:, 0],
    )


def lattice_inits(grid, n_per_dim):
    """``n_per_dim ** d`` initializations at the centers of equal grid cells."""
    if grid.bounds is None:
        raise ConfigurationError("lattice initializations need an even grid")
    axes = []
    for lo, hi in grid.bounds:
        edges = np.linspace(lo, hi, n_per_dim + 1)
        axes.append((edges[:-1] + edges[1:]) / 2)
    return np.array(list(itertools.product(*axes)))


def greedy_search(X, field_, grid, step_candidates, bandwidth_candidates, n_layers,
                  neighbors=1, inits=None, objective="statistic", labels=None,
                  monotone=True, mode="interpolated"):
    """Layer-wise greedy choice of ``(step, bandwidth)``.

    Layer ``k`` is chosen with layers ``< k`` frozen, scoring each candidate
    as if it were the last layer. ``objective="statistic"`` maximizes the
    mean final statistic over ``X`` (positives); ``"param_error"`` minimizes
    the mean squared distance of the final iterate to ``labels``. Ties go to
    the smaller step, then the smaller bandwidth.
    """
    if not len(step_candidates) or not len(bandwidth_candidates):
        raise ConfigurationError("candidate lists must be nonempty")
    if objective not in ("statistic", "param_error"):
        raise ConfigurationError(f"unknown objective {objective!r}")
    if objective == "param_error" and labels is None:
        raise ConfigurationError("param_error objective needs labels")
    _check_field(field_, grid)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inits = grid.center()[None, :] if inits is None else np.atleast_2d(inits)
    if inits.shape[0] != 1:
        raise ConfigurationError("greedy search tunes single-initialization schedules")
    alphas = sorted(float(a) for a in step_candidates)
    lams = sorted(float(b) for b in bandwidth_candidates)
    counter = MultiplyCounter()
    xi = np.repeat(inits, X.shape[0], axis=0)
    chosen_a, chosen_l = [], []
    history = []
    for k in range(n_layers):
        best = None
        floor = chosen_l[-1] if (monotone and chosen_l) else -np.inf
        for lam in lams:
            if lam < floor:
                continue
            jac_t = transposed(field_.smoothed(lam))
            for alpha in alphas:
                new, _ = layer_update(xi, X, field_.anchors, jac_t, field_.index, lam,
                                      neighbors, alpha, mode, counter)
                if not np.all(np.isfinite(new)):
                    continue
                if objective == "statistic":
                    stat, _ = _final_statistic(new, X, field_.anchor_signals, field_.index, counter)
                    score = float(np.mean(stat))
                else:
                    score = -float(np.mean(np.sum((new - labels) ** 2, axis=1)))
                key = (-score, alpha, lam)
                if best is None or key < best[0]:
                    best = (key, alpha, lam, new)
        if best is None:
            raise DivergenceError(f"every candidate diverged at layer {k}", layer=k)
        _, alpha, lam, xi = best
        chosen_a.append(alpha)
        chosen_l.append(lam)
        history.append(-best[0][0])
    sched = Schedule(chosen_a, chosen_l, [neighbors] * n_layers, inits, monotone)
    sched.history = history
    return sched
