"""Kernel-weighted least-squares Jacobians and their kernel-smoothed versions."""

from dataclasses import dataclass, field
import math

import numpy as np

from .embedding import NeighborIndex
from .errors import ConfigurationError, IsolationError, RankDeficiencyError

# exp(-40) ~ 4e-18: beyond this many squared "widths" a weight is noise
_SMOOTH_CUTOFF = 40.0


@dataclass(frozen=True)
class RbfKernel:
    """Truncated Gaussian ``exp(-bandwidth |u-v|^2) 1{|u-v| < radius}``.

    With ``n_neighbors`` set, the radius is chosen per query as the distance
    to the ``n_neighbors``-th nearest point (plus a hair), so exactly that many
    points are active.
    """

    bandwidth: float = 0.0
    radius: float = math.inf
    n_neighbors: int = None

    def __post_init__(self):
        if self.bandwidth < 0:
            raise ConfigurationError("kernel bandwidth must be nonnegative")
        if self.n_neighbors is not None and self.n_neighbors < 1:
            raise ConfigurationError("n_neighbors must be positive")

    def __call__(self, u, v):
        dist = np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(v, dtype=float), axis=-1)
        return self.weights(dist, self.radius)

    def weights(self, dist, radius=None):
        radius = self.radius if radius is None else radius
        dist = np.asarray(dist, dtype=float)
        return np.where(dist < radius, np.exp(-self.bandwidth * dist * dist), 0.0)

    def active(self, index: NeighborIndex, query):
        """Active neighbors of one query point: ``(dist, idx, weights)``."""
        query = np.asarray(query, dtype=float)
        if self.n_neighbors is not None:
            dist, idx = index.query(query[None, :], self.n_neighbors)
            dist, idx = dist[0], idx[0]
            radius = dist[-1] + _radius_slack(dist[-1])
            radius = min(radius, self.radius)
        elif math.isinf(self.radius):
            idx = np.arange(len(index))
            dist = np.linalg.norm(index.points - query, axis=1)
            radius = math.inf
        else:
            idx = np.array(sorted(index._tree.query_ball_point(query, self.radius))
                           if index._tree is not None else
                           np.flatnonzero(np.linalg.norm(index.points - query, axis=1) < self.radius),
                           dtype=int)
            dist = np.linalg.norm(index.points[idx] - query, axis=1) if idx.size else np.zeros(0)
            radius = self.radius
        keep = dist < radius
        return dist[keep], idx[keep], self.weights(dist[keep], radius)

    def describe(self):
        return {"bandwidth": self.bandwidth,
                "radius": None if math.isinf(self.radius) else self.radius,
                "n_neighbors": self.n_neighbors}


def _radius_slack(r):
    return 8 * np.finfo(float).eps * max(1.0, float(r))


def estimate_jacobian(center_xi, center_s, xis, ss, kernel: RbfKernel, ridge="auto", anchor=None):
    """Weighted least-squares Jacobian at ``center_xi``.

    Minimizes ``sum_j w_j |s_j - s_c - J (xi_j - xi_c)|^2`` over ``J`` in
    closed form. ``ridge='auto'`` adds ``1e-8 trace(G) / d`` to the normal
    matrix ``G``; pass ``0.0`` for the unregularized solve.
    """
    center_xi = np.asarray(center_xi, dtype=float)
    dxi = np.atleast_2d(np.asarray(xis, dtype=float)) - center_xi
    ds = np.atleast_2d(np.asarray(ss, dtype=float)) - np.asarray(center_s, dtype=float)
    d = center_xi.size
    dist = np.linalg.norm(dxi, axis=1)
    if kernel.n_neighbors is not None:
        order = np.argsort(dist, kind="stable")
        order = order[dist[order] > 0][: kernel.n_neighbors]
        radius = dist[order[-1]] + _radius_slack(dist[order[-1]]) if order.size else 0.0
        radius = min(radius, kernel.radius)
    else:
        radius = kernel.radius
    w = kernel.weights(dist, radius)
    keep = (w > 0) & (dist > 0)
    if np.count_nonzero(keep) < d + 1:
        raise RankDeficiencyError(
            f"anchor {anchor}: {np.count_nonzero(keep)} neighbors inside the kernel, need {d + 1}",
            anchor,
        )
    w, dxi, ds = w[keep], dxi[keep], ds[keep]
    if ridge == "auto":
        ridge = 1e-8 * np.sum(w[:, None] * dxi * dxi) / d
    # (sum w ds dxi^T)(sum w dxi dxi^T + ridge I)^-1, solved as the equivalent
    # stacked least-squares problem to avoid squaring the condition number
    root = np.sqrt(w)[:, None]
    lhs = np.vstack([root * dxi, math.sqrt(ridge) * np.eye(d)])
    rhs = np.vstack([root * ds, np.zeros((d, ds.shape[1]))])
    sv = np.linalg.svd(lhs, compute_uv=False)
    if not sv[-1] > 1e-7 * max(sv[0], 1e-300):
        raise RankDeficiencyError(f"anchor {anchor}: singular normal matrix", anchor)
    return np.linalg.lstsq(lhs, rhs, rcond=None)[0].T


@dataclass
class JacobianField:
    """Raw Jacobian estimates ``(N, D, d)`` at every anchor of a grid."""

    anchors: np.ndarray
    raw: np.ndarray
    anchor_signals: np.ndarray
    kernel: dict = field(default_factory=dict)
    ridge: str = "auto"
    index: NeighborIndex = field(default=None, repr=False)
    _smoothed: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.index is None:
            self.index = NeighborIndex(self.anchors)
        if not np.all(np.isfinite(self.raw)):
            raise RankDeficiencyError("Jacobian field contains non-finite entries")

    def __len__(self):
        return self.anchors.shape[0]

    @property
    def ambient_dim(self):
        return self.raw.shape[1]

    @property
    def dim(self):
        return self.raw.shape[2]

    def smoothed(self, bandwidth, radius=None):
        """Smoothed Jacobians at every anchor, cached per kernel."""
        key = (float(bandwidth), radius)
        if key not in self._smoothed:
            self._smoothed[key] = smoothed_jacobians(self, bandwidth, radius)
        return self._smoothed[key]


def build_field(grid, sample_xi, sample_signals, kernel: RbfKernel = None, ridge="auto"):
    """Estimate Jacobians at every anchor of ``grid`` from embedded samples.

    Even-grid anchors are expanded around the sample whose signal they were
    assigned; subset anchors are samples themselves.
    """
    kernel = kernel if kernel is not None else RbfKernel(0.0, n_neighbors=grid.dim + 2)
    sample_xi = np.asarray(sample_xi, dtype=float)
    sample_signals = np.asarray(sample_signals, dtype=float)
    sample_index = NeighborIndex(sample_xi)
    n_query = (kernel.n_neighbors + 1) if kernel.n_neighbors is not None else None
    raw = np.empty((len(grid), sample_signals.shape[1], grid.dim))
    for i, center in enumerate(grid.sample_index):
        cxi = sample_xi[center]
        if n_query is not None:
            _, nb = sample_index.query(cxi[None, :], n_query)
            nb = nb[0]
        else:
            nb = np.arange(sample_xi.shape[0])
        raw[i] = estimate_jacobian(cxi, sample_signals[center], sample_xi[nb],
                                   sample_signals[nb], kernel, ridge, anchor=i)
    return JacobianField(grid.points.copy(), raw, grid.signals.copy(), kernel.describe(), ridge,
                         grid.index)


def default_smoothing_radius(bandwidth):
    return math.sqrt(_SMOOTH_CUTOFF / bandwidth) if bandwidth > 0 else math.inf


def smoothed_jacobians(field_: JacobianField, bandwidth, radius=None):
    """``Z^-1 sum_j w_ij J_j`` evaluated at every anchor ``i``."""
    radius = default_smoothing_radius(bandwidth) if radius is None else radius
    pts = field_.anchors
    # dense pairwise weights; anchor counts here are a few thousand at most
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    w = np.where(d2 < radius * radius, np.exp(-bandwidth * d2), 0.0)
    z = w.sum(axis=1)
    n, big_d, d = field_.raw.shape
    out = (w @ field_.raw.reshape(n, big_d * d)) / z[:, None]
    return out.reshape(n, big_d, d)


def _resolve(field_, xi, kernel, neighbors):
    xi = np.asarray(xi, dtype=float)
    if neighbors is not None:
        idx = np.asarray(neighbors, dtype=int)
    else:
        _, idx, _ = kernel.active(field_.index, xi)
    if idx.size == 0:
        raise IsolationError(f"no anchor inside the kernel around {xi.tolist()}")
    # weights relative to the closest active anchor: only ratios matter and
    # the shift keeps very sharp kernels from underflowing
    d2 = np.sum((field_.anchors[idx] - xi) ** 2, axis=1)
    return idx, np.exp(-kernel.bandwidth * (d2 - d2.min()))


def smooth_jacobian(field_: JacobianField, xi, kernel: RbfKernel, neighbors=None):
    """Kernel-smoothed Jacobian ``(D, d)`` at an arbitrary point.

    ``neighbors`` freezes the active set (weights are still Gaussian in the
    distance) which is what gradient checks need.
    """
    idx, w = _resolve(field_, xi, kernel, neighbors)
    return np.tensordot(w / w.sum(), field_.raw[idx], axes=1)


def smooth_jacobian_or_nearest(field_, xi, kernel, diagnostics=None):
    """Like :func:`smooth_jacobian` but falls back to the nearest anchor."""
    try:
        return smooth_jacobian(field_, xi, kernel)
    except IsolationError:
        if diagnostics is not None:
            diagnostics["isolated"] = diagnostics.get("isolated", 0) + 1
        _, nn = field_.index.nearest(np.asarray(xi, dtype=float)[None, :])
        return field_.raw[nn[0]]


def smoothed_objective(field_: JacobianField, xi, x, kernel: RbfKernel, neighbors=None):
    """``-Z^-1 sum_j w_j <s_j, x>`` over the kernel neighborhood of ``xi``."""
    idx, w = _resolve(field_, xi, kernel, neighbors)
    corr = field_.anchor_signals[idx] @ np.asarray(x, dtype=float)
    return -float(w @ corr / w.sum())
