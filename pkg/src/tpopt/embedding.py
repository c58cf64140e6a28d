"""PCA embedding, parameter-space quantization grids and neighbor search."""

from dataclasses import dataclass, field
import itertools

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, RankError
from .observation import make_rng

_KDTREE_MAX_DIM = 8


@dataclass
class EmbeddingModel:
    mean: np.ndarray        # (D,)
    components: np.ndarray  # (d, D), orthonormal rows
    singular_values: np.ndarray = None
    n_samples: int = 0

    @property
    def dim(self):
        return self.components.shape[0]

    def embed(self, s):
        return embed(self, s)

    def reconstruct(self, xi):
        return self.mean + np.asarray(xi) @ self.components


def fit_pca(samples, d, rank_tol=1e-10):
    """Top-``d`` principal directions of centered ``samples``.

    Each component is signed so that its largest-magnitude entry is
    positive, which pins the embedding down across runs.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n <= d:
        raise RankError(f"need more than d={d} samples, got {n}")
    mean = samples.mean(axis=0)
    centered = samples - mean
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv.size < d or sv[d - 1] <= rank_tol * max(sv[0], 1e-300):
        raise RankError(f"centered data has rank < {d}")
    comps = vt[:d].copy()
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(d), lead])
    comps *= signs[:, None]
    return EmbeddingModel(mean, comps, sv[:d].copy(), n)


def embed(model: EmbeddingModel, s):
    """``components @ (s - mean)``; accepts one vector or a stack of rows."""
    s = np.asarray(s, dtype=float)
    return (s - model.mean) @ model.components.T


def reconstruction_error(model, samples):
    samples = np.asarray(samples, dtype=float)
    centered = samples - model.mean
    proj = centered @ model.components.T @ model.components
    return float(np.sum((centered - proj) ** 2))


class NeighborIndex:
    """Exact k-nearest-neighbor queries.

    A k-d tree backs low-dimensional point sets; above eight dimensions a
    linear scan is used. Distance ties go to the lower index in both paths.
    """

    def __init__(self, points):
        self.points = np.ascontiguousarray(np.asarray(points, dtype=float))
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise ConfigurationError("neighbor index needs a nonempty (n, d) array")
        self._tree = cKDTree(self.points) if self.points.shape[1] <= _KDTREE_MAX_DIM else None

    def __len__(self):
        return self.points.shape[0]

    def query(self, queries, k=1):
        """Distances and indices, each of shape ``(n_queries, k)``.

        Results are identical to :func:`linear_scan`: tree candidates are
        re-ranked by exactly recomputed squared distances, and rows whose
        ``k``-th and ``(k+1)``-th candidates are within rounding of each other
        fall back to a full scan.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        k = min(int(k), len(self))
        if self._tree is None:
            return linear_scan(self.points, queries, k)
        kk = min(k + 1, len(self))
        _, idx = self._tree.query(queries, k=kk)
        idx = idx.reshape(queries.shape[0], kk)
        d2 = ((queries[:, None, :] - self.points[idx]) ** 2).sum(-1)
        order = np.lexsort((idx, d2), axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)
        idx = np.take_along_axis(idx, order, axis=1)
        if kk > k:
            close = d2[:, k - 1] >= d2[:, k] * (1 - 1e-9) - 1e-300
            if np.any(close):
                d_rows, i_rows = linear_scan(self.points, queries[close], k)
                d2[close, :k] = d_rows**2
                idx[close, :k] = i_rows
                d_out = np.sqrt(d2[:, :k])
                d_out[close] = d_rows
                return d_out, idx[:, :k]
        return np.sqrt(d2[:, :k]), idx[:, :k]

    def nearest(self, queries):
        dist, idx = self.query(queries, 1)
        return dist[:, 0], idx[:, 0]


def linear_scan(points, queries, k=1):
    points = np.asarray(points, dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return np.sqrt(np.take_along_axis(d2, order, axis=1)), order


@dataclass
class GridConfig:
    kind: str = "even"   # "even" | "subset"
    intervals: int = 30
    n_subset: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("even", "subset"):
            raise ConfigurationError(f"unknown grid kind {self.kind!r}")


@dataclass
class QuantizationGrid:
    """Anchors ``xi_i`` in embedding space with a stored signal for each.

    For even grids ``sample_index`` names the sample whose signal was assigned
    to each lattice point and ``assign_dist`` the embedding distance to it.
    """

    points: np.ndarray
    signals: np.ndarray
    kind: str
    sample_index: np.ndarray
    assign_dist: np.ndarray
    bounds: np.ndarray = None
    intervals: int = None
    index: NeighborIndex = field(default=None, repr=False)

    def __post_init__(self):
        if self.index is None:
            self.index = NeighborIndex(self.points)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def center(self):
        """Initial point: lattice center for even grids, embedding origin otherwise."""
        if self.kind == "even":
            return self.bounds.mean(axis=1)
        return np.zeros(self.dim)


def even_lattice(bounds, intervals):
    axes = [np.linspace(lo, hi, intervals + 1) for lo, hi in bounds]
    return np.array(list(itertools.product(*axes)))


def build_grid(model: EmbeddingModel, signals, config: GridConfig, embedded=None):
    """Quantize embedding space.

    ``even``: a full lattice spanning the per-dimension data range; each
    lattice point takes the signal of its nearest embedded sample.
    ``subset``: a random subset of the embedded samples themselves.
    """
    signals = np.asarray(signals, dtype=float)
    if signals.shape[0] == 0:
        raise ConfigurationError("cannot build a grid from an empty sample set")
    xi = embed(model, signals) if embedded is None else np.asarray(embedded)
    if config.kind == "even":
        bounds = np.column_stack([xi.min(axis=0), xi.max(axis=0)])
        points = even_lattice(bounds, config.intervals)
        dist, nn = NeighborIndex(xi).nearest(points)
        return QuantizationGrid(points, signals[nn], "even", nn, dist, bounds, config.intervals)
    n = min(config.n_subset, xi.shape[0])
    pick = np.sort(make_rng(config.seed, 11).choice(xi.shape[0], size=n, replace=False))
    return QuantizationGrid(xi[pick].copy(), signals[pick], "subset", pick, np.zeros(n))


def distance_distortion(model, signals, n_pairs=2000, seed=0):
    """Summary of ``|xi_i - xi_j| / |s_i - s_j|`` over random sample pairs."""
    signals = np.asarray(signals, dtype=float)
    rng = make_rng(seed, 13)
    i, j = rng.integers(0, signals.shape[0], (2, n_pairs))
    keep = i != j
    ds = np.linalg.norm(signals[i[keep]] - signals[j[keep]], axis=1)
    xi = embed(model, signals)
    dx = np.linalg.norm(xi[i[keep]] - xi[j[keep]], axis=1)
    ok = ds > 0
    ratio = dx[ok] / ds[ok]
    return {
        "median_ratio": float(np.median(ratio)),
        "p10_ratio": float(np.percentile(ratio, 10)),
        "p90_ratio": float(np.percentile(ratio, 90)),
    }
