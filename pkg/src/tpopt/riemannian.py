"""Empirical checks of descent on analytic manifolds.

Riemannian gradient descent for ``f(s) = -<s, x>`` on a unit-speed curve
reduces to ``t <- t + step <gamma'(t), x>`` because the exponential map is a
parameter shift. The helpers here run that iteration, measure per-step
contraction toward the true signal, probe the basin of attraction, estimate
covering numbers and tabulate the covering-vs-descent cost comparison.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import ConfigurationError
from .families import AnalyticCurve, TorusFamily
from .observation import make_rng

THEORY_STEP = 1.0 / 64


@dataclass
class DescentTrace:
    ts: np.ndarray
    dist_true: np.ndarray
    objective: np.ndarray
    step: float
    kappa: float
    sigma: float = 0.0
    seed: int = None
    t_true: float = 0.0

    def __post_init__(self):
        if self.dist_true.size != self.ts.size:
            raise ConfigurationError("trace arrays must have equal length")

    @property
    def n_iters(self):
        return self.ts.size - 1

    def dist_to(self, curve, t_ref):
        return curve.distance(self.ts, t_ref)

    def rows(self):
        for k, (d, f) in enumerate(zip(self.dist_true, self.objective)):
            yield {"iteration": k, "distance": float(d), "objective": float(f)}


def riemannian_gd(curve: AnalyticCurve, x, t0, step=THEORY_STEP, iters=2000, t_true=0.0,
                  sigma=0.0, seed=None):
    """Exact Riemannian gradient descent on ``curve`` from ``s(t0)``."""
    x = np.asarray(x, dtype=float)
    ts = np.empty(iters + 1)
    ts[0] = t = float(t0)
    for k in range(iters):
        t = t + step * float(curve.velocity(t) @ x)
        ts[k + 1] = t
    dist = curve.distance(ts, t_true)
    obj = -(curve.point(ts) @ x)
    return DescentTrace(ts, np.asarray(dist, dtype=float), obj, step, curve.curvature,
                        sigma, seed, t_true)


def descent_to_target(curve, x, t0, target, step=THEORY_STEP, max_iters=100000, t_ref=0.0):
    """Iterations until ``d(s^k, s(t_ref)) <= target`` (``max_iters`` if never)."""
    x = np.asarray(x, dtype=float)
    t = float(t0)
    for k in range(max_iters + 1):
        if curve.distance(t, t_ref) <= target:
            return k
        t = t + step * float(curve.velocity(t) @ x)
    return max_iters


def noise_floor(trace, tail=0.1):
    """Terminal plateau: median distance over the last ``tail`` of the run."""
    n = max(1, int(math.ceil(tail * trace.dist_true.size)))
    return float(np.median(trace.dist_true[-n:]))


@dataclass
class ContractionReport:
    max_ratio: float
    ratios: list
    floors: list
    n_counted: int

    @property
    def contracts(self):
        return self.n_counted > 0 and self.max_ratio < 1.0


def measure_contraction(traces, floor=None):
    """Largest ``(d^{k+1} - floor) / (d^k - floor)`` while ``d^k > 2 floor``.

    The floor of each trace defaults to its terminal plateau. Steps that do
    not move at all (stationary traces) are skipped.
    """
    traces = list(traces)
    if not traces:
        raise ConfigurationError("need at least one trace")
    ratios, floors = [], []
    for tr in traces:
        if tr.dist_true.size < 2:
            raise ConfigurationError("trace too short to measure contraction")
        fl = noise_floor(tr) if floor is None else float(floor)
        floors.append(fl)
        d = tr.dist_true
        lead, nxt = d[:-1], d[1:]
        mask = (lead > 2 * fl) & (lead - fl > 0) & (np.abs(nxt - lead) > 0)
        ratios.extend(((nxt[mask] - fl) / (lead[mask] - fl)).tolist())
    max_ratio = max(ratios) if ratios else float("nan")
    return ContractionReport(max_ratio, ratios, floors, len(ratios))


def theory_noise(kappa, ambient_dim, scale=0.05):
    """Noise level ``scale / (kappa sqrt(D))``, inside both noise conditions."""
    return scale / (kappa * math.sqrt(ambient_dim))


def noisy_trace(curve, sigma, seed, init_distance, step=THEORY_STEP, iters=2000, side=1.0):
    """Descent toward ``s(0)`` from ``t0 = side * init_distance`` with ``N(0, sigma^2 I)`` noise."""
    rng = make_rng(seed, 23)
    x = curve.point(0.0) + sigma * rng.standard_normal(curve.ambient_dim)
    return riemannian_gd(curve, x, side * init_distance, step, iters, 0.0, sigma, seed)


def plateau_scaling(curve, sigma, seeds, init_distance=None, step=THEORY_STEP, iters=2000):
    """Mean terminal plateau at ``sigma`` and ``2 sigma`` over ``seeds``.

    Each seed uses the same noise direction at both levels, so the ratio
    isolates the dependence on the noise magnitude.
    """
    init_distance = 0.5 / curve.curvature if init_distance is None else init_distance
    one, two = [], []
    for seed in seeds:
        one.append(noise_floor(noisy_trace(curve, sigma, seed, init_distance, step, iters)))
        two.append(noise_floor(noisy_trace(curve, 2 * sigma, seed, init_distance, step, iters)))
    one, two = np.array(one), np.array(two)
    return {"plateau": float(one.mean()), "plateau_doubled": float(two.mean()),
            "ratio": float(two.mean() / one.mean()),
            "c_fit": float(one.mean() / sigma)}


@dataclass
class BasinReport:
    radii: np.ndarray
    converged: np.ndarray
    basin: float
    kappa: float


def basin_probe(curve, radii, step=THEORY_STEP, iters=4000, tol=1e-4, t_true=0.0):
    """Largest radius ``rho`` such that every probed radius up to it converges.

    Noiseless descent is started from both sides of ``s(t_true)``.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    x = curve.point(t_true)
    ok = np.zeros(radii.size, dtype=bool)
    for i, rho in enumerate(radii):
        ends = [riemannian_gd(curve, x, t_true + side * rho, step, iters, t_true).dist_true[-1]
                for side in (1.0, -1.0)]
        ok[i] = max(ends) < tol
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        basin = float(radii[-1]) if radii.size else 0.0
    elif bad[0] == 0:
        basin = float("nan")
    else:
        basin = float(radii[bad[0] - 1])
    return BasinReport(radii, ok, basin, curve.curvature)


# ----------------------------------------------------------------------------
# covering


def greedy_cover(points, r):
    """Farthest-point insertion until every point is within ``r`` of a center."""
    points = np.asarray(points, dtype=float)
    centers = [0]
    dist = np.linalg.norm(points - points[0], axis=1)
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= r:
            break
        centers.append(far)
        np.minimum(dist, np.linalg.norm(points - points[far], axis=1), out=dist)
    return centers


def manifold_samples(family, budget):
    """Dense, evenly spaced samples of an analytic curve or torus."""
    if isinstance(family, AnalyticCurve):
        per = family.period if family.period is not None else 2 * math.pi
        t = np.linspace(0.0, per, budget, endpoint=False)
        return family.point(t)
    if isinstance(family, TorusFamily):
        n = max(2, int(round(math.sqrt(budget))))
        ax = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        uu, vv = np.meshgrid(ax, ax, indexing="ij")
        return family.signals(np.column_stack([uu.ravel(), vv.ravel()]))
    rng = make_rng(0, 29)
    return family.signals(family.sample_params(rng, budget))


@dataclass
class CoveringResult:
    radius: float
    count: int
    resolution: float
    warning: str = None


def covering_count(family, r, budget=20000):
    """Greedy estimate of the covering number ``N_r`` from a dense sample.

    A warning is attached (and emitted) when sample spacing is not well
    below ``r``.
    """
    if not r > 0:
        raise ConfigurationError("covering radius must be positive")
    pts = manifold_samples(family, budget)
    # spacing of the sample: largest nearest-neighbor distance
    from scipy.spatial import cKDTree
    dd, _ = cKDTree(pts).query(pts, 2)
    resolution = float(dd[:, 1].max())
    warning = None
    if resolution > r / 4:
        warning = f"sample spacing {resolution:.3g} is coarse for radius {r:.3g}"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return CoveringResult(float(r), len(greedy_cover(pts, r)), resolution, warning)


def loglog_slope(radii, counts):
    """Least-squares slope of ``log N_r`` against ``log(1/r)``."""
    x = np.log(1.0 / np.asarray(radii, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class TradeoffEntry:
    radius: float
    covering: int
    n_init: int
    iterations: int
    t_mf: int
    t_tpopt: int


def tradeoff_table(curve, radii, step=THEORY_STEP, sigma=0.0, seed=0, max_iters=100000):
    """Covering cost versus descent cost to reach accuracy ``r``.

    ``T_MF = N_r D``; ``T_TpopT = N_{1/kappa} D (iters d + 1)`` where iters is
    the worst case over starts at distance ``1/kappa`` on either side.
    """
    kappa = curve.curvature
    big_d = curve.ambient_dim
    d = curve.intrinsic_dim
    budget = 20000
    n_init = covering_count(curve, 1.0 / kappa, budget).count
    rng = make_rng(seed, 31)
    x = curve.point(0.0) + sigma * rng.standard_normal(big_d)
    rows = []
    for r in radii:
        r = float(r)
        n_r = covering_count(curve, r, budget).count
        if r >= 1.0 / kappa:
            iters = 0
        else:
            iters = max(descent_to_target(curve, x, side / kappa, r, step, max_iters)
                        for side in (1.0, -1.0))
        rows.append(TradeoffEntry(r, n_r, n_init, iters, n_r * big_d,
                                  n_init * big_d * (iters * d + 1)))
    return rows
