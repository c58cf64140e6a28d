import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad_vec

from tpopt.errors import ConfigurationError
from tpopt.families import AnalyticCurve, TorusFamily, curve_point
from tpopt.riemannian import (THEORY_STEP, DescentTrace, basin_probe, covering_count,
                              greedy_cover, loglog_slope, measure_contraction, noise_floor,
                              noisy_trace, plateau_scaling, riemannian_gd, theory_noise, tradeoff_table)

CURVES = {1.0: AnalyticCurve.great_circle(16), 2.0: AnalyticCurve.small_circle(2.0, 16),
          4.0: AnalyticCurve.small_circle(4.0, 16)}


def test_stationary_at_observation():
    curve = CURVES[2.0]
    tr = riemannian_gd(curve, curve.point(0.7), 0.7, iters=50, t_true=0.7)
    assert np.all(tr.ts == 0.7)
    assert tr.n_iters == 50 and tr.ts.size == 51
    report = measure_contraction([tr])
    assert report.n_counted == 0 and not report.contracts


def test_one_step_by_hand():
    curve = AnalyticCurve.great_circle(4)
    x = np.array([0.2, 0.9, -0.1, 0.3])
    t0 = 0.4
    # velocity of (cos t, sin t, 0, 0) is (-sin t, cos t, 0, 0)
    t1 = t0 + THEORY_STEP * (-math.sin(t0) * 0.2 + math.cos(t0) * 0.9)
    tr = riemannian_gd(curve, x, t0, iters=1)
    assert abs(tr.ts[1] - t1) < 1e-12


@pytest.mark.parametrize("kappa", [1.0, 2.0, 4.0])
def test_noiseless_descent_contracts(kappa):
    curve = CURVES[kappa]
    for side in (1.0, -1.0):
        tr = riemannian_gd(curve, curve.point(0.0), side * 0.5 / kappa, iters=2000)
        assert np.all(np.diff(tr.dist_true) < 0) or tr.dist_true[-1] == 0
        assert tr.dist_true[-1] < 1e-6
        report = measure_contraction([tr], floor=0.0)
        assert report.contracts


@pytest.mark.parametrize("kappa", [1.0, 2.0, 4.0])
def test_noisy_descent_contracts_outside_floor(kappa):
    curve = CURVES[kappa]
    sigma = theory_noise(kappa, curve.ambient_dim)
    traces = [noisy_trace(curve, sigma, seed, 0.5 / kappa, side=side)
              for seed in range(5) for side in (1.0, -1.0)]
    report = measure_contraction(traces)
    assert report.contracts
    assert all(d >= 0 for tr in traces for d in tr.dist_true)


@pytest.mark.parametrize("kappa", [1.0, 4.0])
def test_plateau_doubles_with_noise(kappa):
    curve = CURVES[kappa]
    sigma = theory_noise(kappa, curve.ambient_dim)
    res = plateau_scaling(curve, sigma, range(10))
    assert 1.5 <= res["ratio"] <= 2.5
    # a loose constant: the plateau stays within a few noise levels
    assert res["plateau"] <= 5 * sigma
    assert res["c_fit"] > 0


def test_noise_floor_and_short_trace():
    tr = DescentTrace(np.zeros(10), np.linspace(1, 0.1, 10), np.zeros(10), 0.1, 1.0)
    assert noise_floor(tr) == pytest.approx(0.1)
    with pytest.raises(ConfigurationError):
        measure_contraction([])
    with pytest.raises(ConfigurationError):
        measure_contraction([DescentTrace(np.zeros(1), np.zeros(1), np.zeros(1), 0.1, 1.0)])


@pytest.mark.parametrize("kappa", [1.0, 2.0, 4.0])
def test_basin_at_least_inverse_curvature(kappa):
    curve = CURVES[kappa]
    radii = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 1.25]) / kappa
    report = basin_probe(curve, radii)
    assert report.converged[0]
    assert report.basin >= 1.0 / kappa


def test_exponential_map_matches_integrated_geodesic():
    curve = AnalyticCurve.rescaled(1 / math.sqrt(2), 1 / math.sqrt(2), 1.0, 3.0, 6)
    for t0 in (0.0, 0.8):
        for v in (-1.0, -0.3, 0.5, 1.0):
            # integrate the unit tangent along the curve, starting from s(t0)
            path, _ = quad_vec(lambda s: curve.velocity(t0 + s), 0.0, v, epsabs=1e-12)
            end = curve_point(curve, t0) + path
            assert np.linalg.norm(curve_point(curve, curve.exp(t0, v)) - end) < 1e-6


def test_cover_trivial_and_greedy():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert greedy_cover(pts, 2.0) == [0]
    centers = greedy_cover(pts, 0.5)
    assert sorted(centers) == [0, 1, 2]
    with pytest.raises(ConfigurationError):
        covering_count(CURVES[1.0], 0.0)


def test_covering_diameter_gives_one():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert covering_count(CURVES[1.0], 2.0, budget=500).count == 1


def test_covering_doubles_on_a_curve():
    curve = CURVES[1.0]
    for r in (0.2, 0.1, 0.05):
        ratio = covering_count(curve, r / 2).count / covering_count(curve, r).count
        assert 1.8 <= ratio <= 2.2


def test_covering_slope_on_product_family():
    fam = TorusFamily(0.6, 4)
    radii = [1.0, 0.5, 0.25, 0.1]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        counts = [covering_count(fam, r, budget=40000).count for r in radii]
    assert all(a <= b for a, b in zip(counts, counts[1:]))
    assert 1.7 <= loglog_slope(radii, counts) <= 2.3


def test_coarse_sampling_warns():
    with pytest.warns(RuntimeWarning):
        res = covering_count(CURVES[1.0], 0.01, budget=100)
    assert res.warning is not None


def test_tradeoff_boundary_and_rows():
    curve = CURVES[2.0]
    radii = [0.5, 0.1, 0.01]
    rows = tradeoff_table(curve, radii)
    assert len(rows) == len(radii)
    first = rows[0]
    assert first.iterations == 0
    assert first.t_tpopt == first.n_init * curve.ambient_dim
    assert first.t_mf == first.covering * curve.ambient_dim
    assert rows[-1].iterations > rows[1].iterations > 0


def test_iterations_grow_logarithmically():
    curve = CURVES[1.0]
    radii = [2.0 ** -j for j in range(2, 9)]
    iters = np.array([r.iterations for r in tradeoff_table(curve, radii)])
    steps = np.diff(iters)
    # each halving of r costs about the same number of iterations
    assert np.all(np.abs(steps - steps.mean()) <= 0.3 * steps.mean())
