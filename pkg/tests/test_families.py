import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpopt.errors import DegenerateInputError, ParameterDomainError
from tpopt.families import (AnalyticCurve, ChirpFamily, ChirpParams, ImageFamily,
                            ImageTransformParams, TorusFamily, curve_point, generate_chirp,
                            transform_image)


def reference_chirp(f0, c, rate, duration=1.0, peak=0.9, rise=0.3, shift=0.0):
    # straight-line transcription, one sample at a time
    n = int(round(duration * rate))
    t_peak = peak * duration
    rise_len = min(rise * duration, t_peak)
    fall = duration - t_peak
    out = []
    for i in range(n):
        t = i / rate
        if t_peak - rise_len <= t <= t_peak:
            env = 0.5 - 0.5 * math.cos(math.pi * (t - t_peak + rise_len) / rise_len)
        elif t > t_peak:
            env = 0.5 + 0.5 * math.cos(math.pi * (t - t_peak) / fall)
        else:
            env = 0.0
        u = t - shift
        out.append(env * math.sin(2 * math.pi * (f0 * u + c * u * u / 2)))
    norm = math.sqrt(sum(v * v for v in out))
    return np.array([v / norm for v in out])


def test_pure_sinusoid():
    w = generate_chirp(ChirpParams(4.0, 0.0, 1.0, 64.0, envelope="flat"))
    t = np.arange(64) / 64
    ref = np.sin(2 * np.pi * 4 * t)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w, ref / np.linalg.norm(ref), atol=1e-12)


def test_nyquist_violation():
    with pytest.raises(ParameterDomainError):
        ChirpParams(100.0, 30.0, 1.0, 256.0)
    with pytest.raises(ParameterDomainError):
        ChirpParams(120.0, 8.0, 1.0, 256.0)
    with pytest.raises(ParameterDomainError):
        ChirpParams(-1.0, 0.0)


def test_chirp_matches_reference():
    w = generate_chirp(ChirpParams(8.0, 16.0, 1.0, 256.0))
    np.testing.assert_allclose(w, reference_chirp(8.0, 16.0, 256.0), atol=1e-12)


def test_peak_origin_matches_reference():
    w = generate_chirp(ChirpParams(40.0, -6.0, 1.0, 256.0, rise_fraction=0.9,
                                   phase_origin="peak"))
    np.testing.assert_allclose(w, reference_chirp(40.0, -6.0, 256.0, rise=0.9, shift=0.9),
                               atol=1e-12)


def test_family_agrees_with_generator():
    for origin in ("start", "peak"):
        fam = ChirpFamily((30, 60), (-10, 10), rise_fraction=0.9, phase_origin=origin)
        xi = np.array([[31.5, 4.0], [59.0, -9.5]])
        S = fam.signals(xi)
        for row, (f0, c) in zip(S, xi):
            ref = generate_chirp(ChirpParams(f0, c, 1.0, 256.0, 0.9, "raised_cosine", 0.9, origin))
            np.testing.assert_allclose(row, ref, atol=1e-13)


def test_family_rejects_out_of_domain():
    fam = ChirpFamily()
    with pytest.raises(ParameterDomainError):
        fam.signal([29.0, 0.0])
    with pytest.raises(ParameterDomainError):
        ChirpFamily((120.0, 127.0), (0.0, 10.0))


def test_envelope_peaks_at_position():
    fam = ChirpFamily(rise_fraction=0.5)
    assert np.argmax(fam._env) == int(0.9 * 256)


@settings(max_examples=50, deadline=None)
@given(st.floats(30, 34), st.floats(-10, 10))
def test_chirp_deterministic_unit_norm(f0, c):
    fam = ChirpFamily()
    a = fam.signal([f0, c])
    b = fam.signal([f0, c])
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) < 1e-9


def test_unit_norm_all_families():
    rng = np.random.default_rng(0)
    base = rng.random((8, 8))
    fams = [ChirpFamily(), ChirpFamily((30, 60), (-10, 10), phase_origin="peak"),
            AnalyticCurve.small_circle(2.0, 8), TorusFamily(0.6, 6), ImageFamily(base)]
    for fam in fams:
        n = 100 if isinstance(fam, ImageFamily) else 1000
        _, S = fam.sample(rng, n)
        np.testing.assert_allclose(np.linalg.norm(S, axis=1), 1.0, atol=1e-9)


def test_chirp_lipschitz():
    fam = ChirpFamily()
    xi = np.array([32.0, 1.0])
    direction = np.array([0.6, 0.8])
    gaps = [np.linalg.norm(fam.signal(xi + h * direction) - fam.signal(xi))
            for h in (1e-3, 1e-4, 1e-5)]
    # linear decay: each tenfold smaller step gives a tenfold smaller change
    assert gaps[0] > gaps[1] > gaps[2]
    np.testing.assert_allclose([gaps[0] / gaps[1], gaps[1] / gaps[2]], 10.0, rtol=0.05)


# ----------------------------------------------------------------------------
# analytic curves


def test_great_circle():
    curve = AnalyticCurve.great_circle()
    np.testing.assert_allclose(curve_point(curve, 0.0), [1, 0, 0, 0])
    assert curve.curvature == 1.0


def test_curve_validation():
    with pytest.raises(ParameterDomainError):
        AnalyticCurve(0.5, 0.5, 1.0, 1.0)
    with pytest.raises(ParameterDomainError):
        AnalyticCurve(1.0, 0.0, 2.0, 0.0)
    with pytest.raises(ParameterDomainError):
        AnalyticCurve(1.0, 0.0, 1.0, 0.0, ambient_dim=3)


def fd_acceleration(curve, t, h=1e-4):
    return (curve.point(t + h) - 2 * curve.point(t) + curve.point(t - h)) / h**2


def test_curvature_by_finite_differences():
    curve = AnalyticCurve.rescaled(1 / math.sqrt(2), 1 / math.sqrt(2), 1.0, 3.0)
    expected = math.sqrt(curve.a**2 * curve.p**4 + curve.b**2 * curve.q**4)
    ts = np.random.default_rng(1).uniform(0, 2 * math.pi, 100)
    for t in ts:
        assert abs(np.linalg.norm(fd_acceleration(curve, t)) - expected) < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.2, 3.0), st.floats(0.2, 5.0), st.floats(-10, 10))
def test_curve_unit_speed_and_curvature(a, p, q, t):
    b = math.sqrt(1 - a * a)
    curve = AnalyticCurve.rescaled(a, b, p, q, 6)
    h = 1e-6
    speed = np.linalg.norm(curve.point(t + h) - curve.point(t - h)) / (2 * h)
    assert abs(speed - 1) < 1e-6
    assert abs(np.linalg.norm(curve.point(t)) - 1) < 1e-12
    assert abs(np.linalg.norm(fd_acceleration(curve, t)) - curve.curvature) < 1e-4 * max(
        1.0, curve.curvature**2)


def test_curve_periodicity():
    curve = AnalyticCurve.rescaled(1 / math.sqrt(2), 1 / math.sqrt(2), 1.0, 3.0)
    per = curve.period
    assert per is not None
    for t in (0.0, 0.3, 2.0):
        np.testing.assert_allclose(curve_point(curve, t + per), curve_point(curve, t), atol=1e-9)
    assert AnalyticCurve.rescaled(0.6, 0.8, 1.0, math.sqrt(2)).period is None


def test_exp_is_translation():
    curve = AnalyticCurve.small_circle(3.0)
    assert curve.exp(0.4, 0.25) == pytest.approx(0.65)
    # exp of a short tangent step stays at distance |v| along the curve
    assert curve.distance(0.4, curve.exp(0.4, 0.25)) == pytest.approx(0.25)


def test_torus_jacobian():
    fam = TorusFamily(0.6)
    xi = np.array([0.7, 2.1])
    h = 1e-6
    fd = np.column_stack([(fam.signal(xi + h * e) - fam.signal(xi - h * e)) / (2 * h)
                          for e in np.eye(2)])
    np.testing.assert_allclose(fam.jacobian(xi), fd, atol=1e-8)


# ----------------------------------------------------------------------------
# images


RASTER = np.arange(1.0, 17.0).reshape(4, 4)


def test_identity_transform():
    out = transform_image(ImageTransformParams(0.0, 0.0, 0.0, RASTER))
    np.testing.assert_allclose(out, RASTER.ravel() / np.linalg.norm(RASTER))


def test_full_turn():
    a = transform_image(ImageTransformParams(0.0, 0.0, 360.0, RASTER))
    b = transform_image(ImageTransformParams(0.0, 0.0, 0.0, RASTER))
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_quarter_turn_exact():
    # counter-clockwise quarter turn as displayed: the top row becomes the left column
    expected = np.array([[4, 8, 12, 16],
                         [3, 7, 11, 15],
                         [2, 6, 10, 14],
                         [1, 5, 9, 13]], dtype=float)
    out = transform_image(ImageTransformParams(0.0, 0.0, 90.0, RASTER))
    assert np.array_equal(out, expected.ravel() / np.linalg.norm(expected))


def test_translation_one_pixel():
    out = transform_image(ImageTransformParams(0.25, 0.0, 0.0, RASTER)).reshape(4, 4)
    shifted = np.zeros((4, 4))
    shifted[:, 1:] = RASTER[:, :-1]
    np.testing.assert_allclose(out, shifted / np.linalg.norm(shifted), atol=1e-12)


def test_degenerate_images():
    with pytest.raises(DegenerateInputError):
        transform_image(ImageTransformParams(0.0, 0.0, 0.0, np.zeros((4, 4))))
    with pytest.raises(DegenerateInputError):
        transform_image(ImageTransformParams(2.0, 0.0, 0.0, RASTER))


def test_image_family_bounds():
    fam = ImageFamily(RASTER)
    np.testing.assert_allclose(fam.bounds, [[-0.1, 0.1], [-0.1, 0.1], [-30, 30]])
    params, _ = fam.sample(np.random.default_rng(0), 50)
    assert np.all(np.abs(params[:, :2]) <= 0.1) and np.all(np.abs(params[:, 2]) <= 30)
