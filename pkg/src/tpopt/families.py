"""Signal families: unit-norm signal sets parameterized by a few numbers.

Three kinds are provided:

* :class:`ChirpFamily` - windowed linear chirps, a synthetic stand-in for
  compact-binary gravitational waveforms (parameters: base frequency and
  chirp rate).
* :class:`AnalyticCurve` / :class:`TorusFamily` - closed-form constant
  curvature manifolds with exact exponential maps, used by the descent lab.
* :class:`ImageFamily` - Euclidean transforms (translation + rotation) of a
  base raster, flattened.

All generators return l2-normalized float64 vectors and are deterministic.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from .errors import DegenerateInputError, ParameterDomainError

_NORM_TOL = 1e-9


def _normalize(w):
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateInputError("cannot normalize an all-zero signal")
    return w / norm


class SignalFamily:
    """Map from parameters ``xi`` in a box to unit vectors in ``R^D``.

    Subclasses implement :meth:`signals`; everything else is shared.
    """

    ambient_dim: int
    intrinsic_dim: int

    @property
    def bounds(self):
        """``(d, 2)`` array of closed per-dimension intervals."""
        raise NotImplementedError

    def signals(self, params):
        """Signals for a ``(n, d)`` array of parameters, shape ``(n, D)``."""
        raise NotImplementedError

    def signal(self, xi):
        return self.signals(np.atleast_2d(np.asarray(xi, dtype=float)))[0]

    def __call__(self, xi):
        return self.signal(xi)

    def check_params(self, params):
        params = np.atleast_2d(np.asarray(params, dtype=float))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if params.shape[1] != self.intrinsic_dim:
            raise ParameterDomainError(
                f"expected {self.intrinsic_dim} parameters, got {params.shape[1]}"
            )
        if not np.all(np.isfinite(params)) or np.any(params < lo) or np.any(params > hi):
            raise ParameterDomainError(f"parameters outside domain {self.bounds.tolist()}")
        return params

    def sample_params(self, rng, n):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + (hi - lo) * rng.random((n, self.intrinsic_dim))

    def sample(self, rng, n):
        params = self.sample_params(rng, n)
        return params, self.signals(params)

    def describe(self):
        """JSON-friendly description recorded in artifact metadata."""
        return {"kind": type(self).__name__}


# ----------------------------------------------------------------------------
# chirps


@dataclass(frozen=True)
class ChirpParams:
    """One windowed linear chirp.

    ``rise_fraction`` is the length (as a fraction of ``duration``) of the
    raised-cosine attack that ends at the envelope peak; the decay runs from
    the peak to the end of the segment. ``phase_origin`` sets where the
    chirp time axis starts: ``"start"`` uses the sample times themselves,
    ``"peak"`` measures time from the envelope peak, so every member passes
    through zero phase at the peak (as aligned merger waveforms do).
    """

    f0: float
    chirp_rate: float
    duration: float = 1.0
    sample_rate: float = 256.0
    peak_position: float = 0.9
    envelope: str = "raised_cosine"
    rise_fraction: float = 0.3
    phase_origin: str = "start"

    def __post_init__(self):
        if not self.f0 > 0:
            raise ParameterDomainError(f"base frequency must be positive, got {self.f0}")
        if self.phase_origin not in PHASE_ORIGINS:
            raise ParameterDomainError(f"unknown phase origin {self.phase_origin!r}")
        nyquist = self.sample_rate / 2
        shift = self.time_shift
        ends = [abs(self.f0 + self.chirp_rate * (t - shift)) for t in (0.0, self.duration)]
        top = max(ends)
        if top >= nyquist:
            raise ParameterDomainError(
                f"instantaneous frequency {top} reaches Nyquist {nyquist}"
            )
        if not 0 < self.peak_position < 1:
            raise ParameterDomainError("peak_position must lie in (0, 1)")
        if self.envelope not in ("raised_cosine", "flat"):
            raise ParameterDomainError(f"unknown envelope {self.envelope!r}")

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))

    @property
    def time_shift(self):
        return self.peak_position * self.duration if self.phase_origin == "peak" else 0.0


PHASE_ORIGINS = ("start", "peak")


def chirp_phase_times(t, duration, peak_position, phase_origin):
    """Time axis of the chirp phase."""
    return t - peak_position * duration if phase_origin == "peak" else t


def chirp_times(duration, sample_rate):
    n = int(round(duration * sample_rate))
    return np.arange(n) / sample_rate


def chirp_envelope(t, duration, peak_position=0.9, rise_fraction=0.3, kind="raised_cosine"):
    """Raised-cosine attack up to the peak, raised-cosine decay after it."""
    if kind == "flat":
        return np.ones_like(t)
    t_peak = peak_position * duration
    rise = min(rise_fraction * duration, t_peak)
    fall = duration - t_peak
    env = np.zeros_like(t)
    up = (t >= t_peak - rise) & (t <= t_peak)
    env[up] = 0.5 * (1 - np.cos(np.pi * (t[up] - (t_peak - rise)) / rise))
    down = t > t_peak
    env[down] = 0.5 * (1 + np.cos(np.pi * (t[down] - t_peak) / fall))
    return env


def generate_chirp(params: ChirpParams):
    """Unit-norm samples ``env(t) * sin(2 pi (f0 u + c u^2 / 2))``, ``u`` the phase time."""
    t = chirp_times(params.duration, params.sample_rate)
    env = chirp_envelope(
        t, params.duration, params.peak_position, params.rise_fraction, params.envelope
    )
    u = t - params.time_shift
    w = env * np.sin(2 * np.pi * (params.f0 * u + 0.5 * params.chirp_rate * u * u))
    return _normalize(w)


class ChirpFamily(SignalFamily):
    """Two-parameter chirp family ``xi = (f0, chirp_rate)``."""

    intrinsic_dim = 2

    def __init__(
        self,
        f0_range=(30.0, 34.0),
        chirp_rate_range=(-10.0, 10.0),
        duration=1.0,
        sample_rate=256.0,
        peak_position=0.9,
        rise_fraction=0.3,
        envelope="raised_cosine",
        phase_origin="start",
    ):
        self.phase_origin = phase_origin
        self.f0_range = tuple(float(v) for v in f0_range)
        self.chirp_rate_range = tuple(float(v) for v in chirp_rate_range)
        self.duration = float(duration)
        self.sample_rate = float(sample_rate)
        self.peak_position = float(peak_position)
        self.rise_fraction = float(rise_fraction)
        self.envelope = envelope
        # validate the corners of the box once
        for f0 in self.f0_range:
            for c in self.chirp_rate_range:
                self._params(f0, c)
        self._t = chirp_times(self.duration, self.sample_rate)
        self._env = chirp_envelope(
            self._t, self.duration, self.peak_position, self.rise_fraction, envelope
        )
        self.ambient_dim = self._t.size

    def _params(self, f0, c):
        return ChirpParams(
            f0, c, self.duration, self.sample_rate, self.peak_position,
            self.envelope, self.rise_fraction, self.phase_origin,
        )

    @property
    def bounds(self):
        return np.array([self.f0_range, self.chirp_rate_range])

    def signals(self, params):
        params = self.check_params(params)
        f0 = params[:, :1]
        c = params[:, 1:2]
        t = chirp_phase_times(self._t, self.duration, self.peak_position, self.phase_origin)
        w = self._env * np.sin(2 * np.pi * (f0 * t + 0.5 * c * t * t))
        return _normalize(w)

    def describe(self):
        return {
            "kind": "chirp",
            "f0_range": list(self.f0_range),
            "chirp_rate_range": list(self.chirp_rate_range),
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "peak_position": self.peak_position,
            "rise_fraction": self.rise_fraction,
            "envelope": self.envelope,
            "phase_origin": self.phase_origin,
        }


# ----------------------------------------------------------------------------
# analytic manifolds


@dataclass(frozen=True)
class AnalyticCurve(SignalFamily):
    """Unit-speed curve ``a(cos pt, sin pt, 0..) + b(0, 0, cos qt, sin qt, 0..)``.

    Requires ``a^2 + b^2 = 1`` (unit norm) and ``a^2 p^2 + b^2 q^2 = 1``
    (unit speed). The curve is a geodesic of itself, so the exponential map
    is translation of the parameter and the extrinsic curvature is the
    constant ``sqrt(a^2 p^4 + b^2 q^4)``.
    """

    a: float
    b: float
    p: float
    q: float
    ambient_dim: int = 4
    intrinsic_dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.ambient_dim < 4:
            raise ParameterDomainError("an analytic curve needs ambient_dim >= 4")
        if abs(self.a**2 + self.b**2 - 1) > 1e-9:
            raise ParameterDomainError("amplitudes must satisfy a^2 + b^2 = 1")
        if abs(self.a**2 * self.p**2 + self.b**2 * self.q**2 - 1) > 1e-9:
            raise ParameterDomainError("frequencies must satisfy a^2 p^2 + b^2 q^2 = 1")

    @classmethod
    def great_circle(cls, ambient_dim=4):
        return cls(1.0, 0.0, 1.0, 0.0, ambient_dim)

    @classmethod
    def small_circle(cls, kappa, ambient_dim=4):
        """Circle of radius ``1/kappa`` on the sphere (curvature ``kappa >= 1``)."""
        if kappa < 1:
            raise ParameterDomainError("curves on the unit sphere have curvature >= 1")
        b = 1.0 / kappa
        return cls(math.sqrt(1 - b * b), b, 0.0, float(kappa), ambient_dim)

    @classmethod
    def rescaled(cls, a, b, p, q, ambient_dim=4):
        """Normalize amplitudes and rescale time to unit speed."""
        norm = math.hypot(a, b)
        a, b = a / norm, b / norm
        speed = math.sqrt(a * a * p * p + b * b * q * q)
        return cls(a, b, p / speed, q / speed, ambient_dim)

    @property
    def curvature(self):
        return math.sqrt(self.a**2 * self.p**4 + self.b**2 * self.q**4)

    @property
    def period(self):
        """Smallest common period, or ``None`` if ``p`` and ``q`` are incommensurate."""
        freqs = [f for f, amp in ((self.p, self.a), (self.q, self.b)) if f != 0 and amp != 0]
        if not freqs:
            return None
        base = freqs[0]
        ratios = [Fraction(f / base).limit_denominator(1000) for f in freqs]
        if any(abs(float(r) - f / base) > 1e-12 for r, f in zip(ratios, freqs)):
            return None
        den = math.lcm(*(r.denominator for r in ratios))
        nums = [abs(r.numerator * den // r.denominator) for r in ratios]
        return 2 * math.pi * den / (abs(base) * math.gcd(*nums))

    @property
    def bounds(self):
        per = self.period
        return np.array([[0.0, per if per is not None else 2 * math.pi]])

    def check_params(self, params):
        # periodic: every real parameter is valid
        params = np.atleast_2d(np.asarray(params, dtype=float))
        if params.shape[1] != 1 or not np.all(np.isfinite(params)):
            raise ParameterDomainError("curve parameters must be finite scalars")
        return params

    def _frame(self, t, order):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.ambient_dim,))
        for k, (amp, f) in enumerate(((self.a, self.p), (self.b, self.q))):
            ph = f * t
            scale = amp * f**order
            # d^n/dt^n (cos, sin) rotates the pair by n quarter turns
            c, s = np.cos(ph + order * np.pi / 2), np.sin(ph + order * np.pi / 2)
            out[..., 2 * k] = scale * c
            out[..., 2 * k + 1] = scale * s
        return out

    def point(self, t):
        return self._frame(t, 0)

    def velocity(self, t):
        return self._frame(t, 1)

    def acceleration(self, t):
        return self._frame(t, 2)

    def exp(self, t, v):
        """Exponential map at ``s(t)`` applied to tangent coordinate ``v``."""
        return t + v

    def distance(self, t1, t2):
        """Intrinsic (arc-length) distance between ``s(t1)`` and ``s(t2)``."""
        delta = np.abs(np.asarray(t1, dtype=float) - t2)
        per = self.period
        if per is None:
            return delta
        delta = np.mod(delta, per)
        return np.minimum(delta, per - delta)

    def signals(self, params):
        params = self.check_params(params)
        return self.point(params[:, 0])

    def jacobian(self, xi):
        return self.velocity(np.asarray(xi, dtype=float).reshape(-1)[0])[:, None]

    def describe(self):
        return {"kind": "curve", "a": self.a, "b": self.b, "p": self.p, "q": self.q,
                "ambient_dim": self.ambient_dim}


def curve_point(curve: AnalyticCurve, t):
    """Point ``s(t)`` on an analytic curve; ``curve_point(c, t + v)`` is ``exp_{s(t)}(v)``."""
    return curve.point(t)


class TorusFamily(SignalFamily):
    """Flat torus ``(a cos u, a sin u, b cos v, b sin v)`` with ``a^2 + b^2 = 1``."""

    intrinsic_dim = 2

    def __init__(self, a=math.sqrt(0.5), ambient_dim=4):
        if not 0 < a < 1:
            raise ParameterDomainError("torus radius a must lie in (0, 1)")
        self.a = float(a)
        self.b = math.sqrt(1 - a * a)
        self.ambient_dim = int(ambient_dim)

    @property
    def bounds(self):
        return np.array([[0.0, 2 * math.pi], [0.0, 2 * math.pi]])

    def check_params(self, params):
        params = np.atleast_2d(np.asarray(params, dtype=float))
        if params.shape[1] != 2 or not np.all(np.isfinite(params)):
            raise ParameterDomainError("torus parameters must be finite pairs")
        return params

    def signals(self, params):
        params = self.check_params(params)
        out = np.zeros((params.shape[0], self.ambient_dim))
        u, v = params[:, 0], params[:, 1]
        out[:, 0] = self.a * np.cos(u)
        out[:, 1] = self.a * np.sin(u)
        out[:, 2] = self.b * np.cos(v)
        out[:, 3] = self.b * np.sin(v)
        return out

    def jacobian(self, xi):
        u, v = np.asarray(xi, dtype=float).reshape(-1)[:2]
        jac = np.zeros((self.ambient_dim, 2))
        jac[0, 0], jac[1, 0] = -self.a * np.sin(u), self.a * np.cos(u)
        jac[2, 1], jac[3, 1] = -self.b * np.sin(v), self.b * np.cos(v)
        return jac

    def describe(self):
        return {"kind": "torus", "a": self.a, "ambient_dim": self.ambient_dim}


# ----------------------------------------------------------------------------
# images


@dataclass(frozen=True, eq=False)
class ImageTransformParams:
    """Translation ``(tx, ty)`` as fractions of image size, rotation in degrees."""

    tx: float
    ty: float
    theta: float
    base_image: np.ndarray


def _snap(coords, tol=1e-9):
    rounded = np.round(coords)
    return np.where(np.abs(coords - rounded) < tol, rounded, coords)


def warp_image(image, tx, ty, theta):
    """Rotate about the center (counter-clockwise as displayed), then translate.

    Bilinear interpolation, zero fill outside the raster. Source coordinates
    within 1e-9 of a pixel center are snapped onto it, which makes
    axis-aligned rotations exact.
    """
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    cy, cx = (h - 1) / 2, (w - 1) / 2
    rows, cols = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    u = cols - cx - tx * w
    v = rows - cy - ty * h
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)
    src_c = _snap(cx + u * c - v * s)
    src_r = _snap(cy + u * s + v * c)

    r0 = np.floor(src_r).astype(int)
    c0 = np.floor(src_c).astype(int)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros_like(image)
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = image
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            rr = np.clip(r0 + dr + 1, 0, h + 1)
            cc = np.clip(c0 + dc + 1, 0, w + 1)
            inside = (r0 + dr >= 0) & (r0 + dr < h) & (c0 + dc >= 0) & (c0 + dc < w)
            weight = wr * wc
            out += np.where(inside & (weight != 0), weight * padded[rr, cc], 0.0)
    return out


def transform_image(params: ImageTransformParams):
    """Warped, flattened, l2-normalized image."""
    base = np.asarray(params.base_image, dtype=float)
    if not np.any(base):
        raise DegenerateInputError("base image is all zero")
    out = warp_image(base, params.tx, params.ty, params.theta).ravel()
    if not np.any(out):
        raise DegenerateInputError("transform moved the image entirely out of frame")
    return _normalize(out)


class ImageFamily(SignalFamily):
    """Transforms of one base raster, ``xi = (tx, ty, theta)``."""

    intrinsic_dim = 3

    def __init__(self, base_image, max_shift=0.1, max_angle=30.0):
        self.base_image = np.asarray(base_image, dtype=float)
        if not np.any(self.base_image):
            raise DegenerateInputError("base image is all zero")
        self.max_shift = float(max_shift)
        self.max_angle = float(max_angle)
        self.ambient_dim = self.base_image.size

    @property
    def bounds(self):
        s, a = self.max_shift, self.max_angle
        return np.array([[-s, s], [-s, s], [-a, a]])

    def signals(self, params):
        params = self.check_params(params)
        return np.array([
            transform_image(ImageTransformParams(tx, ty, th, self.base_image))
            for tx, ty, th in params
        ])

    def describe(self):
        return {"kind": "image", "shape": list(self.base_image.shape),
                "max_shift": self.max_shift, "max_angle": self.max_angle}


def transformed_images(images, rng, n, max_shift=0.1, max_angle=30.0):
    """Random Euclidean transforms of randomly chosen rasters from ``images``.

    Returns ``(source_index, params, signals)``; used for digit datasets
    where the signal set is the union of transform orbits.
    """
    images = np.asarray(images, dtype=float)
    idx = rng.integers(0, images.shape[0], n)
    params = np.column_stack([
        rng.uniform(-max_shift, max_shift, n),
        rng.uniform(-max_shift, max_shift, n),
        rng.uniform(-max_angle, max_angle, n),
    ])
    sig = np.array([
        transform_image(ImageTransformParams(tx, ty, th, images[i]))
        for i, (tx, ty, th) in zip(idx, params)
    ])
    return idx, params, sig
