"""Random medium model and Green's functions.

Lengths are in units of the central wavelength throughout the package, so a
default :class:`MediumSpec` has ``lambda0 = 1``.  The medium perturbs the
squared slowness as ``1 + sigma * mu(x / ell)`` where ``mu`` is a zero-mean,
unit-variance stationary field with Gaussian autocorrelation
``R(u) = exp(-u**2 / 2)``.

In the high-frequency, weak-fluctuation regime only the phase of the
homogeneous Green's function changes; the perturbation is the line average
of ``mu`` along the straight ray, scaled by ``sigma * kappa * |x - y|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import derive_rng
from .errors import ParameterError, SingularityError

#: Number of quadrature nodes per correlation length along a ray.
NODES_PER_CORRELATION_LENGTH = 8
MIN_QUADRATURE_NODES = 64


@dataclass(frozen=True)
class MediumSpec:
    """Physical parameters of the random medium.

    ``sigma_tilde`` is the fluctuation strength relative to the natural
    scale ``lambda0 / sqrt(ell * L_ref)``; :attr:`sigma` is the raw strength
    entering the slowness model.
    """

    c0: float = 1.0
    ell: float = 100.0
    sigma_tilde: float = 0.0
    lambda0: float = 1.0
    L_ref: float = 10_000.0
    seed: int = 0

    def __post_init__(self):
        for name in ("c0", "ell", "lambda0", "L_ref"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"MediumSpec.{name} must be positive, got {value!r}")
        if not (np.isfinite(self.sigma_tilde) and self.sigma_tilde >= 0):
            raise ParameterError(
                f"MediumSpec.sigma_tilde must be nonnegative, got {self.sigma_tilde!r}"
            )
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError(f"MediumSpec.seed must be a nonnegative integer, got {self.seed!r}")

    @property
    def sigma(self) -> float:
        return self.sigma_tilde * self.lambda0 / math.sqrt(self.ell * self.L_ref)


def gaussian_autocorrelation(u):
    """Normalized autocorrelation ``R(u) = exp(-u**2/2)``, ``u`` in units of ell."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u)


def midpoint_line_mean(func, start, end, n_quad):
    """Composite midpoint approximation of the mean of ``func`` on a segment.

    ``func`` maps an ``(..., 2)`` array of points to values; ``start`` and
    ``end`` are ``(2,)`` points. Works for any callable field.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    s = (np.arange(n_quad) + 0.5) / n_quad
    nodes = start + s[:, None] * (end - start)
    return float(np.mean(func(nodes)))


@dataclass(frozen=True, eq=False)
class RandomField:
    """A realization of ``mu`` as a sum of random Fourier modes.

    ``mu(p) = sqrt(2/n) * sum_j a_j cos(k_j . p + phi_j)`` with ``p``
    dimensionless (position divided by ell). Wavevectors are drawn from the
    spectral density of the Gaussian autocorrelation, i.e. standard normal
    in 2D, so every realization is exactly stationary and the ensemble
    covariance is ``R`` for any mode count.
    """

    wavevectors: np.ndarray
    phases: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        for arr in (self.wavevectors, self.phases, self.amplitudes):
            arr.setflags(write=False)

    @property
    def count(self) -> int:
        return len(self.phases)

    @property
    def modes(self):
        return list(zip(self.wavevectors, self.phases, self.amplitudes))

    def __call__(self, points):
        """Evaluate at dimensionless points of shape ``(..., 2)``."""
        p = np.asarray(points, dtype=float)
        arg = p @ self.wavevectors.T + self.phases
        return math.sqrt(2.0 / self.count) * (np.cos(arg) @ self.amplitudes)

    def line_mean(self, start, end, n_quad, chunk=2048):
        """Midpoint-rule mean of the field along segments ``start -> end``.

        Evaluated in closed form per mode: the midpoint rule applied to
        ``cos(a + b s)`` on ``n`` nodes equals
        ``cos(a + b/2) * sin(b/2) / (n sin(b/(2n)))``. The result is the
        same number the explicit node sum produces, at a cost independent of
        ``n_quad``. ``start``/``end`` are ``(..., 2)`` dimensionless arrays,
        ``n_quad`` an int or an array broadcastable to the ray shape.
        """
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        shape = np.broadcast_shapes(start.shape, end.shape)[:-1]
        start = np.broadcast_to(start, shape + (2,)).reshape(-1, 2)
        end = np.broadcast_to(end, shape + (2,)).reshape(-1, 2)
        n = np.broadcast_to(np.asarray(n_quad, dtype=float), shape).reshape(-1)
        out = np.empty(len(start))
        scale = math.sqrt(2.0 / self.count)
        for lo in range(0, len(start), chunk):
            hi = lo + chunk
            mid = 0.5 * (start[lo:hi] + end[lo:hi])
            delta = end[lo:hi] - start[lo:hi]
            centre = mid @ self.wavevectors.T + self.phases
            b = delta @ self.wavevectors.T
            out[lo:hi] = scale * ((np.cos(centre) * _midpoint_kernel(b, n[lo:hi, None])) @ self.amplitudes)
        return out.reshape(shape)


def _midpoint_kernel(b, n):
    # sin(b/2) / (n sin(b/(2n))), the midpoint-rule damping of a mode with total phase span b
    den = np.sinc(b / (2 * np.pi * n))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sinc(b / (2 * np.pi)) / den
    bad = np.abs(den) < 1e-12
    if np.any(bad):
        # aliasing: b/(2n) = j*pi, every node sees the same phase up to sign
        j = np.rint(b / (2 * np.pi * n))
        limit = np.where(np.mod(j * (n - 1), 2) == 0, 1.0, -1.0)
        ratio = np.where(bad, limit, ratio)
    return ratio


def build_random_field(spec: MediumSpec, n_modes: int = 512, label="medium") -> RandomField:
    """Draw one field realization, deterministic in ``spec.seed``."""
    if not isinstance(spec, MediumSpec):
        raise ParameterError("spec must be a MediumSpec")
    if int(n_modes) != n_modes or n_modes < 1:
        raise ParameterError(f"n_modes must be a positive integer, got {n_modes!r}")
    rng = derive_rng(spec.seed, label)
    wavevectors = rng.standard_normal((int(n_modes), 2))
    phases = rng.uniform(0.0, 2 * np.pi, int(n_modes))
    return RandomField(wavevectors, phases, np.ones(int(n_modes)))


def default_quadrature_nodes(distance, ell):
    """``max(64, ceil(8 d / ell))`` nodes for a ray of length ``d``."""
    d = np.asarray(distance, dtype=float)
    return np.maximum(MIN_QUADRATURE_NODES, np.ceil(NODES_PER_CORRELATION_LENGTH * d / ell)).astype(int)


def _distance(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.linalg.norm(x - y, axis=-1)
    if np.any(d == 0):
        raise SingularityError("source and receiver coincide")
    return x, y, d


def green_homogeneous(x, y, kappa):
    """Free-space Green's function ``exp(i kappa d) / (4 pi d)``.

    Broadcasts over leading dimensions of ``x``, ``y`` (shape ``(..., 2)``)
    and ``kappa``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ParameterError("kappa must be positive")
    _, _, d = _distance(x, y)
    return np.exp(1j * _reduced_phase(x, y, kappa)) / (4 * np.pi * d)


_TWO_PI = np.longdouble("6.283185307179586476925286766559005768")


def _reduced_phase(x, y, kappa):
    """``kappa |x - y|`` modulo 2 pi, formed in extended precision.

    At array-to-window distances the phase is 1e4 to 1e5 radians; in double
    precision its rounding alone costs ~1e-11 relative accuracy in the Green's
    function. Where ``longdouble`` is wider than double the reduction keeps
    the phase accurate to ~1e-15.
    """
    diff = np.asarray(x, dtype=np.longdouble) - np.asarray(y, dtype=np.longdouble)
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    return np.fmod(np.asarray(kappa, dtype=np.longdouble) * d, _TWO_PI).astype(float)


def ray_means(field, spec: MediumSpec, x, y, n_quad=None):
    """Midpoint-rule mean of ``mu`` along the segments ``x -> y`` (in ell units).

    ``field`` is a :class:`RandomField` or any callable on dimensionless
    points; callables without ``line_mean`` are integrated node by node.
    ``n_quad=None`` picks :func:`default_quadrature_nodes`.
    """
    x, y, d = _distance(x, y)
    if n_quad is None:
        n_quad = default_quadrature_nodes(d, spec.ell)
    if np.any(np.asarray(n_quad) < 2):
        raise ParameterError("n_quad must be at least 2")
    start, end = x / spec.ell, y / spec.ell
    if hasattr(field, "line_mean"):
        return field.line_mean(start, end, n_quad)
    shape = np.broadcast_shapes(start.shape, end.shape)
    s_flat = np.broadcast_to(start, shape).reshape(-1, 2)
    e_flat = np.broadcast_to(end, shape).reshape(-1, 2)
    n_flat = np.broadcast_to(n_quad, shape[:-1]).reshape(-1)
    q = [midpoint_line_mean(field, a, b, int(n)) for a, b, n in zip(s_flat, e_flat, n_flat)]
    return np.array(q).reshape(shape[:-1])


def travel_time_phase(field, spec: MediumSpec, x, y, kappa, n_quad=None):
    """Random phase ``sigma * kappa * |x-y| * mean(mu along the ray)``."""
    _, _, d = _distance(x, y)
    kappa = np.asarray(kappa, dtype=float)
    if spec.sigma == 0.0:
        if n_quad is not None and np.any(np.asarray(n_quad) < 2):
            raise ParameterError("n_quad must be at least 2")
        return np.zeros(np.broadcast_shapes(d.shape, kappa.shape))
    return spec.sigma * kappa * d * ray_means(field, spec, x, y, n_quad)


def long_ray_phase_variance(spec: MediumSpec, distance, kappa):
    """Phase variance ``sigma**2 kappa**2 d ell sqrt(2 pi)`` for rays with ``d >> ell``.

    The double line integral of ``R`` over a ray of length ``d`` tends to
    ``d ell`` times the integral of ``R`` over the real line, which is
    ``sqrt(2 pi)`` for the Gaussian autocorrelation.
    """
    return spec.sigma ** 2 * kappa ** 2 * distance * spec.ell * math.sqrt(2 * math.pi)


def green_random(field, spec: MediumSpec, x, y, kappa, n_quad=None):
    """Random travel-time Green's function: homogeneous value times a phase."""
    g0 = green_homogeneous(x, y, kappa)
    return g0 * np.exp(1j * travel_time_phase(field, spec, x, y, kappa, n_quad))
