"""Receiver array, image grid, frequencies and the stacked sensing matrix.

Points are 2D ``(cross_range, range)`` pairs in wavelength units. The array
sits on the cross-range axis at range 0, centred at the origin; the image
window is centred on the range axis at range ``L``.

The multi-frequency sensing matrix stacks one ``N_r x K`` block per
frequency, frequency-major: row ``q * N_r + j`` holds receiver ``j`` at
frequency ``q``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import physics
from .errors import DegenerateInputError, ParameterError, SingularityError


@dataclass(frozen=True)
class ArrayGeometry:
    aperture: float
    n_receivers: int
    range_position: float = 0.0

    def __post_init__(self):
        if not self.aperture > 0:
            raise ParameterError(f"aperture must be positive, got {self.aperture!r}")
        if int(self.n_receivers) != self.n_receivers or self.n_receivers < 2:
            raise ParameterError(f"need at least 2 receivers, got {self.n_receivers!r}")

    @property
    def cross_positions(self):
        return np.linspace(-self.aperture / 2, self.aperture / 2, int(self.n_receivers))

    @property
    def receivers(self):
        xs = self.cross_positions
        return np.column_stack([xs, np.full_like(xs, self.range_position)])


@dataclass(frozen=True)
class ImageGrid:
    """Regular ``n_cross x n_range`` grid; point ``i`` is ``(i // n_range, i % n_range)``."""

    n_cross: int
    n_range: int
    d_cross: float
    d_range: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n_cross < 1 or self.n_range < 1:
            raise ParameterError("grid needs at least one point per axis")
        if not (self.d_cross > 0 and self.d_range > 0):
            raise ParameterError("grid spacings must be positive")

    @classmethod
    def from_resolution(cls, n_cross, n_range, wavelength, distance, aperture, c0, bandwidth,
                        cross_factor=1.0, range_factor=0.4):
        """Grid spaced as a multiple of the resolution ``lambda L / a`` by ``c0 / B``.

        The default range step is ``0.4 c0 / B``. At a full ``c0 / B`` step, range
        neighbours of a narrow band sit close to a null of the range
        correlation and the neighbour graph no longer follows the lattice.
        """
        if cross_factor <= 0 or range_factor <= 0:
            raise ParameterError("spacing factors must be positive")
        return cls(
            n_cross,
            n_range,
            d_cross=cross_factor * wavelength * distance / aperture,
            d_range=range_factor * c0 / bandwidth,
            center=(0.0, float(distance)),
        )

    @property
    def shape(self):
        return (self.n_cross, self.n_range)

    @property
    def size(self) -> int:
        return self.n_cross * self.n_range

    def index(self, i_cross, i_range):
        return np.ravel_multi_index((i_cross, i_range), self.shape)

    def lattice(self, idx):
        """Integer ``(cross, range)`` lattice coordinates of flat indices."""
        return np.stack(np.unravel_index(idx, self.shape), axis=-1)

    @property
    def points(self):
        ic, ir = np.meshgrid(np.arange(self.n_cross), np.arange(self.n_range), indexing="ij")
        xc = self.center[0] + (ic.ravel() - (self.n_cross - 1) / 2) * self.d_cross
        xr = self.center[1] + (ir.ravel() - (self.n_range - 1) / 2) * self.d_range
        return np.column_stack([xc, xr])


@dataclass(frozen=True)
class FrequencySet:
    """``n`` equally spaced frequencies on ``[low_fraction * f_max, f_max]``."""

    f_max: float
    n: int
    low_fraction: float = 0.5
    c0: float = 1.0

    def __post_init__(self):
        if not self.f_max > 0 or not self.c0 > 0:
            raise ParameterError("f_max and c0 must be positive")
        if self.n < 1:
            raise ParameterError("need at least one frequency")
        if not 0 < self.low_fraction <= 1:
            raise ParameterError("low_fraction must lie in (0, 1]")
        if self.n > 1 and self.low_fraction == 1:
            raise ParameterError("several frequencies need a band of nonzero width")

    @property
    def frequencies(self):
        return np.linspace(self.low_fraction * self.f_max, self.f_max, int(self.n))

    @property
    def bandwidth(self):
        return (1 - self.low_fraction) * self.f_max

    @property
    def wavenumbers(self):
        return 2 * np.pi * self.frequencies / self.c0


def assemble_sensing_matrix(field, spec, array: ArrayGeometry, grid: ImageGrid, freqs: FrequencySet,
                            n_quad=None, workers=1, chunk=64):
    """Stacked ``(N_f * N_r) x K`` matrix of Green's function vectors.

    ``field=None`` gives the homogeneous medium. Columns are computed in
    independent chunks, so ``workers`` changes speed only, never values.
    """
    receivers = array.receivers
    points = grid.points
    kappa = freqs.wavenumbers
    diff = receivers[:, None, :] - points[None, :, :]
    if np.any(np.all(diff == 0, axis=-1)):
        raise SingularityError("a grid point coincides with a receiver")
    n_r, k = len(receivers), len(points)
    out = np.empty((len(kappa) * n_r, k), dtype=complex)
    random = field is not None and spec is not None and spec.sigma != 0.0

    def fill(lo):
        hi = min(lo + chunk, k)
        y = receivers[:, None, :]
        x = points[None, lo:hi, :]
        d = np.linalg.norm(y - x, axis=-1)
        if random:
            q = physics.ray_means(field, spec, y, x, n_quad)
        for iq, kq in enumerate(kappa):
            g = physics.green_homogeneous(y, x, kq)
            if random:
                g = g * np.exp(1j * (spec.sigma * kq * d * q))
            out[iq * n_r:(iq + 1) * n_r, lo:hi] = g

    starts = range(0, k, chunk)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, starts))
    else:
        for lo in starts:
            fill(lo)
    return out


def normalize_columns(m):
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms == 0):
        raise DegenerateInputError(f"zero column(s) at {np.flatnonzero(norms == 0).tolist()}")
    return m / norms


def correlation_matrix(a, b=None):
    """``|a_i^* b_j|`` on unit-normalized columns."""
    a = normalize_columns(np.asarray(a))
    b = a if b is None else normalize_columns(np.asarray(b))
    return np.abs(a.conj().T @ b)


def coherence(m):
    """Largest normalized inner product magnitude between distinct columns."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ParameterError("coherence needs a matrix with at least 2 columns")
    c = correlation_matrix(m)
    np.fill_diagonal(c, 0.0)
    return float(min(c.max(), 1.0))


def numerical_rank(m, rel_tol=1e-3):
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > rel_tol * s[0]))


def subarray_rows(array: ArrayGeometry, freqs: FrequencySet, sub_aperture):
    """Row indices of the centred subarray of length ``sub_aperture``, all frequency blocks."""
    if not 0 < sub_aperture <= array.aperture * (1 + 1e-12):
        raise ParameterError(f"sub_aperture must lie in (0, {array.aperture}], got {sub_aperture!r}")
    xs = array.cross_positions
    keep = np.flatnonzero(np.abs(xs) <= sub_aperture / 2 + 1e-9 * array.aperture)
    if keep.size == 0:
        raise ParameterError("subarray contains no receivers")
    n_r = len(xs)
    return np.concatenate([q * n_r + keep for q in range(int(freqs.n))])


def restrict_to_subarray(m, array: ArrayGeometry, freqs: FrequencySet, sub_aperture):
    m = np.asarray(m)
    if m.shape[0] != array.n_receivers * freqs.n:
        raise ParameterError(
            f"matrix has {m.shape[0]} rows, expected {array.n_receivers} x {freqs.n}"
        )
    return m[subarray_rows(array, freqs, sub_aperture)]
