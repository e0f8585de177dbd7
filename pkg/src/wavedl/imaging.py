"""Back-propagation images and time-reversal correlation diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .geometry import correlation_matrix


@dataclass
class ImageField:
    values: np.ndarray  # normalized to max 1
    raw: np.ndarray
    shape: tuple
    label: str = ""

    @property
    def peak(self) -> int:
        return int(np.argmax(self.raw))

    def as_grid(self, normalized=True):
        return (self.values if normalized else self.raw).reshape(self.shape)


def form_image(G_est, y, grid_shape, label="", normalize=True):
    """``|g_i^* y|`` for every (ordered) estimated column ``g_i``.

    ``G_est`` column ``i`` must belong to grid point ``i``. The columns are
    used as given; the image of a recorded signal peaks where its Green's
    vector best matches.
    """
    G_est = np.asarray(G_est)
    y = np.asarray(y)
    if G_est.shape[0] != y.shape[0]:
        raise ParameterError(f"estimate has {G_est.shape[0]} rows, signal has {y.shape[0]}")
    if G_est.shape[1] != int(np.prod(grid_shape)):
        raise ParameterError("number of columns does not match the grid")
    raw = np.abs(G_est.conj().T @ y)
    top = raw.max()
    values = raw / top if normalize and top > 0 else raw.copy()
    return ImageField(values, raw, tuple(grid_shape), label)


def crosscorrelation_matrix(A, B):
    """``|a_i^* b_j|`` on unit-normalized columns.

    Row ``i`` is a time-reversal experiment: the field of source ``i`` sent
    back through the medium described by ``B``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ParameterError(f"shape mismatch {A.shape} vs {B.shape}")
    return correlation_matrix(A, B)


def diagonal_argmax_fraction(C):
    """Fraction of rows whose largest entry sits on the diagonal (refocusing rate)."""
    C = np.asarray(C)
    return float(np.mean(np.argmax(C, axis=1) == np.arange(C.shape[0])))


def embedding_spectrum_report(spectrum):
    """Eigenvalues sorted in descending order and divided by the largest."""
    s = np.sort(np.clip(np.asarray(spectrum, dtype=float), 0.0, None))[::-1]
    if s.size == 0:
        raise ParameterError("empty spectrum")
    if not s[0] > 0:
        raise DegenerateInputError("spectrum is identically zero")
    return s / s[0]
