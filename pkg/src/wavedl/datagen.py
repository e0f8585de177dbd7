"""Ensembles of sparse-source array measurements ``Y = G X``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import derive_rng
from .errors import ParameterError


@dataclass(frozen=True)
class SparseSourceConfig:
    """Exactly ``sparsity`` active sources per sample.

    Moduli are uniform on ``amplitude_range``; phases uniform on [0, 2pi).
    """

    sparsity: int
    amplitude_range: tuple = (1.0, 2.0)

    def __post_init__(self):
        if int(self.sparsity) != self.sparsity or self.sparsity < 1:
            raise ParameterError(f"sparsity must be a positive integer, got {self.sparsity!r}")
        lo, hi = self.amplitude_range
        if not (0 < lo <= hi):
            raise ParameterError(f"amplitude range must satisfy 0 < lo <= hi, got {self.amplitude_range!r}")


@dataclass
class SampleEnsemble:
    Y: np.ndarray
    X_true: np.ndarray

    @property
    def M(self) -> int:
        return self.Y.shape[1]


def default_sample_count(K):
    """Smallest integer ``M`` with ``M > K ln K`` (and ``M >= K``)."""
    return max(int(math.floor(K * math.log(K))) + 1, K)


def draw_sparse_sources(cfg: SparseSourceConfig, K, M, seed, label="sources"):
    """Complex ``K x M`` source matrix with exactly ``s`` nonzeros per column."""
    s = int(cfg.sparsity)
    if s > K:
        raise ParameterError(f"sparsity {s} exceeds grid size K={K}")
    if M < 1:
        raise ParameterError("need at least one sample")
    rng = derive_rng(seed, label)
    # argpartition of iid uniforms gives a uniform s-subset per column
    support = np.argpartition(rng.random((M, K)), s - 1, axis=1)[:, :s]
    lo, hi = cfg.amplitude_range
    moduli = rng.uniform(lo, hi, (M, s))
    phases = rng.uniform(0.0, 2 * np.pi, (M, s))
    X = np.zeros((K, M), dtype=complex)
    X[support.T, np.arange(M)[None, :]] = (moduli * np.exp(1j * phases)).T
    return X


def synthesize(m, X):
    """Noise-free measurements of the sources ``X`` through the sensing matrix ``m``."""
    m = np.asarray(m)
    X = np.asarray(X)
    if m.shape[1] != X.shape[0]:
        raise ParameterError(f"shape mismatch: matrix {m.shape} vs sources {X.shape}")
    return SampleEnsemble(Y=m @ X, X_true=X)


def add_noise(Y, relative_std, seed, label="noise"):
    """Add circular complex Gaussian noise with std ``relative_std * rms(Y)``."""
    if relative_std < 0:
        raise ParameterError("noise level must be nonnegative")
    if relative_std == 0:
        return np.array(Y, copy=True)
    rng = derive_rng(seed, label)
    scale = relative_std * np.sqrt(np.mean(np.abs(Y) ** 2) / 2)
    return Y + scale * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
