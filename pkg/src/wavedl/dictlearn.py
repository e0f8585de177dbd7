"""Alternating l1 sparse coding / least-squares dictionary learning.

Each alternation solves the equality-constrained basis pursuit problem
``min ||x||_1 s.t. D x = y`` for every sample with the current dictionary,
then refits the dictionary by least squares (method of optimal directions)
and rescales its columns to unit norm.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._rng import derive_rng
from .errors import DivergenceError, NumericError, ParameterError

log = logging.getLogger(__name__)


@dataclass
class L1SolverParams:
    """Settings for :func:`solve_l1`.

    ``tau=None`` uses ``0.1 * max|D^* y|`` per sample and ``step=None`` uses
    ``0.99 / ||D||_2**2``. An explicit step larger than ``1 / ||D||_2**2`` is
    rejected at call time.
    """

    tau: float | None = None
    step: float | None = None
    max_iters: int = 2000
    tol: float = 1e-4
    stall_tol: float = 1e-9

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError("tol must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")
        if self.tau is not None and not self.tau > 0:
            raise ParameterError("tau must be positive")
        if self.step is not None and not self.step > 0:
            raise ParameterError("step must be positive")


@dataclass
class L1Solution:
    x: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray


@dataclass
class LearnedDictionary:
    D_hat: np.ndarray
    X: np.ndarray
    history: list
    iterations_run: int
    diagnostics: list = field(default_factory=list)


@dataclass
class RecoveryReport:
    c_max: np.ndarray
    permutation: np.ndarray

    def fraction_above(self, threshold):
        return float(np.mean(self.c_max > threshold))

    @property
    def is_bijection(self):
        return len(np.unique(self.permutation)) == len(self.permutation)


def soft_threshold(z, t):
    """Complex soft threshold: shrink moduli by ``t``, keep phases."""
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > t, 1.0 - t / mag, 0.0)
    return z * scale


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite values in solver input")


def solve_l1_batch(D, Y, params: L1SolverParams | None = None, X0=None):
    """Basis pursuit for every column of ``Y`` with a shared dictionary.

    Residual-feedback iterative soft thresholding (a linearized augmented
    Lagrangian): a multiplier accumulates the data residual and the primal
    step soft-thresholds a gradient move that includes it. Fixed points
    satisfy ``D x = y`` together with the l1 optimality condition, so the
    limit does not depend on ``tau``. When ``y`` is outside the range of
    ``D`` the iteration settles on the l1-smallest least-squares solution.

    Columns are iterated independently (a finished column is frozen), so a
    column's result does not depend on which other columns share the batch
    (up to floating-point rounding in the shared matrix products).
    Works in the K-dimensional Gram domain: ``D^* D`` and ``D^* Y`` are
    formed once.
    """
    p = params or L1SolverParams()
    D = np.asarray(D)
    Y = np.asarray(Y)
    single = Y.ndim == 1
    if single:
        Y = Y[:, None]
    if D.shape[0] != Y.shape[0]:
        raise ParameterError(f"dictionary has {D.shape[0]} rows, data has {Y.shape[0]}")
    _check_finite(D, Y)
    K, M = D.shape[1], Y.shape[1]

    gram = D.conj().T @ D
    B = D.conj().T @ Y
    lipschitz = float(np.linalg.norm(D, 2) ** 2)
    step = p.step if p.step is not None else 0.99 / lipschitz
    if step * lipschitz > 1 + 1e-12:
        raise ParameterError(f"step {step} exceeds 1/||D||^2 = {1 / lipschitz}")
    if p.tau is None:
        tau = 0.1 * np.max(np.abs(B), axis=0)
    else:
        tau = np.full(M, float(p.tau))
    y_norm2 = np.sum(np.abs(Y) ** 2, axis=0)

    X = np.zeros((K, M), dtype=complex) if X0 is None else np.array(X0, dtype=complex)
    W = np.zeros((K, M), dtype=complex)
    converged = y_norm2 == 0
    done = converged.copy()
    X[:, done] = 0
    iters = np.zeros(M, dtype=int)
    res2 = y_norm2.copy()

    active = np.flatnonzero(~done)
    thresh = step * tau
    for it in range(1, p.max_iters + 1):
        if active.size == 0:
            break
        Xa, Wa, Ba = X[:, active], W[:, active], B[:, active]
        Xn = soft_threshold(Xa + step * (Ba - gram @ Xa + Wa), thresh[active])
        GXn = gram @ Xn
        Wa = Wa + (Ba - GXn)
        r2 = y_norm2[active] - 2 * np.real(np.sum(Xn.conj() * Ba, axis=0)) + np.real(np.sum(Xn.conj() * GXn, axis=0))
        r2 = np.maximum(r2, 0.0)
        change = np.linalg.norm(Xn - Xa, axis=0)
        X[:, active], W[:, active] = Xn, Wa
        res2[active] = r2
        iters[active] = it
        ok = r2 <= (p.tol ** 2) * y_norm2[active]
        stalled = change <= p.stall_tol * np.maximum(np.linalg.norm(Xn, axis=0), 1e-300)
        converged[active[ok]] = True
        finished = ok | stalled
        done[active[finished]] = True
        active = active[~finished]

    res = np.sqrt(res2)
    if single:
        return L1Solution(X[:, 0], bool(converged[0]), int(iters[0]), float(res[0]))
    return L1Solution(X, converged, iters, res)


def solve_l1(D, y, params: L1SolverParams | None = None, x0=None):
    """Single-sample :func:`solve_l1_batch`; ``converged`` is False when the budget ran out."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ParameterError("solve_l1 expects a vector; use solve_l1_batch for matrices")
    return solve_l1_batch(D, y, params, None if x0 is None else np.asarray(x0)[:, None])


def mod_update(X, Y, previous=None, max_condition=1e10, unused_tol=1e-12, return_info=False):
    """Least-squares dictionary ``Y X^* (X X^*)^{-1}``.

    Rows of ``X`` with (numerically) no energy leave their column
    undetermined; those columns are copied from ``previous`` (or set to zero)
    and reported as unused. If the normal matrix is still ill-conditioned,
    a diagonal load brings its condition number down to ``max_condition``.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[1] != Y.shape[1]:
        raise ParameterError(f"X has {X.shape[1]} samples, Y has {Y.shape[1]}")
    K = X.shape[0]
    row_energy = np.sum(np.abs(X) ** 2, axis=1)
    used = row_energy > unused_tol * max(row_energy.max(initial=0.0), 1e-300)
    D = np.zeros((Y.shape[0], K), dtype=np.result_type(X, Y, complex))
    if previous is not None:
        D[:, ~used] = np.asarray(previous)[:, ~used]
    info = {"unused": np.flatnonzero(~used).tolist(), "condition": np.inf, "regularized": False}
    if used.any():
        Xu = X[used]
        A = Xu @ Xu.conj().T
        eig = np.linalg.eigvalsh(A)
        cond = eig[-1] / eig[0] if eig[0] > 0 else np.inf
        info["condition"] = float(cond)
        if not cond <= max_condition:
            load = max(eig[-1] / max_condition - eig[0], 0.0)
            A = A + load * np.eye(A.shape[0])
            info["regularized"] = True
            info["diagonal_load"] = float(load)
        rhs = Xu @ Y.conj().T
        D[:, used] = scipy.linalg.solve(A, rhs, assume_a="pos").conj().T
    if return_info:
        return D, info
    return D


def normalize_dictionary(D, X=None):
    """Unit-norm columns; the rows of ``X`` are rescaled so ``D X`` is unchanged."""
    norms = np.linalg.norm(D, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    D = D / safe
    if X is None:
        return D
    return D, X * safe[:, None]


def farthest_point_init(Y, K, seed=0):
    """Pick ``K`` distinct normalized data columns by a max-min correlation sweep.

    Starts from a seeded random column, then repeatedly adds the column whose
    largest correlation with the already chosen set is smallest.
    """
    Y = np.asarray(Y)
    M = Y.shape[1]
    if M < K:
        raise ParameterError(f"need at least K={K} samples for data initialization, have {M}")
    norms = np.linalg.norm(Y, axis=0)
    candidates = norms > 0
    if candidates.sum() < K:
        raise ParameterError("too few nonzero data columns for initialization")
    U = Y / np.where(norms > 0, norms, 1.0)
    rng = derive_rng(seed, "dictlearn-init")
    first = int(rng.choice(np.flatnonzero(candidates)))
    chosen = [first]
    worst = np.abs(U.conj().T @ U[:, first])
    worst[~candidates] = np.inf
    for _ in range(K - 1):
        worst[chosen] = np.inf
        nxt = int(np.argmin(worst))
        chosen.append(nxt)
        worst = np.maximum(worst, np.abs(U.conj().T @ U[:, nxt]))
    return U[:, chosen]


def perturbed_init(G_true, perturbation, seed=0):
    """Oracle initialization: true columns plus relative complex Gaussian noise."""
    G = np.asarray(G_true)
    rng = derive_rng(seed, "dictlearn-oracle-init")
    noise = rng.standard_normal(G.shape) + 1j * rng.standard_normal(G.shape)
    noise *= np.linalg.norm(G, axis=0) / np.linalg.norm(noise, axis=0)
    return normalize_dictionary(G + perturbation * noise)


def project_sparse(D, Y, X, sparsity, ridge=1e-12):
    """Keep the ``sparsity`` largest-modulus entries per column and refit them.

    The kept coefficients are the least-squares fit of each sample on its
    selected columns of ``D``, which restores the ``||x||_0 <= s`` constraint
    of the dictionary learning problem after l1 coding.
    """
    D = np.asarray(D)
    X = np.asarray(X)
    K, M = X.shape
    s = int(sparsity)
    if not 1 <= s <= K:
        raise ParameterError(f"sparsity must lie in [1, {K}], got {sparsity!r}")
    support = np.sort(np.argsort(-np.abs(X), axis=0, kind="stable")[:s].T, axis=1)
    gram = D.conj().T @ D
    B = D.conj().T @ Y
    A = gram[support[:, :, None], support[:, None, :]]
    A = A + ridge * np.real(np.trace(A, axis1=1, axis2=2))[:, None, None] * np.eye(s)
    b = np.take_along_axis(B.T, support, axis=1)
    coef = np.linalg.solve(A, b[:, :, None])[:, :, 0]
    out = np.zeros((K, M), dtype=complex)
    out[support.T, np.arange(M)[None, :]] = coef.T
    return out


def _principal_direction(Z):
    _, vecs = np.linalg.eigh(Z @ Z.conj().T)
    return vecs[:, -1]


def _split_directions(E, n_iter=20):
    """Two line directions in the span of ``E`` explaining its columns (k-lines)."""
    U, _, _ = np.linalg.svd(E, full_matrices=False)
    basis = U[:, :2]
    coef = basis.conj().T @ E
    mags = np.linalg.norm(coef, axis=0)
    unit = coef / np.where(mags > 0, mags, 1.0)
    v1 = unit[:, int(np.argmax(mags))]
    v2 = unit[:, int(np.argmin(np.abs(v1.conj() @ unit)))]
    for _ in range(n_iter):
        first = np.abs(v1.conj() @ unit) >= np.abs(v2.conj() @ unit)
        if first.all() or not first.any():
            break
        v1, v2 = _principal_direction(coef[:, first]), _principal_direction(coef[:, ~first])
    return basis @ v1, basis @ v2


def maintain_atoms(D, X, Y, low=0.25, high=1.6, duplicate=0.97, excess=4.0):
    """Split merged atoms into idle ones.

    Usage is the number of samples coding with an atom. An atom that merges
    two true columns is either used more than ``high`` times the median, or
    leaves a residual on its samples whose mean energy exceeds ``excess``
    times the median per-sample residual energy. Such atoms are taken in
    order of the residual energy they carry; the samples using one are
    re-explained (residual plus that atom's own contribution) and split along
    two directions, the second of which replaces an idle atom (usage below
    ``low`` times the median, or a near duplicate of another atom). Idle atoms
    left over are re-seeded with the worst-fit residuals. Returns the new
    unit-column dictionary and a record of what changed.
    """
    D = np.array(D, dtype=complex)
    active = np.abs(X) > 0
    use = np.count_nonzero(active, axis=1)
    med = float(np.median(use))
    corr = np.abs(D.conj().T @ D)
    np.fill_diagonal(corr, 0.0)
    idle = set(np.flatnonzero(use < low * med).tolist())
    for i, j in zip(*np.nonzero(np.triu(corr > duplicate))):
        idle.add(int(i) if use[i] < use[j] else int(j))
    idle = sorted(idle, key=lambda k: (use[k], k))
    R = Y - D @ X
    energy = np.sum(np.abs(R) ** 2, axis=0)
    carried = active.astype(float) @ energy
    mean_carried = carried / np.maximum(use, 1)
    typical = max(float(np.median(energy)), 1e-8 * float(np.median(np.sum(np.abs(Y) ** 2, axis=0))))
    flagged = (use > high * med) | ((use > 1) & (mean_carried > excess * typical))
    order = np.argsort(-carried, kind="stable")
    over = [int(k) for k in order if flagged[k] and k not in idle]
    splits, reseeded = [], []
    for m in over:
        if not idle:
            break
        S = np.flatnonzero(np.abs(X[m]) > 0)
        E = R[:, S] + np.outer(D[:, m], X[m, S])
        if min(E.shape) < 2:
            continue
        a, b = _split_directions(E)
        j = idle.pop(0)
        D[:, m], D[:, j] = a, b
        splits.append((m, j))
    if idle:
        rn = np.linalg.norm(R, axis=0)
        for j, w in zip(idle, np.argsort(-rn, kind="stable")):
            if rn[w] > 0:
                D[:, j] = R[:, w] / rn[w]
                reseeded.append(j)
    return normalize_dictionary(D), {"split": splits, "reseeded": reseeded}


def learn(Y, K, params: L1SolverParams | None = None, init="data", max_alternations=50,
          obj_tol=1e-5, seed=0, sparsity=None, maintain=False, polish=3, callback=None):
    """Estimate a unit-column dictionary ``D`` with ``Y ~ D X``, ``X`` sparse.

    Each alternation codes all samples by basis pursuit with the current
    dictionary (warm-started), optionally projects the codes onto
    ``sparsity`` nonzeros, refits the dictionary by least squares and
    normalizes its columns. With ``maintain=True`` merged and idle atoms are
    repaired by :func:`maintain_atoms` after the refit, except in the last
    ``polish`` alternations, which only refine.

    ``init`` is ``"data"`` (farthest-point data columns) or an ``N x K``
    starting dictionary. Stops after ``max_alternations`` or when the relative
    objective change drops below ``obj_tol``. Three consecutive objective
    increases beyond ``1e-6 ||Y||_F^2`` (not counting alternations that follow
    atom repairs) raise :class:`DivergenceError`.
    """
    p = params or L1SolverParams()
    Y = np.asarray(Y)
    _check_finite(Y)
    N, M = Y.shape
    if M <= K * np.log(K):
        warnings.warn(f"M={M} samples does not exceed K log K = {K * np.log(K):.0f}", stacklevel=2)
    if isinstance(init, str):
        if init != "data":
            raise ParameterError(f"unknown init strategy {init!r}")
        D = farthest_point_init(Y, K, seed)
    else:
        D = normalize_dictionary(np.array(init, dtype=complex))
        if D.shape != (N, K):
            raise ParameterError(f"initial dictionary has shape {D.shape}, expected {(N, K)}")

    slack = 1e-6 * float(np.sum(np.abs(Y) ** 2))
    history, diagnostics = [], []
    X = None
    increases = 0
    repaired = False
    it = 0
    for it in range(1, max_alternations + 1):
        t0 = time.perf_counter()
        sol = solve_l1_batch(D, Y, p, X0=X)
        X = sol.x if sparsity is None else project_sparse(D, Y, sol.x, sparsity)
        t1 = time.perf_counter()
        D_new, info = mod_update(X, Y, previous=D, return_info=True)
        obj = float(np.linalg.norm(D_new @ X - Y) ** 2)
        D, X = normalize_dictionary(D_new, X)
        changes = {"split": [], "reseeded": []}
        if maintain and it <= max_alternations - polish:
            D, changes = maintain_atoms(D, X, Y)
            touched = [j for pair in changes["split"] for j in pair] + changes["reseeded"]
            X[touched] = 0
        t2 = time.perf_counter()
        diag = {
            "alternation": it,
            "objective": obj,
            "l1_converged_fraction": float(np.mean(sol.converged)),
            "l1_mean_iterations": float(np.mean(sol.iterations)),
            "mod_condition": info["condition"],
            "mod_regularized": info["regularized"],
            "unused_columns": info["unused"],
            "split_atoms": [list(map(int, pair)) for pair in changes["split"]],
            "reseeded_atoms": [int(j) for j in changes["reseeded"]],
            "l1_seconds": t1 - t0,
            "mod_seconds": t2 - t1,
        }
        diagnostics.append(diag)
        log.debug("alternation %d objective %.6e", it, obj)
        if callback is not None:
            callback(it, D, X, diag)
        if history and not repaired and obj > history[-1] + slack:
            increases += 1
            if increases >= 3:
                history.append(obj)
                raise DivergenceError(f"objective increased {increases} times in a row", history)
        else:
            increases = 0
        prev = history[-1] if history else None
        history.append(obj)
        repaired = bool(changes["split"] or changes["reseeded"])
        if prev is not None and not repaired and abs(prev - obj) <= obj_tol * prev:
            break
        if obj == 0.0:
            break
    return LearnedDictionary(D, X, history, it, diagnostics)


def score_recovery(D_hat, G_true):
    """Best absolute correlation of each learned column with any true column."""
    D_hat = np.asarray(D_hat)
    G_true = np.asarray(G_true)
    if D_hat.shape != G_true.shape:
        raise ParameterError(f"shape mismatch {D_hat.shape} vs {G_true.shape}")
    A = D_hat / np.linalg.norm(D_hat, axis=0)
    B = G_true / np.linalg.norm(G_true, axis=0)
    C = np.abs(A.conj().T @ B)
    return RecoveryReport(c_max=np.minimum(C.max(axis=1), 1.0), permutation=np.argmax(C, axis=1))
