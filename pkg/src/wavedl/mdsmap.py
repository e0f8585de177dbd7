"""Ordering learned columns: connectivity graph, hop distances, MDS, anchors.

Columns whose cross-correlation (on a subarray, where neighbouring focal
spots are still coherent) is among the ``2r`` largest are linked; hop
counts on that graph stand in for distances between focal points; classical
MDS turns them into coordinates, fixed in the image plane by a similarity
transform fitted to a few anchors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import DegenerateInputError, DisconnectedGraphError, ParameterError
from .geometry import correlation_matrix


@dataclass
class ConnectivityGraph:
    adjacency: np.ndarray
    proposed: np.ndarray  # (K, 2r) neighbour proposals before symmetrization
    r: int

    @property
    def K(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self):
        i, j = np.nonzero(np.triu(self.adjacency))
        return list(zip(i.tolist(), j.tolist()))

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1)


@dataclass
class ProxyDistanceMatrix:
    hops: np.ndarray  # float, inf between components
    connected: bool
    components: list = field(default_factory=list)


@dataclass
class SimilarityTransform:
    """``x -> scale * x @ rotation.T + translation``; ``rotation`` may be a reflection."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    reflected: bool = False
    residual: float = 0.0
    ambiguous: bool = False

    def apply(self, Z):
        return self.scale * np.asarray(Z) @ self.rotation.T + self.translation


@dataclass
class EmbeddedGrid:
    Z_hat: np.ndarray
    spectrum: np.ndarray
    graph: ConnectivityGraph | None = None
    distances: ProxyDistanceMatrix | None = None
    transform: SimilarityTransform | None = None
    aligned: np.ndarray | None = None
    assignment: np.ndarray | None = None
    displacement: np.ndarray | None = None


def build_adjacency(columns, r=2):
    """Link each column to its ``2r`` most correlated others, then symmetrize by union."""
    columns = np.asarray(columns)
    K = columns.shape[1]
    k = 2 * int(r)
    if K <= k:
        raise ParameterError(f"need more than 2r={k} columns, got {K}")
    C = correlation_matrix(columns)
    np.fill_diagonal(C, -np.inf)
    # stable descending order keeps ties deterministic (lowest index first)
    proposed = np.argsort(-C, axis=1, kind="stable")[:, :k]
    A = np.zeros((K, K), dtype=np.int8)
    A[np.repeat(np.arange(K), k), proposed.ravel()] = 1
    A = np.maximum(A, A.T)
    return ConnectivityGraph(A, proposed, int(r))


def geodesic_distances(graph):
    """All-pairs hop counts (breadth-first search from every vertex)."""
    A = graph.adjacency if isinstance(graph, ConnectivityGraph) else np.asarray(graph)
    sparse = csr_matrix(A)
    hops = shortest_path(sparse, method="D", directed=False, unweighted=True)
    n, labels = connected_components(sparse, directed=False)
    comps = [np.flatnonzero(labels == c).tolist() for c in range(n)]
    return ProxyDistanceMatrix(hops, n == 1, comps)


def double_center(D2):
    D2 = np.asarray(D2, dtype=float)
    K = D2.shape[0]
    L = np.eye(K) - np.ones((K, K)) / K
    return -0.5 * L @ D2 @ L


def classical_mds(D2, r=2):
    """Top-``r`` coordinates of the doubly centred squared-distance matrix.

    Returns ``(Z, spectrum)`` where ``spectrum`` holds all eigenvalues,
    clipped at zero and sorted in descending order.
    """
    D2 = np.asarray(D2, dtype=float)
    if D2.ndim != 2 or D2.shape[0] != D2.shape[1]:
        raise ParameterError("distance matrix must be square")
    if not np.all(np.isfinite(D2)):
        raise ParameterError("distance matrix has non-finite entries")
    if not np.allclose(D2, D2.T) or np.any(np.diag(D2) != 0):
        raise ParameterError("distance matrix must be symmetric with zero diagonal")
    P = double_center(D2)
    P = 0.5 * (P + P.T)
    evals, evecs = np.linalg.eigh(P)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    spectrum = np.clip(evals, 0.0, None)
    tol = max(spectrum[0], 1e-300) * D2.shape[0] * np.finfo(float).eps * 10
    n_pos = int(np.sum(evals > tol))
    if n_pos < r:
        raise DegenerateInputError(f"only {n_pos} positive eigenvalues, need r={r}")
    Z = evecs[:, :r] * np.sqrt(spectrum[:r])
    return Z, spectrum


def mds_map(columns, r=2, squared=True):
    """Connectivity graph -> hop distances -> classical MDS (before alignment).

    ``squared=False`` feeds raw hop counts to the double centring instead of
    their squares.
    """
    graph = build_adjacency(columns, r)
    dist = geodesic_distances(graph)
    if not dist.connected:
        raise DisconnectedGraphError(dist.components)
    D = dist.hops ** 2 if squared else dist.hops
    Z, spectrum = classical_mds(D, r)
    return EmbeddedGrid(Z_hat=Z, spectrum=spectrum, graph=graph, distances=dist)


def _fit_similarity(src, dst, reflect):
    """Least-squares ``dst ~ s R src + t`` with ``det R = -1`` iff ``reflect``."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - mu_s, dst - mu_d
    var = np.sum(a * a)
    if var <= 0:
        raise DegenerateInputError("anchors coincide; similarity transform undefined")
    U, S, Vt = np.linalg.svd(b.T @ a)
    d = np.ones(len(S))
    want = -1.0 if reflect else 1.0
    if np.sign(np.linalg.det(U @ Vt)) != want:
        d[-1] = -1.0
    R = U @ np.diag(d) @ Vt
    scale = float(np.sum(S * d) / var)
    t = mu_d - scale * mu_s @ R.T
    resid = float(np.sqrt(np.sum((scale * src @ R.T + t - dst) ** 2)))
    return SimilarityTransform(scale, R, t, reflect, resid)


def anchor_align(Z, anchors, allow_reflection=True, reference_points=None, rtol=1e-9):
    """Similarity transform fitted to anchors, applied to every point.

    ``anchors`` is a list of ``(index, known_point)``. Both the proper and the
    reflected branch are fitted; the smaller anchor residual wins and a tie
    keeps the proper rotation. When the branches tie (always the case for
    exactly two anchors in 2D) and ``reference_points`` is given, the branch
    whose aligned points lie closer to that set is taken and the choice is
    flagged ``ambiguous``.
    """
    Z = np.asarray(Z, dtype=float)
    if len(anchors) < 2:
        raise ParameterError("need at least two anchors")
    idx = np.array([int(i) for i, _ in anchors])
    dst = np.array([np.asarray(p, dtype=float) for _, p in anchors])
    src = Z[idx]
    if np.sum((dst - dst.mean(axis=0)) ** 2) <= 0:
        raise DegenerateInputError("anchor target points coincide")
    proper = _fit_similarity(src, dst, reflect=False)
    if not allow_reflection:
        best = proper
    else:
        mirror = _fit_similarity(src, dst, reflect=True)
        scale_ref = np.sqrt(np.sum((dst - dst.mean(axis=0)) ** 2))
        tie = abs(mirror.residual - proper.residual) <= rtol * scale_ref
        if tie and reference_points is not None:
            ref = np.asarray(reference_points, dtype=float)
            costs = [_set_distance(t.apply(Z), ref) for t in (proper, mirror)]
            best = mirror if costs[1] < costs[0] else proper
            best.ambiguous = True
        elif tie:
            best = proper
            best.ambiguous = True
        else:
            best = mirror if mirror.residual < proper.residual else proper
    return EmbeddedGrid(Z_hat=Z, spectrum=np.array([]), transform=best, aligned=best.apply(Z))


def _set_distance(P, ref):
    d2 = np.sum((P[:, None, :] - ref[None, :, :]) ** 2, axis=-1)
    return float(np.sum(np.sqrt(d2.min(axis=1))))


def assign_to_grid(aligned, grid_points):
    """One-to-one column -> grid point map minimizing total squared distance.

    Returns ``(assignment, displacement)``: ``assignment[i]`` is the grid
    index given to embedded point ``i``; ``displacement[i]`` its distance.
    """
    P = aligned.aligned if isinstance(aligned, EmbeddedGrid) else np.asarray(aligned, dtype=float)
    Q = np.asarray(grid_points, dtype=float)
    if P.shape != Q.shape:
        raise ParameterError(f"{len(P)} embedded points vs {len(Q)} grid points")
    cost = np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(len(P), dtype=int)
    assignment[rows] = cols
    displacement = np.sqrt(cost[np.arange(len(P)), assignment])
    return assignment, displacement
