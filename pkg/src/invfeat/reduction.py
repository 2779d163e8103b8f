"""Linear-size invariants of point clouds.

Pipeline for a ``d x n`` cloud ``V``:

1. an *identifier* ``C_V`` (``d x d``, columns linearly independent) with
   ``C_{U V P^T} = U C_V``;
2. the ``d x n`` matrix ``C_V^T V``, which is O(d)-invariant and only
   permuted by relabeling;
3. a permutation-invariant, generically separating map on its columns,
   together with the ``d x d`` corner ``C_V^T C_V``.

The Gram matrix of ``[V, C_V]`` has rank ``d`` and is recovered from its
last ``d`` rows (``reconstruct_gram``), which is why the pair in step 3
loses nothing.

Both identifiers are degenerate on centered clouds: the first polynomial
column is the mean, and the size-weighted sum of k-means centroids is
``n`` times the mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SymMatrix
from .errors import DegenerateInputError, ReconstructionError
from .pointcloud import as_cloud
from .prng import SplitMix64

DET_RTOL = 1e-12
NORM_TIE_RTOL = 1e-9
MAX_CONDITION = 1e12
CORNER_ATOL = 1e-8


def default_m(d: int) -> int:
    return 2 * d + 1


@dataclass(frozen=True)
class IdentifierMatrix:
    C: np.ndarray
    construction: str

    @property
    def d(self) -> int:
        return self.C.shape[0]

    def is_degenerate(self) -> bool:
        return identifier_degenerate(self.C)


def identifier_degenerate(C) -> bool:
    """``|det C| <= 1e-12 * (max column norm)^d``."""
    C = np.asarray(C, dtype=np.float64)
    d = C.shape[0]
    scale = float(np.max(np.linalg.norm(C, axis=0))) if C.size else 0.0
    return abs(float(np.linalg.det(C))) <= DET_RTOL * scale**d


def identifiers_poly(V) -> IdentifierMatrix:
    """Column ``j`` (0-based) is ``mean_i |v_i|^(2j) v_i``."""
    V = as_cloud(V)
    d, n = V.shape
    sq = np.einsum("ij,ij->j", V, V)
    weights = np.ones(n)
    C = np.empty((d, d))
    for j in range(d):
        C[:, j] = V @ weights / n
        weights = weights * sq
    return IdentifierMatrix(C, "poly")


def _check_ties(norms: np.ndarray, order: np.ndarray, count: int, what: str):
    # consecutive entries of norms[order[:count]] must differ
    for k in range(min(count, len(order)) - 1):
        a, b = norms[order[k]], norms[order[k + 1]]
        if a - b <= NORM_TIE_RTOL * max(abs(a), abs(b)):
            raise DegenerateInputError(
                f"tied {what} norms: indices {int(order[k])} and {int(order[k + 1])} "
                f"({a:.17g} vs {b:.17g})"
            )


def _distinct_by_norm(V: np.ndarray, norms: np.ndarray, count: int) -> np.ndarray:
    # first `count` pairwise-distinct columns in descending norm order;
    # exact duplicates are interchangeable, so skipping them keeps relabeling invariance
    chosen: list[int] = []
    for i in np.argsort(-norms, kind="stable"):
        if any(np.array_equal(V[:, i], V[:, j]) for j in chosen):
            continue
        chosen.append(int(i))
        if len(chosen) == count:
            break
    return np.array(chosen, dtype=np.int64)


def identifiers_kmeans(V, max_iters: int = 100) -> IdentifierMatrix:
    """Lloyd's algorithm with ``k = d`` from a relabeling-free start.

    Starts from the ``d`` largest-norm distinct points, breaks assignment ties toward
    the lower centroid index, keeps a centroid in place if its cluster
    empties, and stops once assignments repeat or after ``max_iters``.
    Centroids come back ordered by descending norm.  Tied norms, either
    among the start points or among the final centroids, raise
    :class:`DegenerateInputError`: any tie-break would depend on labels.
    """
    V = as_cloud(V)
    d, n = V.shape
    if n < d:
        raise ValueError(f"k-means identifiers need n >= d, got n={n}, d={d}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    norms = np.linalg.norm(V, axis=0)
    start = _distinct_by_norm(V, norms, d + 1)
    if len(start) < d:
        raise DegenerateInputError(f"cloud has fewer than d={d} distinct points")
    # ties matter among the first d points and across the cut after them
    _check_ties(norms, start, d + 1, "initial point")
    centroids = V[:, start[:d]].copy()
    assign = None
    sq = np.einsum("ij,ij->j", V, V)
    for _ in range(max_iters):
        dist = sq[:, None] - 2.0 * (V.T @ centroids) + np.einsum("ij,ij->j", centroids, centroids)[None, :]
        new = np.argmin(dist, axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for k in range(d):
            members = assign == k
            if members.any():
                centroids[:, k] = V[:, members].mean(axis=1)
    cnorms = np.linalg.norm(centroids, axis=0)
    final = np.argsort(-cnorms, kind="stable")
    _check_ties(cnorms, final, d, "centroid")
    return IdentifierMatrix(centroids[:, final], "kmeans")


IDENTIFIERS = {"poly": identifiers_poly, "kmeans": identifiers_kmeans}


def identifier(V, construction: str = "poly") -> IdentifierMatrix:
    try:
        fn = IDENTIFIERS[construction]
    except KeyError:
        raise ValueError(f"unknown identifier {construction!r}; choose from {sorted(IDENTIFIERS)}") from None
    return fn(V)


def projection_directions(d: int, m: int, seed: int) -> np.ndarray:
    """``m x d`` unit rows from seeded Gaussians."""
    G = SplitMix64(seed).normal((m, d))
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return G / norms


def separator_sorted_projections(M, m: int, seed: int) -> np.ndarray:
    """Sorted projections of the columns of ``M`` onto ``m`` fixed directions.

    Output has length ``m * n``: for each direction, the ``n`` projections in
    descending order.  Continuous and invariant to column order.
    """
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    d, n = M.shape
    if m < 1:
        raise ValueError("m must be positive")
    P = projection_directions(d, m, seed) @ M
    return -np.sort(-P, axis=1).ravel()


def separator_canonical(M) -> np.ndarray:
    """Columns in descending lexicographic order, concatenated.

    Exact but discontinuous; test oracle only.
    """
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    order = np.lexsort(M[::-1])[::-1]
    return M[:, order].T.ravel()


def lifted_rows(V, C) -> tuple[np.ndarray, np.ndarray]:
    """Last ``d`` rows ``C^T [V, C]`` of the lifted Gram matrix, and the corner."""
    V = as_cloud(V)
    C = np.asarray(C, dtype=np.float64)
    R = C.T @ np.hstack([V, C])
    A = C.T @ C
    return R, 0.5 * (A + A.T)


def reconstruct_gram(R, A) -> SymMatrix:
    """Rank-``d`` completion ``R^T A^-1 R`` from the last ``d`` rows.

    ``A`` must match the last ``d`` columns of ``R``.
    """
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    d = A.shape[0]
    if A.shape != (d, d) or R.shape[0] != d or R.shape[1] < d:
        raise ValueError(f"incompatible shapes R {R.shape}, A {A.shape}")
    scale = 1.0 + float(np.max(np.abs(A)))
    mismatch = float(np.max(np.abs(R[:, -d:] - A)))
    if mismatch > CORNER_ATOL * scale:
        raise ValueError(f"corner block disagrees with last columns of R by {mismatch:.3e}")
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ReconstructionError("corner block is singular", cond)
    X = R.T @ np.linalg.solve(A, R)
    return SymMatrix._trusted(0.5 * (X + X.T))


@dataclass(frozen=True)
class HFeatures:
    separator_out: np.ndarray
    corner: np.ndarray

    def as_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.corner.shape[0])
        return np.concatenate([self.separator_out, self.corner[iu]])

    def max_gap(self, other: "HFeatures") -> float:
        a, b = self.as_vector(), other.as_vector()
        if a.shape != b.shape:
            return float("inf")
        return float(np.max(np.abs(a - b)))

    def to_json(self) -> dict:
        return {
            "separator_out": [float(v) for v in self.separator_out],
            "corner": [[float(v) for v in row] for row in self.corner],
        }


def checked_identifier(V, construction: str = "poly") -> np.ndarray:
    C = identifier(V, construction).C
    if identifier_degenerate(C):
        raise DegenerateInputError(
            f"{construction} identifiers are rank deficient for this cloud (bad set)"
        )
    return C


def h_features(V, identifier: str = "poly", m: int | None = None, seed: int = 0) -> HFeatures:
    V = as_cloud(V)
    d = V.shape[0]
    C = checked_identifier(V, identifier)
    m = default_m(d) if m is None else m
    corner = C.T @ C
    return HFeatures(separator_sorted_projections(C.T @ V, m, seed), 0.5 * (corner + corner.T))
