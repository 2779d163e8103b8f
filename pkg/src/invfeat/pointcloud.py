"""Point clouds modulo rotations, reflections and relabeling.

A cloud is a ``d x n`` array whose columns are the points.  Two clouds are
equivalent when ``W = U V P^T`` for an orthogonal ``U`` and a permutation
matrix ``P``.  The Gram matrix ``V^T V`` is a complete O(d) invariant, so
the matrix features of :mod:`invfeat.invariants` applied to it give
invariants of the cloud.
"""

from __future__ import annotations

import numpy as np

from .core import SymMatrix, same_orbit_bruteforce
from .errors import ParseError
from .invariants import FeaturePack, feature_pack
from .prng import SplitMix64

ORTHO_TOL = 1e-10


def as_cloud(V) -> np.ndarray:
    """Validate and return a float ``d x n`` array."""
    a = np.asarray(V, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"point cloud must be a non-empty d x n array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("point cloud has non-finite coordinates")
    return a


def gram(V) -> SymMatrix:
    V = as_cloud(V)
    G = V.T @ V
    return SymMatrix._trusted(0.5 * (G + G.T))


def center(V) -> np.ndarray:
    V = as_cloud(V)
    return V - V.mean(axis=1, keepdims=True)


def tilde_feature_pack(V) -> FeaturePack:
    return feature_pack(gram(V))


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Orthogonal ``d x d`` matrix from QR of a seeded Gaussian matrix.

    Signs are fixed so the triangular factor has a positive diagonal; the
    result is a deterministic function of ``seed``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    A = SplitMix64(seed).normal((d, d))
    Q, R = np.linalg.qr(A)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def is_orthogonal(U, tol: float = ORTHO_TOL) -> bool:
    U = np.asarray(U, dtype=np.float64)
    return U.ndim == 2 and U.shape[0] == U.shape[1] and bool(
        np.max(np.abs(U.T @ U - np.eye(U.shape[0]))) <= tol
    )


def transform(V, U, perm) -> np.ndarray:
    """``U V P^T`` where ``perm`` sends column ``i`` to position ``perm[i]``."""
    V = as_cloud(V)
    p = np.asarray(perm.map if hasattr(perm, "map") else perm, dtype=np.int64)
    out = np.empty_like(V)
    out[:, p] = V
    return np.asarray(U, dtype=np.float64) @ out


def same_orbit_pointcloud(V, W, tol: float = 1e-9) -> bool:
    """Brute-force O(d) x S_n equivalence via Gram matrices (``n <= 8``)."""
    V = as_cloud(V)
    W = as_cloud(W)
    if V.shape != W.shape:
        raise ValueError(f"shape mismatch: {V.shape} vs {W.shape}")
    return same_orbit_bruteforce(gram(V), gram(W), tol)


def cloud_from_text(text: str, path=None) -> np.ndarray:
    """Parse ``d n`` then ``n`` lines of ``d`` reals (one point per line)."""
    lines = [(k + 1, ln) for k, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise ParseError("empty point-cloud file", 1, path)
    lineno, head = lines[0]
    parts = head.split()
    try:
        d, n = (int(v) for v in parts)
    except ValueError:
        raise ParseError(f"expected 'd n' header, got {head.strip()!r}", lineno, path) from None
    if d < 1 or n < 1:
        raise ParseError(f"d and n must be positive, got d={d}, n={n}", lineno, path)
    body = lines[1:]
    if len(body) != n:
        raise ParseError(f"expected {n} points, found {len(body)}", (body or lines)[-1][0], path)
    V = np.empty((d, n))
    for col, (lineno, ln) in enumerate(body):
        vals = ln.split()
        if len(vals) != d:
            raise ParseError(f"expected {d} coordinates, found {len(vals)}", lineno, path)
        try:
            V[:, col] = [float(v) for v in vals]
        except ValueError as exc:
            raise ParseError(str(exc), lineno, path) from None
    if not np.all(np.isfinite(V)):
        raise ParseError("non-finite coordinate", None, path)
    return V


def cloud_to_text(V) -> str:
    V = as_cloud(V)
    d, n = V.shape
    rows = [" ".join(format(float(x), ".17g") for x in V[:, i]) for i in range(n)]
    return f"{d} {n}\n" + "\n".join(rows) + "\n"
