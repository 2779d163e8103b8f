"""Regression targets and synthetic data.

``tlb_distance`` is the third lower bound of the Gromov-Wasserstein
distance for equal-size, uniformly weighted clouds.  Each point ``i`` gets
its sorted vector of distances to all ``n`` points (self-distance zero
included).  Point ``i`` of ``V`` and point ``j`` of ``W`` cost the
1-Wasserstein distance between those two empirical distributions,
``mean_k |row_i[k] - row_j[k]|``, and the bound is the mean cost of an
optimal matching.  The overall normalization is ours and may differ from
other implementations by a constant factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import SymMatrix
from .errors import DomainError
from .pointcloud import as_cloud
from .prng import SplitMix64

COULOMB_EXPONENT = 2.4


@dataclass(frozen=True)
class Molecule:
    charges: np.ndarray
    coords: np.ndarray  # n x 3
    symbols: tuple[str, ...] | None = None

    def __post_init__(self):
        z = np.asarray(self.charges, dtype=np.float64).ravel()
        r = np.asarray(self.coords, dtype=np.float64)
        if z.size < 1:
            raise ValueError("molecule needs at least one atom")
        if r.shape != (z.size, 3):
            raise ValueError(f"coords must be {z.size} x 3, got {r.shape}")
        if np.any(z <= 0):
            raise ValueError("nuclear charges must be positive")
        object.__setattr__(self, "charges", z)
        object.__setattr__(self, "coords", r)

    @property
    def n(self) -> int:
        return self.charges.size

    def permuted(self, perm) -> "Molecule":
        """Atoms relabeled so old atom ``i`` becomes atom ``perm[i]``."""
        p = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(p)
        inv[p] = np.arange(p.size)
        sym = None if self.symbols is None else tuple(self.symbols[k] for k in inv)
        return Molecule(self.charges[inv], self.coords[inv], sym)


def coulomb_matrix(mol: Molecule) -> SymMatrix:
    z = mol.charges
    diff = mol.coords[:, None, :] - mol.coords[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, 1.0)
    if mol.n > 1 and np.min(dist[~np.eye(mol.n, dtype=bool)]) <= 0.0:
        raise DomainError("coincident nuclei: Coulomb repulsion undefined")
    X = np.outer(z, z) / dist
    np.fill_diagonal(X, 0.5 * z**COULOMB_EXPONENT)
    return SymMatrix._trusted(X)


def pairwise_distances(V) -> SymMatrix:
    V = as_cloud(V)
    diff = V[:, :, None] - V[:, None, :]
    return SymMatrix._trusted(np.sqrt(np.einsum("kij,kij->ij", diff, diff)))


def local_distance_profiles(V) -> np.ndarray:
    """Row ``i``: distances from point ``i`` to every point, ascending."""
    return np.sort(pairwise_distances(V).entries, axis=1)


def tlb_cost_matrix(V, W) -> np.ndarray:
    """``c[i, j] = mean_k |profile_V[i, k] - profile_W[j, k]|``."""
    a = local_distance_profiles(V)
    b = local_distance_profiles(W)
    if a.shape != b.shape:
        raise ValueError(f"tlb needs equal point counts, got {a.shape[0]} and {b.shape[0]}")
    return np.abs(a[:, None, :] - b[None, :, :]).mean(axis=2)


def tlb_distance(V, W) -> float:
    V = as_cloud(V)
    W = as_cloud(W)
    if V.shape[1] != W.shape[1]:
        raise ValueError(f"tlb needs equal point counts, got {V.shape[1]} and {W.shape[1]}")
    c = tlb_cost_matrix(V, W)
    rows, cols = linear_sum_assignment(c)
    # fsum is order independent, so swapping the arguments gives the same bits
    return math.fsum(c[rows, cols]) / c.shape[0]


def tlb_matrix(clouds_a, clouds_b) -> np.ndarray:
    """All cross distances ``tlb_distance(a_i, b_j)``."""
    prof_a = [local_distance_profiles(V) for V in clouds_a]
    prof_b = [local_distance_profiles(W) for W in clouds_b]
    out = np.empty((len(prof_a), len(prof_b)))
    for i, a in enumerate(prof_a):
        for j, b in enumerate(prof_b):
            if a.shape != b.shape:
                raise ValueError("tlb needs equal point counts")
            c = np.abs(a[:, None, :] - b[None, :, :]).mean(axis=2)
            r, k = linear_sum_assignment(c)
            out[i, j] = math.fsum(c[r, k]) / c.shape[0]
    return out


def downsample(V, k: int, seed: int) -> np.ndarray:
    """``k`` columns picked without replacement by a seeded Fisher-Yates prefix."""
    V = as_cloud(V)
    n = V.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"cannot downsample {n} points to {k}")
    return V[:, SplitMix64(seed).sample_indices(n, k)]


# -- synthetic data ---------------------------------------------------------

CLOUD_FAMILIES = ("gaussian", "two-cluster", "shape-mix")
MATRIX_FAMILIES = ("gaussian", "uniform", "wishart")


def _two_cluster(rng: SplitMix64, d: int, n: int, separation: float) -> np.ndarray:
    # half near separation * e_0, rest near e_1 (or -e_0 when d == 1)
    n1 = n // 2
    a = np.zeros(d)
    a[0] = separation
    b = np.zeros(d)
    if d > 1:
        b[1] = 1.0
    else:
        b[0] = -1.0
    noise = 0.1 * rng.normal((d, n))
    V = np.empty((d, n))
    V[:, :n1] = a[:, None] + noise[:, :n1]
    V[:, n1:] = b[:, None] + noise[:, n1:]
    return V


def _box_surface(rng: SplitMix64, n: int, extents: np.ndarray) -> np.ndarray:
    # uniform on the surface of an axis-aligned box [0, ex] x [0, ey] x [0, ez]
    ex, ey, ez = extents
    areas = np.array([ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey])
    cum = np.cumsum(areas) / areas.sum()
    u = rng.uniform(3 * n).reshape(3, n)
    face = np.searchsorted(cum, u[0], side="right")
    face = np.minimum(face, 5)
    P = np.empty((3, n))
    for f in range(6):
        sel = face == f
        axis = f // 2
        others = [a for a in range(3) if a != axis]
        P[axis, sel] = 0.0 if f % 2 == 0 else extents[axis]
        P[others[0], sel] = u[1, sel] * extents[others[0]]
        P[others[1], sel] = u[2, sel] * extents[others[1]]
    return P


def _ellipsoid_surface(rng: SplitMix64, n: int, axes: np.ndarray) -> np.ndarray:
    # normalized Gaussians pushed onto the ellipsoid, then placed in the positive octant
    g = rng.normal((3, n))
    g /= np.linalg.norm(g, axis=0, keepdims=True)
    return axes[:, None] * (g + 1.0)


def shape_cloud(rng: SplitMix64, kind: str, n: int) -> np.ndarray:
    """Surface samples of a random box (``"box"``) or ellipsoid (``"ellipsoid"``).

    Shapes sit in the positive octant with a corner of their bounding box at
    the origin, like mesh-sampled models in a normalized frame.
    """
    if kind == "box":
        return _box_surface(rng, n, 0.5 + rng.uniform(3))
    if kind == "ellipsoid":
        return _ellipsoid_surface(rng, n, 0.25 + 0.5 * rng.uniform(3))
    raise ValueError(f"unknown shape kind {kind!r}")


def synth_clouds(count: int, d: int, n: int, family: str = "gaussian", seed: int = 0,
                 separation: float = 10.0) -> list[np.ndarray]:
    """Deterministic synthetic clouds.

    ``shape-mix`` (``d == 3`` only) alternates box and ellipsoid surfaces,
    box first.
    """
    if count < 1 or d < 1 or n < 1:
        raise ValueError("count, d and n must be positive")
    rng = SplitMix64(seed)
    if family == "gaussian":
        return [rng.normal((d, n)) for _ in range(count)]
    if family == "two-cluster":
        return [_two_cluster(rng, d, n, separation) for _ in range(count)]
    if family == "shape-mix":
        if d != 3:
            raise ValueError("shape-mix clouds are three-dimensional")
        return [shape_cloud(rng, "box" if k % 2 == 0 else "ellipsoid", n) for k in range(count)]
    raise ValueError(f"unknown cloud family {family!r}; choose from {CLOUD_FAMILIES}")


def synth_symmatrices(count: int, n: int, family: str = "gaussian", seed: int = 0) -> list[SymMatrix]:
    """Deterministic synthetic symmetric matrices.

    ``gaussian``: upper triangle iid N(0, 1).  ``uniform``: upper triangle
    iid U[0, 1), i.e. dense positively weighted graphs.  ``wishart``:
    ``A A^T / n`` with ``A`` iid N(0, 1).
    """
    if count < 1 or n < 1:
        raise ValueError("count and n must be positive")
    rng = SplitMix64(seed)
    iu = np.triu_indices(n)
    out = []
    for _ in range(count):
        if family == "wishart":
            A = rng.normal((n, n))
            X = A @ A.T / n
            out.append(SymMatrix._trusted(0.5 * (X + X.T)))
            continue
        if family == "gaussian":
            z = rng.normal(len(iu[0]))
        elif family == "uniform":
            z = rng.uniform(len(iu[0]))
        else:
            raise ValueError(f"unknown matrix family {family!r}; choose from {MATRIX_FAMILIES}")
        a = np.zeros((n, n))
        a[iu] = z
        a = a + np.triu(a, 1).T
        out.append(SymMatrix._trusted(a))
    return out


@dataclass
class LabeledPairDataset:
    clouds: list[np.ndarray]
    pairs: np.ndarray  # P x 2 int
    targets: np.ndarray  # P

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.targets = np.asarray(self.targets, dtype=np.float64).ravel()
        if len(self.pairs) != len(self.targets):
            raise ValueError("one target per pair required")
        if len(self.pairs) and (self.pairs.min() < 0 or self.pairs.max() >= len(self.clouds)):
            raise ValueError("pair index out of range")
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be finite")


def cross_pair_dataset(group_a, group_b) -> LabeledPairDataset:
    """All ``len(a) * len(b)`` cross pairs with TLB targets."""
    clouds = list(group_a) + list(group_b)
    na = len(group_a)
    T = tlb_matrix(group_a, group_b)
    pairs = [(i, na + j) for i in range(na) for j in range(len(group_b))]
    return LabeledPairDataset(clouds, np.array(pairs), T.ravel())
