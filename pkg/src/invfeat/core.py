"""Symmetric matrices, permutations and the conjugation action.

Off-diagonal entries are addressed by *slots*: the pairs ``(i, j)`` with
``i < j`` enumerated in row-major order, so for ``n = 3`` slot 0 is
``(0, 1)``, slot 1 is ``(0, 2)`` and slot 2 is ``(1, 2)``.  Every module
uses this convention.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import SizeLimitError

ASYMMETRY_WARN = 1e-9
ORBIT_ORACLE_MAX_N = 8


class AsymmetryWarning(UserWarning):
    pass


class SymMatrix:
    """Dense real symmetric ``n x n`` matrix with read-only storage.

    Construction symmetrizes as ``(X + X.T) / 2`` and warns when the input's
    max-abs asymmetry exceeds 1e-9; the measured asymmetry is kept in
    :attr:`asymmetry`.
    """

    __slots__ = ("entries", "asymmetry")

    def __init__(self, entries, *, warn: bool = True):
        a = np.array(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        asym = float(np.max(np.abs(a - a.T)))
        if asym > 0.0:
            a = 0.5 * (a + a.T)
            if warn and asym > ASYMMETRY_WARN:
                warnings.warn(
                    f"input matrix asymmetric by {asym:.3e}; symmetrized",
                    AsymmetryWarning,
                    stacklevel=2,
                )
        a.setflags(write=False)
        self.entries = a
        self.asymmetry = asym

    @classmethod
    def coerce(cls, x) -> "SymMatrix":
        return x if isinstance(x, cls) else cls(x)

    @classmethod
    def _trusted(cls, a: np.ndarray) -> "SymMatrix":
        # caller guarantees exact symmetry
        obj = cls.__new__(cls)
        a = np.ascontiguousarray(a, dtype=np.float64)
        a.setflags(write=False)
        obj.entries = a
        obj.asymmetry = 0.0
        return obj

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __getitem__(self, idx):
        return self.entries[idx]

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(
            np.array_equal(self.entries, other.entries)
        )

    def __hash__(self):
        return hash((self.n, self.entries.tobytes()))

    def __repr__(self):
        return f"SymMatrix({self.entries.tolist()!r})"

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.entries).copy()

    def offdiagonal(self) -> np.ndarray:
        """Upper-triangle entries in slot order."""
        iu, ju = triu_slots(self.n)
        return self.entries[iu, ju]


@lru_cache(maxsize=64)
def _triu_slots(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, 1)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


def triu_slots(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column index arrays of the off-diagonal slots."""
    return _triu_slots(int(n))


def slot_index(i: int, j: int, n: int) -> int:
    """Slot number of the unordered pair ``{i, j}``, ``i != j``."""
    if i == j:
        raise ValueError("diagonal positions have no off-diagonal slot")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class Permutation:
    """Bijection of ``{0..n-1}``; ``map[i]`` is the image of ``i``."""

    map: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(v) for v in self.map)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"not a permutation of 0..{len(m) - 1}: {m}")
        object.__setattr__(self, "map", m)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def swap(cls, n: int, a: int, b: int) -> "Permutation":
        m = list(range(n))
        m[a], m[b] = m[b], m[a]
        return cls(tuple(m))

    @property
    def n(self) -> int:
        return len(self.map)

    def __call__(self, i: int) -> int:
        return self.map[i]

    def compose(self, other: "Permutation") -> "Permutation":
        """``self o other``: apply ``other`` first."""
        if other.n != self.n:
            raise ValueError("cannot compose permutations of different sizes")
        return Permutation(tuple(self.map[other.map[i]] for i in range(self.n)))

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, v in enumerate(self.map):
            inv[v] = i
        return Permutation(tuple(inv))

    def as_array(self) -> np.ndarray:
        return np.array(self.map, dtype=np.int64)


def all_permutations(n: int) -> Iterator[Permutation]:
    for m in itertools.permutations(range(n)):
        yield Permutation(m)


@dataclass(frozen=True)
class DiagOffdiagPermPair:
    """Element ``(sigma, tau)`` of S_n x S_{n(n-1)/2}.

    ``sigma`` permutes diagonal positions, ``tau`` permutes off-diagonal
    slots, independently of each other.
    """

    sigma: Permutation
    tau: Permutation

    def __post_init__(self):
        n = self.sigma.n
        if self.tau.n != n * (n - 1) // 2:
            raise ValueError(
                f"tau acts on {self.tau.n} slots, expected {n * (n - 1) // 2} for n={n}"
            )

    @property
    def n(self) -> int:
        return self.sigma.n

    def compose(self, other: "DiagOffdiagPermPair") -> "DiagOffdiagPermPair":
        return DiagOffdiagPermPair(self.sigma.compose(other.sigma), self.tau.compose(other.tau))

    @classmethod
    def identity(cls, n: int) -> "DiagOffdiagPermPair":
        return cls(Permutation.identity(n), Permutation.identity(n * (n - 1) // 2))


def _check_n(X: SymMatrix, n: int, what: str):
    if X.n != n:
        raise ValueError(f"{what} acts on n={n}, matrix has n={X.n}")


def apply_permutation(X, p: Permutation) -> SymMatrix:
    """Conjugation ``P X P^T``: ``result[p(i), p(j)] == X[i, j]``."""
    X = SymMatrix.coerce(X)
    _check_n(X, p.n, "permutation")
    inv = p.inverse().as_array()
    return SymMatrix._trusted(X.entries[np.ix_(inv, inv)])


def apply_gamma(X, g: DiagOffdiagPermPair) -> SymMatrix:
    X = SymMatrix.coerce(X)
    _check_n(X, g.n, "pair")
    n = X.n
    out = np.empty((n, n))
    d = X.diagonal()
    out[np.diag_indices(n)] = d[g.sigma.inverse().as_array()]
    if n > 1:
        off = X.offdiagonal()
        moved = off[g.tau.inverse().as_array()]
        iu, ju = triu_slots(n)
        out[iu, ju] = moved
        out[ju, iu] = moved
    return SymMatrix._trusted(out)


def induced_pair(p: Permutation) -> DiagOffdiagPermPair:
    """The ``(sigma, tau)`` whose action equals conjugation by ``p``."""
    n = p.n
    iu, ju = triu_slots(n)
    tau = tuple(slot_index(p(int(i)), p(int(j)), n) for i, j in zip(iu, ju))
    return DiagOffdiagPermPair(p, Permutation(tau))


def orbit(X) -> list[SymMatrix]:
    """Distinct conjugates of ``X`` (brute force, ``n! `` images)."""
    X = SymMatrix.coerce(X)
    _require_small(X.n, ORBIT_ORACLE_MAX_N)
    seen = {}
    for p in all_permutations(X.n):
        Y = apply_permutation(X, p)
        seen.setdefault(Y.entries.tobytes(), Y)
    return list(seen.values())


def _require_small(n: int, limit: int):
    if n > limit:
        raise SizeLimitError(
            f"brute-force orbit oracle limited to n <= {limit} (n! = {math.factorial(limit)}), got n={n}"
        )


def same_orbit_bruteforce(X, Y, tol: float = 0.0) -> bool:
    """True iff some permutation ``p`` gives ``max|p.X - Y| <= tol``.

    Plain enumeration of S_n, pruned as soon as a partially assigned
    permutation already violates ``tol`` on an entry.
    """
    X = SymMatrix.coerce(X)
    Y = SymMatrix.coerce(Y)
    if X.n != Y.n:
        raise ValueError(f"size mismatch: {X.n} vs {Y.n}")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    n = X.n
    _require_small(n, ORBIT_ORACLE_MAX_N)
    x = X.entries.tolist()
    y = Y.entries.tolist()
    image = [0] * n
    used = [False] * n

    def extend(i: int) -> bool:
        if i == n:
            return True
        xi = x[i]
        for a in range(n):
            if used[a]:
                continue
            ya = y[a]
            if abs(ya[a] - xi[i]) > tol:
                continue
            ok = True
            for k in range(i):
                if abs(ya[image[k]] - xi[k]) > tol:
                    ok = False
                    break
            if not ok:
                continue
            used[a] = True
            image[i] = a
            if extend(i + 1):
                return True
            used[a] = False
        return False

    return extend(0)


def max_abs_diff(A, B) -> float:
    return float(np.max(np.abs(np.asarray(A) - np.asarray(B))))


def random_symmetric(n: int, rng, scale: float = 1.0) -> SymMatrix:
    """Upper triangle iid N(0, scale^2), mirrored.  ``rng`` is a SplitMix64."""
    z = rng.normal(n * (n + 1) // 2) * scale
    a = np.zeros((n, n))
    iu = np.triu_indices(n)
    a[iu] = z
    a = a + np.triu(a, 1).T
    return SymMatrix._trusted(a)


def matrix_from_text(text: str, path=None) -> SymMatrix:
    """Parse the matrix text format: a line ``n`` then ``n`` rows of ``n`` reals."""
    from .errors import ParseError

    lines = [(k + 1, ln) for k, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise ParseError("empty matrix file", 1, path)
    lineno, head = lines[0]
    try:
        n = int(head.strip())
    except ValueError:
        raise ParseError(f"expected matrix size, got {head.strip()!r}", lineno, path) from None
    if n < 1:
        raise ParseError(f"matrix size must be positive, got {n}", lineno, path)
    if len(lines) - 1 < n:
        raise ParseError(f"expected {n} rows, found {len(lines) - 1}", lines[-1][0], path)
    rows = []
    for lineno, ln in lines[1 : n + 1]:
        parts = ln.split()
        if len(parts) != n:
            raise ParseError(f"expected {n} values, found {len(parts)}", lineno, path)
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ParseError(str(exc), lineno, path) from None
    if len(lines) - 1 > n:
        raise ParseError("trailing content after matrix rows", lines[n + 1][0], path)
    return SymMatrix(rows)


def matrix_to_text(X) -> str:
    X = SymMatrix.coerce(X)
    rows = [" ".join(format(float(v), ".17g") for v in row) for row in X.entries]
    return f"{X.n}\n" + "\n".join(rows) + "\n"


def as_perm(seq: Sequence[int]) -> Permutation:
    return seq if isinstance(seq, Permutation) else Permutation(tuple(seq))
