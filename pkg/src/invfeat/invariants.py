"""Conjugation-invariant features of symmetric matrices.

The feature pack of ``X`` is

* the diagonal sorted in descending order,
* the off-diagonal slots sorted in descending order,
* ``f_star(X) = sum_{i != j} X_ii X_ij``.

The two sorted lists are invariant under independent permutations of the
diagonal and of the off-diagonal slots; ``f_star`` is the one coupling
term that pins those permutations to a common relabeling of the indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (
    DiagOffdiagPermPair,
    Permutation,
    SymMatrix,
    all_permutations,
    apply_gamma,
    induced_pair,
    same_orbit_bruteforce,
)
from .errors import DomainError, SizeLimitError

DEFAULT_RTOL = 1e-9
IMAG_DISCARD = 1e-7
BAD_SET_MAX_N = 4


def _desc(values: np.ndarray) -> np.ndarray:
    return -np.sort(-np.asarray(values, dtype=np.float64), kind="stable")


def rel_gap(a, b) -> np.ndarray:
    """Entrywise ``|a - b| / (1 + max(|a|, |b|))``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / (1.0 + np.maximum(np.abs(a), np.abs(b)))


def rel_close(a, b, rtol: float = DEFAULT_RTOL) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        return False
    return a.size == 0 or bool(np.all(rel_gap(a, b) <= rtol))


def f_diag_sorted(X) -> np.ndarray:
    return _desc(SymMatrix.coerce(X).diagonal())


def f_offdiag_sorted(X) -> np.ndarray:
    """Descending off-diagonal entries; empty for ``n == 1``."""
    return _desc(SymMatrix.coerce(X).offdiagonal())


def f_star(X) -> float:
    # O(n) extra storage: one row-sum vector
    a = SymMatrix.coerce(X).entries
    d = np.diagonal(a)
    rows = a.sum(axis=1)
    return float(np.dot(d, rows - d))


@dataclass(frozen=True)
class FeaturePack:
    diag_sorted: np.ndarray
    offdiag_sorted: np.ndarray
    f_star: float

    @property
    def n(self) -> int:
        return len(self.diag_sorted)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.diag_sorted, self.offdiag_sorted, [self.f_star]])

    def allclose(self, other: "FeaturePack", rtol: float = DEFAULT_RTOL) -> bool:
        return rel_close(self.as_vector(), other.as_vector(), rtol)

    def max_gap(self, other: "FeaturePack") -> float:
        """Largest absolute coordinate difference (``inf`` if sizes differ)."""
        a, b = self.as_vector(), other.as_vector()
        if a.shape != b.shape:
            return float("inf")
        return float(np.max(np.abs(a - b)))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "diag_sorted": [float(v) for v in self.diag_sorted],
            "offdiag_sorted": [float(v) for v in self.offdiag_sorted],
            "f_star": float(self.f_star),
        }


def feature_pack(X) -> FeaturePack:
    X = SymMatrix.coerce(X)
    return FeaturePack(f_diag_sorted(X), f_offdiag_sorted(X), f_star(X))


def elementary_symmetric(values) -> np.ndarray:
    """``(e_1, ..., e_m)`` of the given values.

    Built by multiplying out ``prod_i (T - v_i)`` one factor at a time; in
    terms of ``e`` each factor updates ``e_k <- e_k + v e_{k-1}``.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    e = np.zeros(len(v) + 1)
    e[0] = 1.0
    for k, x in enumerate(v, start=1):
        e[1 : k + 1] = e[1 : k + 1] + x * e[0:k]
    return e[1:]


def _companion(monic_tail: np.ndarray) -> np.ndarray:
    # monic p(T) = T^m + c_1 T^{m-1} + ... + c_m
    m = len(monic_tail)
    C = np.zeros((m, m))
    C[0, :] = -monic_tail
    if m > 1:
        C[np.arange(1, m), np.arange(m - 1)] = 1.0
    return C


def roots_from_elementary(coeffs) -> np.ndarray:
    """Descending real roots of ``T^m - e_1 T^{m-1} + e_2 T^{m-2} - ...``.

    Trailing zero coefficients contribute exact zero roots; the rest come
    from the eigenvalues of the companion matrix.  Imaginary parts up to
    1e-7 are dropped, larger ones raise :class:`DomainError`.
    """
    e = np.asarray(coeffs, dtype=np.float64).ravel()
    m = len(e)
    if m == 0:
        return np.zeros(0)
    nz = np.flatnonzero(e)
    r = int(nz[-1]) + 1 if nz.size else 0
    zeros = np.zeros(m - r)
    if r == 0:
        return zeros
    signs = np.where(np.arange(1, r + 1) % 2 == 1, -1.0, 1.0)
    lam = np.linalg.eigvals(_companion(signs * e[:r]))
    resid = float(np.max(np.abs(lam.imag)))
    if resid > IMAG_DISCARD:
        raise DomainError(
            f"polynomial is not real-rooted: max imaginary residual {resid:.3e}"
        )
    return _desc(np.concatenate([lam.real, zeros]))


@dataclass(frozen=True)
class ElementaryPack:
    e_diag: np.ndarray
    e_offdiag: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.e_diag, self.e_offdiag])


def elementary_pack(X) -> ElementaryPack:
    X = SymMatrix.coerce(X)
    return ElementaryPack(elementary_symmetric(X.diagonal()), elementary_symmetric(X.offdiagonal()))


def gamma_group(n: int):
    """All of S_n x S_{n(n-1)/2} (diagonal perm major)."""
    m = n * (n - 1) // 2
    taus = [Permutation(t) for t in itertools.permutations(range(m))]
    for sigma in all_permutations(n):
        for tau in taus:
            yield DiagOffdiagPermPair(sigma, tau)


def conjugation_subgroup(n: int) -> set[DiagOffdiagPermPair]:
    """Image of S_n inside S_n x S_{n(n-1)/2}."""
    return {induced_pair(p) for p in all_permutations(n)}


def bad_set_witness(X, tol: float = 0.0) -> DiagOffdiagPermPair | None:
    """Some pair outside the conjugation subgroup that fixes ``f_star(X)``.

    Returns ``None`` when every such pair moves ``f_star(X)`` by more than
    ``tol``, i.e. ``X`` avoids the bad set cut out by ``f_star``.
    """
    X = SymMatrix.coerce(X)
    n = X.n
    if n > BAD_SET_MAX_N:
        raise SizeLimitError(f"bad-set search limited to n <= {BAD_SET_MAX_N}, got n={n}")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    conj = conjugation_subgroup(n)
    base = f_star(X)
    for g in gamma_group(n):
        if g in conj:
            continue
        if abs(f_star(apply_gamma(X, g)) - base) <= tol:
            return g
    return None


@dataclass(frozen=True)
class NecessityWitness:
    X: SymMatrix
    Y: SymMatrix
    gamma: DiagOffdiagPermPair
    checked: int


def find_fstar_necessity_witness(n: int = 3, values=range(1, 10)) -> NecessityWitness | None:
    """Search integer matrices for a pair the sorted lists cannot tell apart.

    Enumerates matrices with entries from ``values`` in lexicographic order
    of their free entries (diagonal first, then slots).  For each, every
    ``Y = gamma . X`` with ``gamma`` outside the conjugation subgroup shares
    both sorted lists with ``X``; the first ``Y`` that the brute-force
    oracle places in a different orbit and that has a different ``f_star``
    is returned.
    """
    vals = [float(v) for v in values]
    m = n * (n - 1) // 2
    conj = conjugation_subgroup(n)
    gammas = [g for g in gamma_group(n) if g not in conj]
    iu, ju = np.triu_indices(n, 1)
    checked = 0
    for free in itertools.product(vals, repeat=n + m):
        a = np.diag(free[:n])
        a[iu, ju] = free[n:]
        a[ju, iu] = free[n:]
        X = SymMatrix._trusted(a)
        fx = f_star(X)
        for g in gammas:
            Y = apply_gamma(X, g)
            checked += 1
            if f_star(Y) != fx and not same_orbit_bruteforce(X, Y, 0.0):
                return NecessityWitness(X, Y, g, checked)
    return None
