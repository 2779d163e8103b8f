"""Seeded 64-bit PRNG shared by every stochastic step in the package.

The generator is SplitMix64::

    state <- state + 0x9E3779B97F4A7C15          (mod 2**64)
    z <- state
    z <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9    (mod 2**64)
    z <- (z ^ (z >> 27)) * 0x94D049BB133111EB    (mod 2**64)
    output z ^ (z >> 31)

Uniforms in [0, 1) take the top 53 bits of one output.  Normals are
Box-Muller on consecutive uniform pairs ``(u1, u2)``::

    r = sqrt(-2 log(1 - u1)),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)

and every call to :meth:`SplitMix64.normal` consumes whole pairs, so an
odd-length request discards the trailing ``z1``.  Bounded integers are
``next_u64() % bound``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """SplitMix64 stream; bit-exact with the recurrence in the module docs."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix(self.state)

    def u64(self, count: int) -> np.ndarray:
        """``count`` consecutive outputs as a uint64 array."""
        if count <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)
        self.state = (self.state + count * GOLDEN_GAMMA) & MASK64
        return _mix_array(states)

    def uniform(self, count: int) -> np.ndarray:
        return (self.u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, count: int | tuple[int, ...]) -> np.ndarray:
        shape = (count,) if isinstance(count, (int, np.integer)) else tuple(count)
        total = int(np.prod(shape, dtype=np.int64))
        pairs = (total + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:total].reshape(shape)

    def below(self, bound: int) -> int:
        """Integer in ``[0, bound)``."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return self.next_u64() % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        return self.sample_indices(n, n)

    def sample_indices(self, n: int, k: int) -> np.ndarray:
        """First ``k`` slots of a forward Fisher-Yates pass over ``range(n)``.

        Slot ``i`` swaps with ``i + below(n - i)``.
        """
        if not 0 <= k <= n:
            raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
        a = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            a[i], a[j] = a[j], a[i]
        return np.array(a[:k], dtype=np.int64)

    def spawn(self) -> "SplitMix64":
        """Child stream seeded from the next output."""
        return SplitMix64(self.next_u64())
