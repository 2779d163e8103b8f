"""Wall-time ladder for ``h_features``."""

from __future__ import annotations

import time

import numpy as np

from .prng import SplitMix64
from .reduction import h_features


def bench_h_features(sizes=(1000, 2000, 4000, 8000), d: int = 3, repeats: int = 5, seed: int = 0,
                     identifier: str = "poly", m: int | None = None) -> list[dict]:
    """Best-of-``repeats`` seconds per size on seeded Gaussian clouds."""
    rng = SplitMix64(seed)
    rows = []
    for n in sizes:
        V = rng.normal((d, int(n)))
        h_features(V, identifier, m, seed)  # warm up caches and lazy imports
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            h_features(V, identifier, m, seed)
            best = min(best, time.perf_counter() - t0)
        rows.append({"n": int(n), "d": d, "seconds": best})
    return rows


def loglog_slope(rows) -> float:
    n = np.log([r["n"] for r in rows])
    t = np.log([r["seconds"] for r in rows])
    return float(np.polyfit(n, t, 1)[0])
