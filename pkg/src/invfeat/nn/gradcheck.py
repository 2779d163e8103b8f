"""Analytic gradients against central finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..prng import SplitMix64
from .train import loss_and_grad

DEFAULT_STEP = 1e-5
# central differences carry roundoff ~ 1e-16 |L| / step; gradients smaller than
# FLOOR_RTOL * max(1, |L|) are compared on that absolute scale instead
FLOOR_RTOL = 1e-5
# a relu (or |r| in the mae loss) switching inside [-step, step] shows up as
# disagreeing one-sided slopes; such entries are redrawn rather than compared
KINK_RTOL = 1e-3
MAX_REDRAWS = 20


def relative_error(analytic: float, numeric: float, floor: float = FLOOR_RTOL) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradcheckReport:
    max_rel_error: float
    per_block: dict  # key -> worst relative error
    checked: int
    worst: tuple  # (key, flat index, analytic, numeric)
    skipped: int = 0

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error <= tol


def gradcheck(model, batch, targets, loss: str = "mse", n_params: int = 200,
              step: float = DEFAULT_STEP, seed: int = 0) -> GradcheckReport:
    """Check ``n_params`` entries; every parameter block gets at least one."""
    targets = np.asarray(targets, dtype=np.float64)

    def objective() -> float:
        return loss_and_grad(model.forward(batch)[0], targets, loss)[0]

    pred, cache = model.forward(batch)
    value, g = loss_and_grad(pred, targets, loss)
    floor = FLOOR_RTOL * max(1.0, abs(value))
    grads = model.backward(cache, g)
    keys = sorted(model.params)
    rng = SplitMix64(seed)
    picks = [(k, int(rng.below(model.params[k].size))) for k in keys]
    sizes = np.array([model.params[k].size for k in keys], dtype=np.float64)
    cum = np.cumsum(sizes) / sizes.sum()
    while len(picks) < n_params:
        k = keys[min(int(np.searchsorted(cum, rng.uniform(1)[0], side="right")), len(keys) - 1)]
        picks.append((k, int(rng.below(model.params[k].size))))
    per_block: dict = {}
    worst = (None, -1, 0.0, 0.0)
    max_err = 0.0
    skipped = 0

    def probe(k, idx):
        flat = model.params[k].reshape(-1)
        old = flat[idx]
        flat[idx] = old + step
        up = objective()
        flat[idx] = old - step
        down = objective()
        flat[idx] = old
        central = (up - down) / (2.0 * step)
        jump = abs((up - value) - (value - down)) / step
        return central, jump <= KINK_RTOL * max(abs(central), floor)

    for k, idx in picks:
        numeric, smooth = probe(k, idx)
        for _ in range(MAX_REDRAWS):
            if smooth:
                break
            skipped += 1
            idx = int(rng.below(model.params[k].size))
            numeric, smooth = probe(k, idx)
        analytic = float(np.asarray(grads.get(k, np.zeros_like(model.params[k]))).reshape(-1)[idx])
        err = relative_error(analytic, numeric, floor)
        per_block[k] = max(per_block.get(k, 0.0), err)
        if err > max_err or worst[0] is None:
            max_err = max(max_err, err)
            worst = (k, idx, analytic, numeric)
    return GradcheckReport(max_err, per_block, len(picks), worst, skipped)
