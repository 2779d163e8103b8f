"""Full-batch or minibatch training with a best-validation checkpoint."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ..errors import NumericalError
from ..prng import SplitMix64
from .optim import Adam

LOSSES = ("mae", "mse")


def loss_and_grad(pred: np.ndarray, targets: np.ndarray, kind: str = "mae"):
    """Mean loss over all entries and its gradient with respect to ``pred``."""
    t = np.asarray(targets, dtype=np.float64)
    p = pred.reshape(t.shape)
    r = p - t
    size = max(r.size, 1)
    if kind == "mae":
        value, g = float(np.mean(np.abs(r))), np.sign(r) / size
    elif kind == "mse":
        value, g = float(np.mean(r * r)), 2.0 * r / size
    else:
        raise ValueError(f"unknown loss {kind!r}; choose from {LOSSES}")
    return value, g.reshape(pred.shape)


def loss_value(pred, targets, kind: str = "mae") -> float:
    return loss_and_grad(pred, targets, kind)[0]


def spearman(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2:
        return float("nan")
    return float(spearmanr(a, b).statistic)


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 0.01
    loss: str = "mae"
    seed: int = 0
    batch_size: int | None = None  # None means full batch
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    normalize: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {LOSSES}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.split = tuple(float(s) for s in self.split)
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split must be three non-negative fractions summing to 1, got {self.split}")


def split_indices(n: int, split=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffled train/validation/test index arrays; sizes by rounding down, rest to train."""
    if n < 1:
        raise ValueError("cannot split an empty dataset")
    order = SplitMix64(seed).permutation(n)
    n_val = int(np.floor(split[1] * n))
    n_test = int(np.floor(split[2] * n))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError("split leaves no training examples")
    return (np.sort(order[:n_train]), np.sort(order[n_train : n_train + n_val]),
            np.sort(order[n_train + n_val :]))


@dataclass
class TrainResult:
    model: object
    trace: list = field(default_factory=list)  # dicts: epoch, train, val
    best_epoch: int = 0
    best_val: float = float("inf")
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None

    @property
    def best_train(self) -> float:
        return self.trace[self.best_epoch - 1]["train"] if self.trace else float("nan")


def evaluate(model, batch, targets, kind: str = "mae") -> float:
    return loss_value(model.forward(batch)[0], targets, kind)


def train(model, batch, targets, config: TrainConfig | None = None, indices=None) -> TrainResult:
    """Train ``model`` on ``batch`` (anything with ``take`` and ``len``).

    ``indices`` optionally fixes the (train, val, test) split; otherwise it is
    drawn from ``config.seed``.  The model is left holding the parameters of
    the epoch with the lowest validation loss (training loss when there is no
    validation set).
    """
    cfg = config or TrainConfig()
    targets = np.asarray(targets, dtype=np.float64)
    if len(batch) == 0 or len(targets) != len(batch):
        raise ValueError(f"need one target per example, got {len(targets)} for {len(batch)}")
    if indices is None:
        indices = split_indices(len(batch), cfg.split, cfg.seed)
    tr, va, te = (np.asarray(i, dtype=np.int64) for i in indices)
    b_tr, t_tr = batch.take(tr), targets[tr]
    b_va, t_va = (batch.take(va), targets[va]) if len(va) else (None, None)
    if cfg.normalize:
        model.fit_normalization(b_tr, t_tr)
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = SplitMix64(cfg.seed ^ 0x7F4A7C15)
    result = TrainResult(model, train_idx=tr, val_idx=va, test_idx=te)
    # overflow shows up as a non-finite loss, reported below with guidance
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(model, cfg, opt, rng, b_tr, t_tr, b_va, t_va, tr, result)
    return result


def _run_epochs(model, cfg, opt, rng, b_tr, t_tr, b_va, t_va, tr, result):
    best = None
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_size is None or cfg.batch_size >= len(tr):
            chunks = [None]
        else:
            perm = rng.permutation(len(tr))
            chunks = [perm[k : k + cfg.batch_size] for k in range(0, len(tr), cfg.batch_size)]
        for chunk in chunks:
            b, t = (b_tr, t_tr) if chunk is None else (b_tr.take(chunk), t_tr[chunk])
            pred, cache = model.forward(b)
            value, g = loss_and_grad(pred, t, cfg.loss)
            if not np.isfinite(value):
                raise NumericalError(
                    f"training loss is {value} at epoch {epoch}; lower the learning rate "
                    f"(currently {cfg.lr}) or check the inputs for extreme values"
                )
            opt.step(model.backward(cache, g))
        train_loss = evaluate(model, b_tr, t_tr, cfg.loss)
        val_loss = evaluate(model, b_va, t_va, cfg.loss) if b_va is not None else train_loss
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericalError(
                f"loss is not finite after epoch {epoch}; lower the learning rate (currently {cfg.lr})"
            )
        result.trace.append({"epoch": epoch, "train": train_loss, "val": val_loss})
        if val_loss < result.best_val:
            result.best_val = val_loss
            result.best_epoch = epoch
            best = {k: v.copy() for k, v in model.params.items()}
    if best is not None:
        for k, v in best.items():
            model.params[k][...] = v
