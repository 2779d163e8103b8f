"""Dense layers, MLPs and DeepSets with hand-written reverse mode.

Modules here are stateless descriptions.  Parameters live in a flat
``dict[str, ndarray]`` owned by the top-level model; every module reads its
own prefixed keys and writes gradients under the same keys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..prng import SplitMix64

ACTIVATIONS = ("relu", "sigmoid", "identity")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def _act_grad(kind: str, z: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return g * (z > 0)
    if kind == "sigmoid":
        return g * a * (1.0 - a)
    return g


def glorot_uniform(rng: SplitMix64, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (2.0 * rng.uniform(fan_out * fan_in) - 1.0).reshape(fan_out, fan_in) * limit


class MLP:
    """``sizes[0] -> ... -> sizes[-1]``; hidden activation everywhere but the last layer."""

    def __init__(self, sizes, name: str, hidden: str = "relu", final: str = "identity"):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"MLP needs at least two positive sizes, got {sizes}")
        for a in (hidden, final):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.name = name
        self.activations = [hidden] * (len(sizes) - 2) + [final]

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def keys(self, k: int) -> tuple[str, str]:
        return f"{self.name}.W{k}", f"{self.name}.b{k}"

    def init(self, rng: SplitMix64, params: dict):
        for k, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            wk, bk = self.keys(k)
            params[wk] = glorot_uniform(rng, fo, fi)
            params[bk] = np.zeros(fo)

    def forward(self, params: dict, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"{self.name}: expected input (*, {self.in_dim}), got {x.shape}")
        cache = []
        for k, act in enumerate(self.activations):
            wk, bk = self.keys(k)
            z = x @ params[wk].T + params[bk]
            a = _act(act, z)
            cache.append((x, z, a))
            x = a
        return x, cache

    def backward(self, params: dict, cache, gy: np.ndarray, grads: dict) -> np.ndarray:
        g = gy
        for k in range(len(self.activations) - 1, -1, -1):
            x, z, a = cache[k]
            wk, bk = self.keys(k)
            gz = _act_grad(self.activations[k], z, a, g)
            grads[wk] = grads.get(wk, 0.0) + gz.T @ x
            grads[bk] = grads.get(bk, 0.0) + gz.sum(axis=0)
            g = gz @ params[wk]
        return g

    def config(self) -> dict:
        return {"sizes": self.sizes, "hidden": self.activations[0] if len(self.activations) > 1 else "relu",
                "final": self.activations[-1]}


def mlp_forward(params: dict, mlp: MLP, x) -> np.ndarray:
    """Single-vector convenience wrapper."""
    x = np.asarray(x, dtype=np.float64)
    y, _ = mlp.forward(params, x.reshape(1, -1))
    return y[0]


@dataclass
class SetBatch:
    """A batch of ``size`` multisets stored back to back.

    ``values[k]`` belongs to set ``segment[k]``; segments are contiguous and
    non-decreasing.
    """

    values: np.ndarray  # N x F
    segment: np.ndarray  # N
    size: int

    @classmethod
    def from_sets(cls, sets, feature_dim: int | None = None) -> "SetBatch":
        arrays = [np.asarray(s, dtype=np.float64) for s in sets]
        arrays = [a.reshape(len(a), 1) if a.ndim == 1 else a for a in arrays]
        if feature_dim is None:
            non_empty = [a for a in arrays if a.size]
            feature_dim = non_empty[0].shape[1] if non_empty else 1
        arrays = [a if a.size else np.zeros((0, feature_dim)) for a in arrays]
        counts = np.array([len(a) for a in arrays], dtype=np.int64)
        values = np.concatenate(arrays, axis=0) if arrays else np.zeros((0, feature_dim))
        segment = np.repeat(np.arange(len(arrays)), counts)
        return cls(values, segment, len(arrays))

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.segment, minlength=self.size)

    def take(self, idx) -> "SetBatch":
        idx = np.asarray(idx, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(self.counts)])
        parts = [self.values[starts[i] : starts[i + 1]] for i in idx]
        return SetBatch.from_sets(parts, self.values.shape[1])

    def map_values(self, fn) -> "SetBatch":
        return SetBatch(fn(self.values), self.segment, self.size)


def segment_sum(values: np.ndarray, segment: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, values.shape[1]))
    if len(values):
        np.add.at(out, segment, values)
    return out


class DeepSet:
    """``decoder(sum_i encoder(x_i))`` over each set of a :class:`SetBatch`."""

    def __init__(self, encoder: MLP, decoder: MLP):
        if encoder.out_dim != decoder.in_dim:
            raise ValueError("encoder output must match decoder input")
        self.encoder = encoder
        self.decoder = decoder

    @property
    def out_dim(self) -> int:
        return self.decoder.out_dim

    def init(self, rng: SplitMix64, params: dict):
        self.encoder.init(rng, params)
        self.decoder.init(rng, params)

    def forward(self, params: dict, sets: SetBatch):
        if len(sets.values):
            h, c_enc = self.encoder.forward(params, sets.values)
        else:
            h, c_enc = np.zeros((0, self.encoder.out_dim)), None
        pooled = segment_sum(h, sets.segment, sets.size)
        y, c_dec = self.decoder.forward(params, pooled)
        return y, (c_enc, c_dec, sets.segment)

    def backward(self, params: dict, cache, gy: np.ndarray, grads: dict):
        c_enc, c_dec, segment = cache
        gpooled = self.decoder.backward(params, c_dec, gy, grads)
        if c_enc is not None:
            self.encoder.backward(params, c_enc, gpooled[segment], grads)
        else:
            # empty sets still own encoder parameters
            for k in range(len(self.encoder.activations)):
                for key in self.encoder.keys(k):
                    grads.setdefault(key, np.zeros_like(params[key]))

    def config(self) -> dict:
        return {"encoder": self.encoder.config(), "decoder": self.decoder.config()}


def binary_expansion(x, theta: float = 1.0, dim: int = 100) -> np.ndarray:
    """Sigmoid grid ``sigmoid((x - c_k) / theta)``, ``c_k = theta (k - (dim - 1) / 2)``.

    Scalars map to a length-``dim`` vector; arrays gain a trailing axis.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if dim < 1:
        raise ValueError(f"dim must be at least 1, got {dim}")
    centers = theta * (np.arange(dim) - (dim - 1) / 2.0)
    x = np.asarray(x, dtype=np.float64)
    return sigmoid((x[..., None] - centers) / theta)
