"""Invariant models built on DeepSets.

``DSCI``      symmetric matrices: DeepSets over the diagonal multiset and the
              off-diagonal multiset, an MLP on ``f_star``, and a combiner.
``OIDS``      point clouds: a DeepSet over the columns of ``C_V^T V`` and an
              MLP on the upper triangle of ``C_V^T C_V``, then a combiner.
``PairDistanceModel``
              an embedder followed by ``a * |W (z1 - z2)|^2 + b``.

Set elements are sorted canonically before the encoder so the pooled sum
is evaluated in the same order for every relabeling of the input; outputs
are then bitwise invariant on identical element multisets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import SymMatrix
from ..invariants import f_diag_sorted, f_offdiag_sorted, f_star
from ..prng import SplitMix64
from ..reduction import checked_identifier
from .layers import MLP, DeepSet, SetBatch, binary_expansion, glorot_uniform


@dataclass(frozen=True)
class BinaryExpansion:
    theta: float = 1.0
    dim: int = 100

    def __post_init__(self):
        if self.theta <= 0 or self.dim < 1:
            raise ValueError("binary expansion needs theta > 0 and dim >= 1")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        # (N, 1) -> (N, dim)
        return binary_expansion(x[:, 0], self.theta, self.dim)


def _safe_scale(sd: np.ndarray) -> np.ndarray:
    sd = np.asarray(sd, dtype=np.float64).copy()
    sd[~np.isfinite(sd) | (sd < 1e-12)] = 1.0
    return sd


# -- featurization ----------------------------------------------------------


@dataclass
class MatrixFeatures:
    diag: SetBatch
    off: SetBatch
    fstar: np.ndarray  # B x 1

    def __len__(self) -> int:
        return self.diag.size

    def take(self, idx) -> "MatrixFeatures":
        idx = np.asarray(idx, dtype=np.int64)
        return MatrixFeatures(self.diag.take(idx), self.off.take(idx), self.fstar[idx])


def matrix_features(matrices) -> MatrixFeatures:
    mats = [SymMatrix.coerce(X) for X in matrices]
    diag = SetBatch.from_sets([f_diag_sorted(X) for X in mats], 1)
    off = SetBatch.from_sets([f_offdiag_sorted(X) for X in mats], 1)
    fs = np.array([[f_star(X)] for X in mats], dtype=np.float64).reshape(-1, 1)
    return MatrixFeatures(diag, off, fs)


def _canonical_columns(M: np.ndarray) -> np.ndarray:
    # n x d rows in descending lexicographic order
    order = np.lexsort(M[::-1])[::-1]
    return M[:, order].T


@dataclass
class CloudFeatures:
    cols: SetBatch  # elements are columns of C_V^T V
    corner: np.ndarray  # B x d(d+1)/2

    def __len__(self) -> int:
        return self.cols.size

    def take(self, idx) -> "CloudFeatures":
        idx = np.asarray(idx, dtype=np.int64)
        return CloudFeatures(self.cols.take(idx), self.corner[idx])


def cloud_features(clouds, identifier: str = "poly") -> CloudFeatures:
    sets, corners = [], []
    for V in clouds:
        V = np.asarray(V, dtype=np.float64)
        C = checked_identifier(V, identifier)
        sets.append(_canonical_columns(C.T @ V))
        A = C.T @ C
        corners.append(A[np.triu_indices(A.shape[0])])
    d = sets[0].shape[1] if sets else 1
    return CloudFeatures(SetBatch.from_sets(sets, d), np.array(corners, dtype=np.float64))


# -- models -----------------------------------------------------------------


class _Model:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def predict(self, batch) -> np.ndarray:
        y, _ = self.forward(batch)
        return y[:, 0] if y.ndim == 2 and y.shape[1] == 1 else y

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))


class DSCI(_Model):
    kind = "ds-ci"

    def __init__(self, latent: int = 32, hidden: int = 32, set_out: int = 16,
                 fstar_hidden: int = 16, fstar_out: int = 8, combine_hidden: int = 64,
                 out_dim: int = 1, expansion: BinaryExpansion | dict | None = None,
                 seed: int = 0):
        super().__init__()
        if isinstance(expansion, dict):
            expansion = BinaryExpansion(**expansion)
        self.expansion = expansion
        self.hyper = dict(latent=latent, hidden=hidden, set_out=set_out, fstar_hidden=fstar_hidden,
                           fstar_out=fstar_out, combine_hidden=combine_hidden, out_dim=out_dim,
                           seed=seed)
        fin = 1 if expansion is None else expansion.dim
        self.ds1 = DeepSet(MLP([fin, hidden, latent], "ds1.enc"), MLP([latent, hidden, set_out], "ds1.dec"))
        self.ds2 = DeepSet(MLP([fin, hidden, latent], "ds2.enc"), MLP([latent, hidden, set_out], "ds2.dec"))
        self.mlp3 = MLP([fin, fstar_hidden, fstar_out], "mlp3")
        self.mlpc = MLP([2 * set_out + fstar_out, combine_hidden, out_dim], "mlpc")
        rng = SplitMix64(seed)
        for part in (self.ds1, self.ds2, self.mlp3, self.mlpc):
            part.init(rng, self.params)
        self.buffers = {
            "in_shift": np.zeros(3),
            "in_scale": np.ones(3),
            "out_shift": np.zeros(out_dim),
            "out_scale": np.ones(out_dim),
        }

    @property
    def out_dim(self) -> int:
        return self.mlpc.out_dim

    featurize = staticmethod(matrix_features)

    def _lift(self, x: np.ndarray, branch: int) -> np.ndarray:
        if self.expansion is not None:
            return self.expansion(x)
        return (x - self.buffers["in_shift"][branch]) / self.buffers["in_scale"][branch]

    def fit_normalization(self, batch: MatrixFeatures, targets=None):
        for b, vals in enumerate((batch.diag.values, batch.off.values, batch.fstar)):
            if len(vals):
                self.buffers["in_shift"][b] = float(np.mean(vals))
                self.buffers["in_scale"][b] = float(_safe_scale(np.std(vals)))
        if targets is not None:
            t = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
            self.buffers["out_shift"] = t.mean(axis=0)
            self.buffers["out_scale"] = _safe_scale(t.std(axis=0))

    def forward(self, batch: MatrixFeatures):
        p = self.params
        y1, c1 = self.ds1.forward(p, batch.diag.map_values(lambda v: self._lift(v, 0)))
        y2, c2 = self.ds2.forward(p, batch.off.map_values(lambda v: self._lift(v, 1)))
        y3, c3 = self.mlp3.forward(p, self._lift(batch.fstar, 2))
        h = np.concatenate([y1, y2, y3], axis=1)
        raw, cc = self.mlpc.forward(p, h)
        y = raw * self.buffers["out_scale"] + self.buffers["out_shift"]
        return y, (c1, c2, c3, cc, y1.shape[1], y2.shape[1])

    def backward(self, cache, gy: np.ndarray) -> dict:
        c1, c2, c3, cc, k1, k2 = cache
        grads: dict = {}
        p = self.params
        gh = self.mlpc.backward(p, cc, gy * self.buffers["out_scale"], grads)
        self.ds1.backward(p, c1, gh[:, :k1], grads)
        self.ds2.backward(p, c2, gh[:, k1 : k1 + k2], grads)
        self.mlp3.backward(p, c3, gh[:, k1 + k2 :], grads)
        return grads

    def config(self) -> dict:
        exp = None if self.expansion is None else {"theta": self.expansion.theta, "dim": self.expansion.dim}
        return {"arch": self.kind, **self.hyper, "expansion": exp}


class OIDS(_Model):
    kind = "oi-ds"

    def __init__(self, d: int = 3, latent: int = 32, hidden: int = 32, set_out: int = 16,
                 corner_hidden: int = 16, corner_out: int = 8, combine_hidden: int = 64,
                 out_dim: int = 1, identifier: str = "poly", seed: int = 0):
        super().__init__()
        self.identifier = identifier
        self.d = d
        self.hyper = dict(d=d, latent=latent, hidden=hidden, set_out=set_out, corner_hidden=corner_hidden,
                           corner_out=corner_out, combine_hidden=combine_hidden, out_dim=out_dim,
                           identifier=identifier, seed=seed)
        tri = d * (d + 1) // 2
        self.ds = DeepSet(MLP([d, hidden, latent], "ds.enc"), MLP([latent, hidden, set_out], "ds.dec"))
        self.mlp4 = MLP([tri, corner_hidden, corner_out], "mlp4")
        self.mlpo = MLP([set_out + corner_out, combine_hidden, out_dim], "mlpo")
        rng = SplitMix64(seed)
        for part in (self.ds, self.mlp4, self.mlpo):
            part.init(rng, self.params)
        self.buffers = {
            "col_shift": np.zeros(d),
            "col_scale": np.ones(d),
            "corner_shift": np.zeros(tri),
            "corner_scale": np.ones(tri),
            "out_shift": np.zeros(out_dim),
            "out_scale": np.ones(out_dim),
        }

    @property
    def out_dim(self) -> int:
        return self.mlpo.out_dim

    def featurize(self, clouds) -> CloudFeatures:
        return cloud_features(clouds, self.identifier)

    def fit_normalization(self, batch: CloudFeatures, targets=None):
        if len(batch.cols.values):
            self.buffers["col_shift"] = batch.cols.values.mean(axis=0)
            self.buffers["col_scale"] = _safe_scale(batch.cols.values.std(axis=0))
        self.buffers["corner_shift"] = batch.corner.mean(axis=0)
        self.buffers["corner_scale"] = _safe_scale(batch.corner.std(axis=0))
        if targets is not None:
            t = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
            self.buffers["out_shift"] = t.mean(axis=0)
            self.buffers["out_scale"] = _safe_scale(t.std(axis=0))

    def forward(self, batch: CloudFeatures):
        p, b = self.params, self.buffers
        cols = batch.cols.map_values(lambda v: (v - b["col_shift"]) / b["col_scale"])
        y1, c1 = self.ds.forward(p, cols)
        y2, c2 = self.mlp4.forward(p, (batch.corner - b["corner_shift"]) / b["corner_scale"])
        raw, co = self.mlpo.forward(p, np.concatenate([y1, y2], axis=1))
        return raw * b["out_scale"] + b["out_shift"], (c1, c2, co, y1.shape[1])

    def backward(self, cache, gy: np.ndarray) -> dict:
        c1, c2, co, k1 = cache
        grads: dict = {}
        p = self.params
        gh = self.mlpo.backward(p, co, gy * self.buffers["out_scale"], grads)
        self.ds.backward(p, c1, gh[:, :k1], grads)
        self.mlp4.backward(p, c2, gh[:, k1:], grads)
        return grads

    def config(self) -> dict:
        return {"arch": self.kind, **self.hyper}


@dataclass
class GWHeadParams:
    W: np.ndarray
    a: float
    b: float


def gw_predict(z1, z2, head: GWHeadParams) -> float:
    """``a * |W (z1 - z2)|^2 + b``."""
    z1 = np.asarray(z1, dtype=np.float64).ravel()
    z2 = np.asarray(z2, dtype=np.float64).ravel()
    W = np.asarray(head.W, dtype=np.float64)
    if W.shape != (z1.size, z1.size) or z2.size != z1.size:
        raise ValueError(f"dimension mismatch: W {W.shape}, z1 {z1.size}, z2 {z2.size}")
    u = W @ (z1 - z2)
    return float(head.a * np.dot(u, u) + head.b)


@dataclass
class PairBatch:
    items: object  # featurized clouds or matrices, indexed by the pairs
    pairs: np.ndarray  # P x 2

    def __len__(self) -> int:
        return len(self.pairs)

    def take(self, idx) -> "PairBatch":
        return PairBatch(self.items, self.pairs[np.asarray(idx, dtype=np.int64)])


class PairDistanceModel(_Model):
    """Shared embedder on both members of a pair, then the quadratic head."""

    kind = "pair-distance"

    def __init__(self, embedder: DSCI | OIDS, seed: int = 0):
        super().__init__()
        self.embedder = embedder
        t = embedder.out_dim
        self.params = embedder.params
        self.buffers = embedder.buffers
        rng = SplitMix64(seed ^ 0x5157)
        self.params["head.W"] = glorot_uniform(rng, t, t)
        self.params["head.a"] = np.ones(1)
        self.params["head.b"] = np.zeros(1)
        self.seed = seed

    @property
    def out_dim(self) -> int:
        return 1

    def head(self) -> GWHeadParams:
        p = self.params
        return GWHeadParams(p["head.W"].copy(), float(p["head.a"][0]), float(p["head.b"][0]))

    def featurize(self, items):
        return self.embedder.featurize(items)

    def fit_normalization(self, batch: PairBatch, targets=None):
        # embedder inputs only; the head owns the output scale through a and b
        self.embedder.fit_normalization(batch.items, None)
        if targets is not None:
            self.params["head.b"][:] = 0.0
            z = self.embedder.predict(batch.items).reshape(len(batch.items), -1)
            dz = z[batch.pairs[:, 0]] - z[batch.pairs[:, 1]]
            q = np.sum((dz @ self.params["head.W"].T) ** 2, axis=1)
            mq = float(np.mean(q))
            self.params["head.a"][:] = float(np.mean(targets)) / mq if mq > 0 else 1.0

    def forward(self, batch: PairBatch):
        p = self.params
        z, ce = self.embedder.forward(batch.items)
        i, j = batch.pairs[:, 0], batch.pairs[:, 1]
        dz = z[i] - z[j]
        u = dz @ p["head.W"].T
        q = np.sum(u * u, axis=1, keepdims=True)
        y = p["head.a"] * q + p["head.b"]
        return y, (ce, z.shape, i, j, dz, u, q)

    def backward(self, cache, gy: np.ndarray) -> dict:
        ce, zshape, i, j, dz, u, q = cache
        p = self.params
        g = gy.reshape(-1, 1)
        gq = g * p["head.a"]
        gu = 2.0 * u * gq
        gdz = gu @ p["head.W"]
        gz = np.zeros(zshape)
        np.add.at(gz, i, gdz)
        np.add.at(gz, j, -gdz)
        grads = self.embedder.backward(ce, gz)
        grads["head.W"] = gu.T @ dz
        grads["head.a"] = np.array([float(np.sum(g * q))])
        grads["head.b"] = np.array([float(np.sum(g))])
        return grads

    def config(self) -> dict:
        return {"arch": self.kind, "embedder": self.embedder.config(), "seed": self.seed}


def build_model(config: dict):
    config = dict(config)
    arch = config.pop("arch", None)
    if arch == "ds-ci":
        return DSCI(**config)
    if arch == "oi-ds":
        return OIDS(**config)
    if arch == "pair-distance":
        return PairDistanceModel(build_model(config["embedder"]), seed=int(config.get("seed", 0)))
    raise ValueError(f"unknown architecture {arch!r}")


def ds_ci_forward(X, model: DSCI) -> np.ndarray:
    return model.forward(matrix_features([X]))[0][0]


def oi_ds_forward(V, model: OIDS) -> np.ndarray:
    return model.forward(model.featurize([V]))[0][0]
