"""Property suites behind ``invfeat check``.

Each suite returns a :class:`CheckReport` made of rows; a row counts
passing and failing trials of one property and keeps the worst residual
seen (largest deviation for invariance-type checks, smallest gap for
separation-type checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DiagOffdiagPermPair,
    Permutation,
    SymMatrix,
    all_permutations,
    apply_gamma,
    apply_permutation,
    induced_pair,
    random_symmetric,
    same_orbit_bruteforce,
)
from .errors import SizeLimitError
from .invariants import (
    bad_set_witness,
    conjugation_subgroup,
    elementary_symmetric,
    f_star,
    feature_pack,
    find_fstar_necessity_witness,
    rel_gap,
    roots_from_elementary,
)
from .pointcloud import gram, random_orthogonal, same_orbit_pointcloud, tilde_feature_pack, transform
from .prng import SplitMix64
from .reduction import h_features, identifier, identifier_degenerate, lifted_rows, reconstruct_gram

MODES = ("invariance", "separation", "necessity", "badset", "roundtrip", "reconstruct",
         "equivariance", "hseparation", "gradcheck")
EXHAUSTIVE_MAX_N = 5


@dataclass
class CheckRow:
    name: str
    threshold: float
    kind: str = "max"  # "max": residual must stay <= threshold; "min": gap must exceed it
    passed: int = 0
    failed: int = 0
    worst: float = float("nan")

    def record(self, value: float):
        value = float(value)
        ok = value <= self.threshold if self.kind == "max" else value > self.threshold
        if ok:
            self.passed += 1
        else:
            self.failed += 1
        if math.isnan(self.worst):
            self.worst = value
        else:
            self.worst = max(self.worst, value) if self.kind == "max" else min(self.worst, value)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "failed": self.failed,
                "worst": self.worst, "threshold": self.threshold, "kind": self.kind}


@dataclass
class CheckReport:
    mode: str
    rows: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def row(self, name: str, threshold: float, kind: str = "max") -> CheckRow:
        r = CheckRow(name, threshold, kind)
        self.rows.append(r)
        return r

    @property
    def ok(self) -> bool:
        return all(r.failed == 0 and r.passed > 0 for r in self.rows)

    def to_json(self) -> dict:
        return {"mode": self.mode, "ok": self.ok, "rows": [r.to_json() for r in self.rows],
                "notes": self.notes}

    def to_csv(self) -> str:
        lines = ["mode,name,passed,failed,worst,threshold,kind"]
        for r in self.rows:
            lines.append(f"{self.mode},{r.name},{r.passed},{r.failed},{r.worst!r},{r.threshold!r},{r.kind}")
        return "\n".join(lines) + "\n"


def _random_perm(rng: SplitMix64, n: int) -> Permutation:
    return Permutation(tuple(int(v) for v in rng.permutation(n)))


def _pack_gap(a, b) -> float:
    va, vb = a.as_vector(), b.as_vector()
    return float(np.max(rel_gap(va, vb))) if va.size else 0.0


def check_invariance(sizes=(3, 4, 5, 16, 64), trials: int = 100, seed: int = 0, d: int = 3,
                     rtol: float = 1e-9, tilde_rtol: float = 1e-8, h_rtol: float = 1e-7) -> CheckReport:
    """Matrix packs over S_n (exhaustive for n <= 5), cloud features over random (U, pi)."""
    rng = SplitMix64(seed)
    rep = CheckReport("invariance")
    for n in sizes:
        row = rep.row(f"pack n={n}", rtol)
        X = random_symmetric(n, rng)
        base = feature_pack(X)
        perms = all_permutations(n) if n <= EXHAUSTIVE_MAX_N else (_random_perm(rng, n) for _ in range(trials))
        for p in perms:
            row.record(_pack_gap(base, feature_pack(apply_permutation(X, p))))
    for n in sizes:
        if n < d:
            continue
        tilde = rep.row(f"tilde d={d} n={n}", tilde_rtol)
        hrow = rep.row(f"h d={d} n={n}", h_rtol)
        V = rng.normal((d, n))
        ft, fh = tilde_feature_pack(V).as_vector(), h_features(V).as_vector()
        for _ in range(trials):
            W = transform(V, random_orthogonal(d, rng.next_u64()), rng.permutation(n))
            tilde.record(float(np.max(rel_gap(ft, tilde_feature_pack(W).as_vector()))))
            hrow.record(float(np.max(rel_gap(fh, h_features(W).as_vector()))))
    return rep


def _random_non_conjugation(rng: SplitMix64, n: int, conj: set) -> DiagOffdiagPermPair:
    m = n * (n - 1) // 2
    while True:
        g = DiagOffdiagPermPair(_random_perm(rng, n), _random_perm(rng, m))
        if g not in conj:
            return g


def check_separation(sizes=(3, 4, 5), trials: int = 500, seed: int = 0, gap: float = 1e-6) -> CheckReport:
    """Oracle-distinct Gaussian pairs must get packs further apart than ``gap``.

    Half of the pairs are independent draws; the other half are ``(X, gamma X)``
    with ``gamma`` outside the conjugation subgroup, so both sorted lists agree
    and only ``f_star`` can tell them apart.
    """
    rng = SplitMix64(seed)
    rep = CheckReport("separation")
    for n in sizes:
        conj = conjugation_subgroup(n)
        row = rep.row(f"pack n={n}", gap, "min")
        same = 0
        for t in range(trials):
            X = random_symmetric(n, rng)
            if t % 2 == 0 or n < 3:
                Y = random_symmetric(n, rng)
            else:
                Y = apply_gamma(X, _random_non_conjugation(rng, n, conj))
            if same_orbit_bruteforce(X, Y, 1e-12):
                same += 1
                continue
            a, b = feature_pack(X).as_vector(), feature_pack(Y).as_vector()
            row.record(float(np.max(np.abs(a - b))))
        rep.notes[f"same_orbit n={n}"] = same
    return rep


def check_necessity(n: int = 3, values=range(1, 10)) -> CheckReport:
    rep = CheckReport("necessity")
    row = rep.row(f"witness n={n}", 0.0, "min")
    w = find_fstar_necessity_witness(n, values)
    if w is None:
        row.record(0.0)
        return rep
    row.record(abs(f_star(w.X) - f_star(w.Y)))
    rep.notes = {"X": w.X.entries.tolist(), "Y": w.Y.entries.tolist(), "checked": w.checked,
                 "sigma": list(w.gamma.sigma.map), "tau": list(w.gamma.tau.map)}
    return rep


def check_badset(n: int = 3, trials: int = 100, seed: int = 0) -> CheckReport:
    rng = SplitMix64(seed)
    rep = CheckReport("badset")
    const = rep.row(f"constant n={n} has witness", 0.5, "min")
    w = bad_set_witness(SymMatrix(np.ones((n, n))))
    const.record(1.0 if w is not None else 0.0)
    gauss = rep.row(f"gaussian n={n} has none", 0.5)
    for _ in range(trials):
        X = random_symmetric(n, rng)
        tol = 1e-12 * (1.0 + abs(f_star(X)))
        gauss.record(0.0 if bad_set_witness(X, tol) is None else 1.0)
    return rep


def check_roundtrip(n: int = 5, trials: int = 100, seed: int = 0, rtol: float = 1e-8) -> CheckReport:
    """``roots_from_elementary(elementary_symmetric(v))`` against sorted ``v``."""
    rng = SplitMix64(seed)
    rep = CheckReport("roundtrip")
    diag = rep.row(f"diagonal n={n}", rtol)
    off = rep.row(f"off-diagonal n={n}", rtol)
    for _ in range(trials):
        X = random_symmetric(n, rng)
        for row, v in ((diag, X.diagonal()), (off, X.offdiagonal())):
            back = roots_from_elementary(elementary_symmetric(v))
            row.record(float(np.max(rel_gap(back, -np.sort(-v)))))
    return rep


def check_reconstruct(d: int = 3, n: int = 200, trials: int = 10, seed: int = 0,
                      rtol: float = 1e-8, construction: str = "poly") -> CheckReport:
    rng = SplitMix64(seed)
    rep = CheckReport("reconstruct")
    row = rep.row(f"{construction} d={d} n={n}", rtol)
    for _ in range(trials):
        V = rng.normal((d, n))
        C = identifier(V, construction).C
        R, A = lifted_rows(V, C)
        Xt = reconstruct_gram(R, A).entries[:n, :n]
        G = gram(V).entries
        row.record(float(np.linalg.norm(Xt - G) / np.linalg.norm(G)))
    return rep


def check_equivariance(d: int = 3, n: int = 50, trials: int = 100, seed: int = 0,
                       atol: float = 1e-8) -> CheckReport:
    rng = SplitMix64(seed)
    rep = CheckReport("equivariance")
    for construction in ("poly", "kmeans"):
        row = rep.row(f"{construction} d={d} n={n}", atol)
        skipped = 0
        for _ in range(trials):
            V = rng.normal((d, n))
            U = random_orthogonal(d, rng.next_u64())
            W = transform(V, U, rng.permutation(n))
            try:
                C = identifier(V, construction).C
                CW = identifier(W, construction).C
            except Exception:
                skipped += 1
                continue
            if identifier_degenerate(C):
                skipped += 1
                continue
            row.record(float(np.max(np.abs(CW - U @ C))))
        rep.notes[f"{construction} skipped"] = skipped
    return rep


def check_hseparation(d: int = 2, sizes=(4, 5, 6), trials: int = 500, m: int = 5, seed: int = 0,
                      gap: float = 1e-6) -> CheckReport:
    """Oracle-distinct cloud pairs must get h-features further apart than ``gap``.

    Half of the pairs are independent; the other half move one point of a
    transformed copy by a small amount, so only fine structure differs.
    """
    rng = SplitMix64(seed)
    rep = CheckReport("hseparation")
    for n in sizes:
        if n > 8:
            raise SizeLimitError("hseparation uses the brute-force orbit oracle (n <= 8)")
        row = rep.row(f"h d={d} n={n} m={m}", gap, "min")
        same = 0
        for t in range(trials):
            V = rng.normal((d, n))
            if t % 2 == 0:
                W = rng.normal((d, n))
            else:
                W = transform(V, random_orthogonal(d, rng.next_u64()), rng.permutation(n))
                k = int(rng.below(n))
                W[:, k] += 0.05 * rng.normal(d)
            if same_orbit_pointcloud(V, W, 1e-12):
                same += 1
                continue
            a = h_features(V, m=m, seed=seed).as_vector()
            b = h_features(W, m=m, seed=seed).as_vector()
            row.record(float(np.max(np.abs(a - b))))
        rep.notes[f"same_orbit n={n}"] = same
    return rep


def check_gradcheck(seed: int = 0, n_params: int = 200, rtol: float = 1e-5) -> CheckReport:
    """DS-CI, DS-CI with binary expansion, OI-DS and the pair head, default sizes."""
    from .nn.gradcheck import gradcheck
    from .nn.models import DSCI, OIDS, PairBatch, PairDistanceModel
    from .targets import synth_clouds, synth_symmatrices

    rep = CheckReport("gradcheck")
    mats = synth_symmatrices(16, 5, "gaussian", seed)
    t_mat = np.array([np.linalg.eigvalsh(X.entries)[-1] for X in mats])
    clouds = synth_clouds(8, 3, 20, "shape-mix", seed)
    t_cloud = np.linspace(0.0, 1.0, len(clouds))
    pairs = np.array([(i, j) for i in range(4) for j in range(4, 8)])
    t_pair = np.linspace(0.1, 0.9, len(pairs))
    cases = [
        ("ds-ci", DSCI(seed=seed), mats, t_mat),
        ("ds-ci+", DSCI(seed=seed, expansion={"theta": 1.0, "dim": 100}), mats, t_mat),
        ("oi-ds", OIDS(seed=seed), clouds, t_cloud),
        ("oi-ds+gw", PairDistanceModel(OIDS(seed=seed, out_dim=8), seed=seed), clouds, t_pair),
    ]
    for name, model, data, targets in cases:
        feats = model.featurize(data)
        batch = PairBatch(feats, pairs) if name == "oi-ds+gw" else feats
        model.fit_normalization(batch, targets)
        for loss in ("mse", "mae"):
            r = gradcheck(model, batch, targets, loss, n_params, seed=seed)
            row = rep.row(f"{name} {loss}", rtol)
            for v in r.per_block.values():
                row.record(v)
            rep.notes[f"{name} {loss} worst"] = [r.worst[0], r.worst[1], r.worst[2], r.worst[3]]
    return rep


SUITES = {
    "invariance": check_invariance,
    "separation": check_separation,
    "necessity": check_necessity,
    "badset": check_badset,
    "roundtrip": check_roundtrip,
    "reconstruct": check_reconstruct,
    "equivariance": check_equivariance,
    "hseparation": check_hseparation,
    "gradcheck": check_gradcheck,
}


def run_check(mode: str, **kwargs) -> CheckReport:
    try:
        fn = SUITES[mode]
    except KeyError:
        raise ValueError(f"unknown check mode {mode!r}; choose from {MODES}") from None
    return fn(**kwargs)
