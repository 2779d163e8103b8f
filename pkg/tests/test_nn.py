import json

import numpy as np
import pytest

from invfeat.core import all_permutations, apply_permutation
from invfeat.errors import NumericalError
from invfeat.nn import (
    DSCI,
    MLP,
    OIDS,
    Adam,
    DeepSet,
    GWHeadParams,
    PairBatch,
    PairDistanceModel,
    SetBatch,
    TrainConfig,
    binary_expansion,
    build_model,
    ds_ci_forward,
    gradcheck,
    gw_predict,
    load_checkpoint,
    loss_and_grad,
    matrix_features,
    mlp_forward,
    oi_ds_forward,
    save_checkpoint,
    segment_sum,
    split_indices,
    train,
)
from invfeat.nn.checkpoint import blob_path
from invfeat.pointcloud import random_orthogonal, transform
from invfeat.prng import SplitMix64
from invfeat.reduction import identifiers_poly
from invfeat.targets import synth_clouds, synth_symmatrices


class _Wrap:
    """Minimal model interface around a bare MLP or DeepSet."""

    def __init__(self, module, seed=0):
        self.module = module
        self.params = {}
        self.buffers = {}
        module.init(SplitMix64(seed), self.params)

    def forward(self, batch):
        return self.module.forward(self.params, batch)

    def backward(self, cache, g):
        grads = {}
        self.module.backward(self.params, cache, g, grads)
        return grads

    def fit_normalization(self, batch, targets=None):
        pass


def naive_mlp(params, mlp, x):
    a = list(x)
    for k, act in enumerate(mlp.activations):
        W, b = params[f"{mlp.name}.W{k}"], params[f"{mlp.name}.b{k}"]
        z = [sum(W[o][i] * a[i] for i in range(len(a))) + b[o] for o in range(len(b))]
        if act == "relu":
            z = [max(v, 0.0) for v in z]
        elif act == "sigmoid":
            z = [1 / (1 + np.exp(-v)) for v in z]
        a = z
    return np.array(a)


def set_all(model, value):
    for v in model.params.values():
        v[...] = value


# -- layers ----------------------------------------------------------------


def test_mlp_identity_and_relu():
    m = MLP([2, 2], "id")
    params = {"id.W0": np.eye(2), "id.b0": np.zeros(2)}
    np.testing.assert_array_equal(mlp_forward(params, m, [3.0, -1.0]), [3.0, -1.0])
    r = MLP([1, 1], "r", final="relu")
    assert mlp_forward({"r.W0": np.array([[-1.0]]), "r.b0": np.zeros(1)}, r, [2.0]).tolist() == [0.0]


def test_mlp_matches_naive_loop(rng):
    m = MLP([4, 7, 5, 3], "net", hidden="sigmoid")
    params = {}
    m.init(rng, params)
    x = rng.normal(4)
    assert np.max(np.abs(mlp_forward(params, m, x) - naive_mlp(params, m, x))) <= 1e-12


def test_mlp_shape_errors():
    m = MLP([3, 2], "m")
    params = {}
    m.init(SplitMix64(0), params)
    with pytest.raises(ValueError):
        m.forward(params, np.zeros((1, 4)))
    with pytest.raises(ValueError):
        MLP([3], "bad")
    with pytest.raises(ValueError):
        DeepSet(MLP([1, 4], "e"), MLP([3, 1], "d"))


def test_glorot_bounds():
    m = MLP([30, 20], "g")
    params = {}
    m.init(SplitMix64(1), params)
    assert np.max(np.abs(params["g.W0"])) <= np.sqrt(6 / 50)


def test_segment_sum_and_setbatch():
    sb = SetBatch.from_sets([[1.0, 2.0], [], [5.0]], 1)
    assert sb.counts.tolist() == [2, 0, 1]
    np.testing.assert_array_equal(segment_sum(sb.values, sb.segment, sb.size)[:, 0], [3, 0, 5])
    t = sb.take([2, 0])
    assert t.values[:, 0].tolist() == [5.0, 1.0, 2.0] and t.segment.tolist() == [0, 1, 1]


def test_binary_expansion():
    v = binary_expansion(0.0, 1.0, 3)
    np.testing.assert_allclose(v, [1 / (1 + np.exp(-1)), 0.5, 1 / (1 + np.exp(1))], rtol=1e-15)
    xs = np.linspace(-5, 5, 101)
    e = binary_expansion(xs, 0.7, 9)
    assert np.all(np.diff(e, axis=0) >= 0)
    big = binary_expansion(np.array([-1e3, 1e3]), 1.0, 100)
    assert np.all(np.minimum(big, 1 - big) <= 1e-6)
    assert np.all(big[1] > 0.5) and np.all(big[0] < 0.5)
    with pytest.raises(ValueError):
        binary_expansion(1.0, 0.0, 3)
    with pytest.raises(ValueError):
        binary_expansion(1.0, 1.0, 0)


# -- heads and models -------------------------------------------------------


def test_gw_predict():
    h = GWHeadParams(np.eye(2), 1.0, 0.0)
    assert gw_predict([3.0, 4.0], [0.0, 0.0], h) == 25.0
    h2 = GWHeadParams(np.array([[1.0, 2.0], [0.5, -1.0]]), 0.3, 1.25)
    z1, z2 = np.array([0.2, -1.0]), np.array([1.5, 0.7])
    assert gw_predict(z1, z1, h2) == 1.25
    assert gw_predict(z1, z2, h2) == gw_predict(z2, z1, h2)
    with pytest.raises(ValueError):
        gw_predict([1.0], [1.0, 2.0], h)


def test_ds_ci_invariance_all_perms(rng):
    model = DSCI(seed=7)
    X = synth_symmatrices(1, 4, "gaussian", 3)[0]
    base = ds_ci_forward(X, model)
    for p in all_permutations(4):
        y = ds_ci_forward(apply_permutation(X, p), model)
        assert np.all(np.abs(y - base) <= 1e-9 * (1 + np.abs(base)))


def test_ds_ci_plus_invariance():
    model = DSCI(seed=1, expansion={"theta": 0.5, "dim": 20})
    X = synth_symmatrices(1, 4, "uniform", 3)[0]
    base = ds_ci_forward(X, model)
    for p in all_permutations(4):
        # f* is summed in a permuted order, so agreement is to rounding only
        assert np.all(np.abs(ds_ci_forward(apply_permutation(X, p), model) - base) <= 1e-12 * (1 + np.abs(base)))


def test_ds_ci_zero_weights_give_bias():
    model = DSCI(seed=0)
    set_all(model, 0.0)
    model.params["mlpc.b1"][:] = 0.7
    assert ds_ci_forward(np.eye(3), model).tolist() == [0.7]


def test_ds_ci_hand_trace():
    # all widths 1, unit weights, zero biases: every relu sees a non-negative input
    model = DSCI(latent=1, hidden=1, set_out=1, fstar_hidden=1, fstar_out=1, combine_hidden=1, seed=0)
    set_all(model, 0.0)
    for k, v in model.params.items():
        if ".W" in k:
            v[...] = 1.0
    X = np.array([[1.0, 2.0, 0.5], [2.0, 3.0, 1.0], [0.5, 1.0, 0.25]])
    fstar = sum(X[i, i] * X[i, j] for i in range(3) for j in range(3) if i != j)
    expected = (1 + 3 + 0.25) + (2 + 0.5 + 1) + fstar
    assert ds_ci_forward(X, model)[0] == pytest.approx(expected, rel=1e-14)


def test_oi_ds_invariance(rng):
    model = OIDS(seed=2)
    V = synth_clouds(1, 3, 20, "shape-mix", 4)[0]
    base = oi_ds_forward(V, model)
    for _ in range(50):
        W = transform(V, random_orthogonal(3, rng.next_u64()), rng.permutation(20))
        y = oi_ds_forward(W, model)
        assert np.all(np.abs(y - base) <= 1e-6 * (1 + np.abs(base)))


def test_oi_ds_zero_weights_give_bias():
    model = OIDS(seed=0)
    set_all(model, 0.0)
    model.params["mlpo.b1"][:] = -1.5
    assert oi_ds_forward(synth_clouds(1, 3, 10, "shape-mix", 0)[0], model).tolist() == [-1.5]


def test_oi_ds_hand_trace():
    model = OIDS(latent=1, hidden=1, set_out=1, corner_hidden=1, corner_out=1, combine_hidden=1, seed=0)
    set_all(model, 0.0)
    for k, v in model.params.items():
        if ".W" in k:
            v[...] = 1.0
    V = np.array([[1.0, 2.0, 0.5, 0.1], [0.3, 0.2, 1.0, 0.4], [0.2, 0.9, 0.1, 1.0]])
    C = identifiers_poly(V).C
    A = C.T @ C
    expected = float(np.sum(C.T @ V)) + float(np.sum(A[np.triu_indices(3)]))
    assert oi_ds_forward(V, model)[0] == pytest.approx(expected, rel=1e-13)


def test_oi_ds_degenerate_input():
    from invfeat.errors import DegenerateInputError

    with pytest.raises(DegenerateInputError):
        oi_ds_forward(np.zeros((3, 6)), OIDS())


# -- gradients --------------------------------------------------------------


def test_zero_loss_gives_zero_gradients():
    model = DSCI(seed=4)
    mats = synth_symmatrices(6, 4, "gaussian", 0)
    batch = matrix_features(mats)
    pred, cache = model.forward(batch)
    value, g = loss_and_grad(pred, pred[:, 0].copy(), "mse")
    assert value == 0.0
    grads = model.backward(cache, g)
    assert set(grads) == set(model.params)
    assert max(float(np.max(np.abs(v))) for v in grads.values()) <= 1e-12


def test_mae_gradient_is_sign_over_batch():
    lin = _Wrap(MLP([2, 1], "lin"))
    x = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
    pred, cache = lin.forward(x)
    targets = pred[:, 0] + np.array([0.5, -0.25, 1.0])
    _, g = loss_and_grad(pred, targets, "mae")
    grads = lin.backward(cache, g)
    sign = np.sign(pred[:, 0] - targets)
    np.testing.assert_allclose(grads["lin.b0"], [sign.sum() / 3])
    np.testing.assert_allclose(grads["lin.W0"][0], sign @ x / 3)


def test_gradcheck_mlp_and_deepset(rng):
    mlp = _Wrap(MLP([3, 6, 4, 2], "m", hidden="sigmoid"), seed=1)
    x = rng.normal((5, 3))
    r = gradcheck(mlp, x, rng.normal((5, 2)), "mse", 60, seed=1)
    assert r.max_rel_error <= 1e-5
    ds = _Wrap(DeepSet(MLP([2, 5, 4], "e"), MLP([4, 5, 3], "d")), seed=2)
    sb = SetBatch.from_sets([rng.normal((k + 1, 2)) for k in range(4)], 2)
    r = gradcheck(ds, sb, rng.normal((4, 3)), "mse", 80, seed=2)
    assert r.max_rel_error <= 1e-5 and len(r.per_block) == 8


def test_gradcheck_detects_wrong_gradient():
    mats = synth_symmatrices(8, 4, "gaussian", 3)
    model = DSCI(seed=0)
    b = model.featurize(mats)
    model.fit_normalization(b, np.arange(8.0))
    honest = model.backward

    def skewed(cache, g):
        grads = honest(cache, g)
        grads["mlpc.W1"] = grads["mlpc.W1"] * 1.001
        return grads

    model.backward = skewed
    r = gradcheck(model, b, np.arange(8.0), "mse", 50, seed=0)
    assert r.per_block["mlpc.W1"] > 1e-4 and not r.passed(1e-5)


@pytest.mark.parametrize("loss", ["mse", "mae"])
def test_gradcheck_models(loss):
    mats = synth_symmatrices(10, 5, "gaussian", 1)
    t = np.array([np.linalg.eigvalsh(X.entries)[-1] for X in mats])
    for model in (DSCI(seed=1), DSCI(seed=2, expansion={"theta": 1.0, "dim": 100})):
        b = model.featurize(mats)
        model.fit_normalization(b, t)
        r = gradcheck(model, b, t, loss, 200, seed=3)
        assert r.max_rel_error <= 1e-5, r.worst
        assert set(r.per_block) == set(model.params)
    clouds = synth_clouds(6, 3, 15, "shape-mix", 2)
    model = OIDS(seed=3)
    b = model.featurize(clouds)
    model.fit_normalization(b, np.arange(6.0))
    r = gradcheck(model, b, np.arange(6.0), loss, 200, seed=4)
    assert r.max_rel_error <= 1e-5, r.worst
    pair = PairDistanceModel(OIDS(seed=5, out_dim=6), seed=5)
    pb = PairBatch(pair.featurize(clouds), np.array([[0, 3], [1, 4], [2, 5], [0, 5]]))
    targets = np.array([0.1, 0.4, 0.2, 0.3])
    pair.fit_normalization(pb, targets)
    r = gradcheck(pair, pb, targets, loss, 200, seed=5)
    assert r.max_rel_error <= 1e-5, r.worst
    assert {"head.W", "head.a", "head.b"} <= set(r.per_block)


# -- optimizer and training -------------------------------------------------


def test_adam_single_step_by_hand():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p, lr=0.1)
    g = np.array([0.5, -4.0])
    opt.step({"w": g})
    m = 0.1 * g / (1 - 0.9)
    v = 0.001 * g * g / (1 - 0.999)
    np.testing.assert_allclose(p["w"], np.array([1.0, -2.0]) - 0.1 * m / (np.sqrt(v) + 1e-8), rtol=1e-15)
    assert opt.state.m["w"].shape == p["w"].shape


def test_split_indices():
    tr, va, te = split_indices(500, (0.8, 0.1, 0.1), 3)
    assert (len(tr), len(va), len(te)) == (400, 50, 50)
    assert len(set(tr) | set(va) | set(te)) == 500
    a = split_indices(500, (0.8, 0.1, 0.1), 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, (tr, va, te)))
    with pytest.raises(ValueError):
        TrainConfig(split=(0.5, 0.5, 0.5))


def test_train_constant_target():
    mats = synth_symmatrices(40, 4, "gaussian", 2)
    model = DSCI(seed=0)
    res = train(model, model.featurize(mats), np.full(40, 2.5),
                TrainConfig(epochs=500, loss="mse", seed=1))
    assert res.trace[-1]["train"] <= 1e-6


class _LinearOnFstar(_Wrap):
    def __init__(self):
        super().__init__(MLP([1, 1], "lin"))

    def fit_normalization(self, batch, targets=None):
        pass


def test_train_linear_target_on_fstar():
    mats = synth_symmatrices(60, 4, "gaussian", 5)
    fs = matrix_features(mats).fstar
    x = (fs - fs.mean()) / fs.std()
    t = 1.7 * x[:, 0] - 0.3

    class Rows:
        def __init__(self, a):
            self.a = a

        def __len__(self):
            return len(self.a)

        def take(self, idx):
            return self.a[idx]

    model = _LinearOnFstar()
    model.forward = lambda b: model.module.forward(model.params, b)
    res = train(model, Rows(x), t, TrainConfig(epochs=2000, loss="mse", seed=0, split=(1.0, 0.0, 0.0)))
    # least-squares oracle
    A = np.hstack([x, np.ones_like(x)])
    coef = np.linalg.lstsq(A, t, rcond=None)[0]
    assert res.best_train <= 1e-8
    assert model.params["lin.W0"][0, 0] == pytest.approx(coef[0], abs=1e-4)


def test_training_is_deterministic():
    mats = synth_symmatrices(30, 4, "uniform", 1)
    t = np.array([np.linalg.eigvalsh(X.entries)[-1] for X in mats])
    runs = []
    for _ in range(2):
        model = DSCI(seed=3)
        res = train(model, model.featurize(mats), t, TrainConfig(epochs=20, seed=9, batch_size=8))
        runs.append([(r["train"], r["val"]) for r in res.trace])
    assert runs[0] == runs[1]


def test_best_validation_checkpoint_restored():
    mats = synth_symmatrices(30, 4, "uniform", 1)
    t = np.array([np.linalg.eigvalsh(X.entries)[-1] for X in mats])
    model = DSCI(seed=3)
    b = model.featurize(mats)
    res = train(model, b, t, TrainConfig(epochs=40, seed=2))
    assert res.best_val == min(r["val"] for r in res.trace)
    val = b.take(res.val_idx)
    pred = model.predict(val)
    assert np.mean(np.abs(pred - t[res.val_idx])) == pytest.approx(res.best_val, rel=1e-12)


def test_nan_loss_aborts_with_guidance():
    mats = synth_symmatrices(10, 3, "gaussian", 0)
    model = DSCI(seed=0)
    with pytest.raises(NumericalError, match="learning rate"):
        train(model, model.featurize(mats), np.ones(10), TrainConfig(epochs=5, lr=1e300))


# -- checkpoints -------------------------------------------------------------


@pytest.mark.parametrize("kind", ["ds-ci", "ds-ci+", "pair"])
def test_checkpoint_round_trip(tmp_path, kind):
    if kind == "pair":
        model = PairDistanceModel(OIDS(seed=2, out_dim=4), seed=2)
        clouds = synth_clouds(4, 3, 10, "shape-mix", 0)
        batch = PairBatch(model.featurize(clouds), np.array([[0, 2], [1, 3]]))
        model.fit_normalization(batch, np.array([0.5, 1.0]))
    else:
        model = DSCI(seed=1, expansion={"theta": 1.0, "dim": 10} if kind == "ds-ci+" else None)
        mats = synth_symmatrices(5, 4, "gaussian", 0)
        batch = model.featurize(mats)
        model.fit_normalization(batch, np.arange(5.0))
    path = tmp_path / "ck.json"
    save_checkpoint(path, model, {"note": 1})
    loaded, extra = load_checkpoint(path)
    assert extra == {"note": 1}
    assert np.array_equal(loaded.predict(batch), model.predict(batch))
    manifest = json.loads(path.read_text())
    total = sum(int(np.prod(e["shape"])) for e in manifest["arrays"])
    assert blob_path(path).stat().st_size == 8 * total == manifest["blob_bytes"]
    # documented byte layout: little-endian float64, entries at their offsets
    raw = np.frombuffer(blob_path(path).read_bytes(), dtype="<f8")
    first = manifest["arrays"][0]
    np.testing.assert_array_equal(raw[: int(np.prod(first["shape"]))],
                                  np.ravel(model.params[first["name"]]))


def test_build_model_rejects_unknown():
    with pytest.raises(ValueError):
        build_model({"arch": "nope"})
