import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import finite_difference_grads, gradient_errors, naive_lstm
from pushsub.cpm import (CLE, CTE, Adam, AdamConfig, CpmEstimator, LstmModel, MinMaxScaler, ModelFormatError,
                         SequenceDataset, TrainConfig, adam_step, init_model, load_model, lstm_forward,
                         make_windows, predict, save_model, train)
from pushsub.cpm.lstm import (backward, cross_entropy_loss, forward, init_params, loss_and_grads, mse_loss,
                              predict_raw)
from pushsub.cpm.model_io import MAGIC
from pushsub.cpm.scaler import scaler_apply, scaler_fit, scaler_invert
from pushsub.world import ContactType


def random_params(rng, D, H, K, n_layers=2, scale=0.5):
    p = init_params(D, H, K, rng, n_layers)
    return {k: v + scale * rng.normal(size=v.shape) for k, v in p.items()}


# ---------------------------------------------------------------- scaler

def test_scaler_examples():
    s = scaler_fit([2.0, 4.0, 6.0])
    assert scaler_apply(s, [4.0])[0] == 0.5
    assert scaler_apply(s, [2.0])[0] == 0.0 and scaler_apply(s, [6.0])[0] == 1.0
    x = np.random.default_rng(0).uniform(-3, 9, (100, 1))
    np.testing.assert_allclose(scaler_invert(s, scaler_apply(s, x)), x, rtol=0, atol=1e-12)


def test_scaler_degenerate_feature_flagged():
    s = MinMaxScaler.fit(np.array([[1.0, 0.31], [2.0, 0.31]]))
    np.testing.assert_array_equal(s.degenerate, [False, True])
    assert s.max[1] > s.min[1]
    assert np.all(np.isfinite(s.apply([[1.5, 0.31]])))


def test_scaler_rejects_empty():
    with pytest.raises(ValueError):
        MinMaxScaler.fit(np.zeros((0, 3)))


def test_scaler_refit_on_affine_features_gives_same_predictions():
    rng = np.random.default_rng(1)
    X = rng.uniform(0.0, 0.3, (40, 20, 12))
    model = init_model(CTE, rng)
    model.input_scaler = MinMaxScaler.fit(X)
    cle = init_model(CLE, np.random.default_rng(2))
    cle.input_scaler = model.input_scaler
    cle.output_scaler = MinMaxScaler.fit([-0.3, 0.3])
    a, b = 3.7, -1.25
    t_model = LstmModel(CTE, model.params, MinMaxScaler.fit(a * X + b))
    t_cle = LstmModel(CLE, cle.params, MinMaxScaler.fit(a * X + b), cle.output_scaler)
    np.testing.assert_allclose(model.input_scaler.apply(X), t_model.input_scaler.apply(a * X + b), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(predict_raw(model, X).argmax(1), predict_raw(t_model, a * X + b).argmax(1))
    np.testing.assert_allclose(predict_raw(cle, X), predict_raw(t_cle, a * X + b), rtol=0, atol=1e-12)


# ---------------------------------------------------------------- forward

@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_scalar_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, D=2, H=3, K=3)
    X = rng.normal(size=(4, 4, 2))
    out, _ = forward(p, X)
    for b in range(4):
        np.testing.assert_allclose(out[b], naive_lstm(p, X[b]), rtol=0, atol=1e-12)


def test_zero_parameters_give_head_bias():
    model = init_model(CTE, np.random.default_rng(0))
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    model.params["head.b"] = np.array([0.3, -1.0, 2.5])
    window = np.random.default_rng(1).uniform(0, 0.3, (20, 12))
    np.testing.assert_array_equal(lstm_forward(model, window), [0.3, -1.0, 2.5])


def test_saturated_forget_and_closed_input_ignore_window():
    rng = np.random.default_rng(3)
    p = random_params(rng, D=12, H=32, K=1)
    H = 32
    for li in range(2):
        p[f"L{li}.W"][:2 * H] = 0.0
        p[f"L{li}.U"][:2 * H] = 0.0
        p[f"L{li}.b"][:H] = -1e3  # input gate shut
        p[f"L{li}.b"][H:2 * H] = 1e3  # forget gate open
    model = LstmModel(CLE, p)
    a = lstm_forward(model, rng.uniform(0, 0.3, (20, 12)))
    b = lstm_forward(model, rng.uniform(0, 0.3, (20, 12)))
    assert a == b


def test_forward_shape_errors():
    model = init_model(CLE, np.random.default_rng(0))
    with pytest.raises(ValueError):
        lstm_forward(model, np.zeros((19, 12)))
    with pytest.raises(ValueError):
        lstm_forward(model, np.zeros((20, 11)))
    with pytest.raises(ValueError):
        forward(model.params, np.zeros((20, 12)))


# ---------------------------------------------------------------- losses

def test_loss_examples():
    loss, _ = cross_entropy_loss(np.zeros((4, 3)), [0, 1, 2, 1])
    assert loss == pytest.approx(math.log(3), abs=1e-15)
    assert mse_loss(np.array([[0.2], [0.7]]), [0.2, 0.7])[0] == 0.0


def test_cross_entropy_matches_log_sum_exp():
    rng = np.random.default_rng(0)
    z = rng.normal(0, 3, (50, 3))
    y = rng.integers(0, 3, 50)
    expected = np.mean([math.log(sum(math.exp(v) for v in row)) - row[c] for row, c in zip(z, y)])
    assert cross_entropy_loss(z, y)[0] == pytest.approx(expected, abs=1e-12)


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 3))
    y = rng.integers(0, 3, 6)
    _, g = cross_entropy_loss(z, y)
    p = np.exp(z) / np.exp(z).sum(1, keepdims=True)
    np.testing.assert_allclose(g, (p - np.eye(3)[y]) / 6, rtol=0, atol=1e-15)
    step = 1e-6
    for b in range(6):
        for k in range(3):
            zp, zm = z.copy(), z.copy()
            zp[b, k] += step
            zm[b, k] -= step
            fd = (cross_entropy_loss(zp, y)[0] - cross_entropy_loss(zm, y)[0]) / (2 * step)
            assert fd == pytest.approx(g[b, k], abs=1e-9)


# ---------------------------------------------------------------- gradients

def test_zero_model_with_matching_target_has_zero_head_bias_gradient():
    p = {k: np.zeros_like(v) for k, v in init_params(12, 32, 1, np.random.default_rng(0)).items()}
    p["head.b"] = np.array([0.4])
    X = np.random.default_rng(1).uniform(size=(3, 20, 12))
    loss, g = loss_and_grads(p, CLE, X, [0.4, 0.4, 0.4])
    assert loss == 0.0
    np.testing.assert_array_equal(g["head.b"], [0.0])


@pytest.mark.parametrize("kind", [CLE, CTE])
@pytest.mark.parametrize("T", [1, 4, 20])
@pytest.mark.parametrize("D", [2, 3])
@pytest.mark.parametrize("H", [2, 3, 5])
def test_gradients_match_finite_differences(H, D, T, kind):
    rng = np.random.default_rng(100 * H + 10 * D + T)
    K = 1 if kind == CLE else 3
    p = random_params(rng, D, H, K)
    X = rng.normal(size=(3, T, D))
    y = rng.normal(size=3) if kind == CLE else rng.integers(0, 3, 3)
    _, g = loss_and_grads(p, kind, X, y)
    norm_err, elem_err = gradient_errors(g, finite_difference_grads(p, kind, X, y))
    assert norm_err < 1e-5
    assert elem_err < 1e-5


@pytest.mark.parametrize("kind", [CLE, CTE])
def test_batch_gradient_is_mean_of_sample_gradients(kind):
    rng = np.random.default_rng(7)
    p = random_params(rng, 3, 4, 1 if kind == CLE else 3)
    X = rng.normal(size=(5, 6, 3))
    y = rng.normal(size=5) if kind == CLE else rng.integers(0, 3, 5)
    _, g = loss_and_grads(p, kind, X, y)
    per = [loss_and_grads(p, kind, X[i:i + 1], y[i:i + 1])[1] for i in range(5)]
    for k in g:
        np.testing.assert_allclose(g[k], np.mean([q[k] for q in per], axis=0), rtol=0, atol=1e-12)


def test_backward_reuses_forward_cache():
    rng = np.random.default_rng(8)
    p = random_params(rng, 2, 3, 1)
    X = rng.normal(size=(2, 5, 2))
    out, cache = forward(p, X)
    g1 = backward(p, cache, np.ones_like(out))
    g2 = backward(p, cache, np.ones_like(out))
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


# ---------------------------------------------------------------- adam

def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    new, _ = adam_step(p, {"w": np.ones(3)}, {}, 1, AdamConfig(lr=1e-3))
    np.testing.assert_allclose(new["w"] - p["w"], -1e-3, rtol=0, atol=1e-9)


def test_adam_zero_gradient_is_a_no_op():
    p = {"w": np.array([1.0, -2.0])}
    new, m = adam_step(p, {"w": np.zeros(2)}, {}, 1)
    np.testing.assert_array_equal(new["w"], p["w"])
    np.testing.assert_array_equal(m["w"][0], 0.0)


def test_adam_rejects_step_zero():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(1)}, {"w": np.zeros(1)}, {}, 0)


def test_adam_does_not_mutate_inputs():
    p, g = {"w": np.array([1.0])}, {"w": np.array([0.5])}
    adam_step(p, g, {}, 1)
    assert p["w"][0] == 1.0


def test_adam_descends_a_quadratic():
    A = np.array([[3.0, 0.5], [0.5, 1.0]])

    def f(w):
        return 0.5 * w @ A @ w

    opt = Adam(AdamConfig(lr=0.02))
    p = {"w": np.array([2.0, -1.5])}
    losses = [f(p["w"])]
    for _ in range(100):
        p = opt.step(p, {"w": A @ p["w"]})
        losses.append(f(p["w"]))
    assert np.all(np.diff(losses[5:]) < 0)
    assert losses[-1] < 0.1 * losses[0]


# ---------------------------------------------------------------- datasets / training

def test_make_windows_counts_and_alignment():
    n = 33
    norms = np.arange(n * 12, dtype=float).reshape(n, 12)
    l = np.linspace(-0.1, 0.1, n)
    ct = np.arange(n) % 3
    ds = make_windows([(7, norms, l, ct), (8, norms[:10], l[:10], ct[:10])])
    assert len(ds) == n - 19
    np.testing.assert_array_equal(ds.ticks, np.arange(19, n))
    np.testing.assert_array_equal(ds.X[0], norms[:20])
    np.testing.assert_array_equal(ds.X[-1], norms[-20:])
    np.testing.assert_array_equal(ds.l, l[19:])
    np.testing.assert_array_equal(ds.ctype, ct[19:])
    assert set(ds.trial_ids) == {7}


def test_make_windows_empty():
    ds = make_windows([(0, np.zeros((5, 12)), np.zeros(5), np.zeros(5))])
    assert len(ds) == 0 and ds.X.shape == (0, 20, 12)


def synthetic_cle(seed, n_trials, n=40):
    rng = np.random.default_rng(seed)
    w = np.random.default_rng(99).normal(size=12) / 12
    out = []
    for t in range(n_trials):
        X = rng.uniform(0, 0.31, (n, 12))
        out.append((seed * 1000 + t, X, X @ w + 0.05, np.ones(n, int)))
    return make_windows(out)


def synthetic_cte(seed, n_trials, n=30):
    rng = np.random.default_rng(seed)
    out = []
    for t in range(n_trials):
        c = np.full(n, t % 3)
        X = rng.uniform(0, 0.05, (n, 12)) + 0.1 * c[:, None]
        out.append((seed * 1000 + t, X, np.zeros(len(c)), c))
    return make_windows(out)


FAST = TrainConfig(epochs=50, batch_size=32, learning_rate=3e-3, hidden=16, seed=3)


def test_cle_learns_affine_target():
    tr, va = synthetic_cle(1, 20), synthetic_cle(2, 5)
    model, curve = train(tr, va, CLE, FAST)
    assert len(curve) <= 50
    assert math.sqrt(min(v for _, _, v in curve)) < 0.01
    assert model.metadata["best_val_loss"] == min(v for _, _, v in curve)


def test_cte_separates_linear_classes():
    tr, va = synthetic_cte(1, 10), synthetic_cte(2, 4)
    model, _ = train(tr, va, CTE, TrainConfig(epochs=20, batch_size=32, learning_rate=3e-3, hidden=8, seed=0))
    assert set(va.ctype) == {0, 1, 2}
    acc = np.mean(predict_raw(model, va.X).argmax(1) == va.ctype)
    assert acc == 1.0


def test_training_is_deterministic():
    tr, va = synthetic_cte(1, 3), synthetic_cte(2, 1)
    cfg = TrainConfig(epochs=3, batch_size=16, hidden=4, seed=5)
    m1, c1 = train(tr, va, CTE, cfg)
    m2, c2 = train(tr, va, CTE, cfg)
    assert c1 == c2
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])


def test_training_keeps_best_validation_checkpoint():
    tr, va = synthetic_cle(1, 4), synthetic_cle(2, 2)
    model, curve = train(tr, va, CLE, TrainConfig(epochs=8, batch_size=16, hidden=4, seed=0))
    X = model.input_scaler.apply(va.X)
    y = model.output_scaler.apply(va.l[:, None])[:, 0]
    best = min(v for _, _, v in curve)
    assert mse_loss(forward(model.params, X, keep_cache=False)[0], y)[0] == pytest.approx(best, rel=1e-12)


def test_training_split_errors():
    tr, va = synthetic_cte(1, 2), synthetic_cte(1, 1)
    with pytest.raises(ValueError, match="share trial ids"):
        train(tr, va, CTE, TrainConfig(epochs=1))
    empty = make_windows([])
    with pytest.raises(ValueError):
        train(tr, empty, CTE, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_cle_uses_contact_windows_only():
    ds = SequenceDataset(np.zeros((4, 20, 12)), np.array([np.nan, 0.1, np.nan, -0.1]), np.array([0, 1, 0, 2]),
                         np.zeros(4, int), np.arange(4))
    assert len(ds.for_kind(CLE)) == 2 and len(ds.for_kind(CTE)) == 4


# ---------------------------------------------------------------- estimator

def pair(seed=0, cle_bias=0.0, logits=(0.0, 1.0, 0.0)):
    rng = np.random.default_rng(seed)
    cle, cte = init_model(CLE, rng), init_model(CTE, rng)
    cle.input_scaler = cte.input_scaler = MinMaxScaler.fit(np.array([[0.0] * 12, [0.31] * 12]))
    cle.output_scaler = MinMaxScaler.fit([-0.3, 0.3])
    cle.params["head.b"] = np.array([cle_bias])
    cte.params["head.W"][:] = 0.0
    cte.params["head.b"] = np.array(logits)
    return cle, cte


def test_predict_clamps_location():
    cle, cte = pair(cle_bias=50.0)
    s = predict(cle, cte, np.full((20, 12), 0.2), 0.3, 0.32)
    assert s.contact_type == ContactType.POINT and s.l == 0.3
    cle, cte = pair(cle_bias=-50.0)
    assert predict(cle, cte, np.full((20, 12), 0.2), 0.3, 0.32).l == -0.3


def test_predict_no_contact_argmax():
    cle, cte = pair(logits=(2.0, 1.0, 0.0))
    assert predict(cle, cte, np.full((20, 12), 0.31), 0.3, 0.32).contact_type == ContactType.NO_CONTACT


def test_predict_is_pure():
    cle, cte = pair(3)
    w = np.random.default_rng(0).uniform(0, 0.31, (20, 12))
    a, b = predict(cle, cte, w, 0.3, 0.32), predict(cle, cte, w.copy(), 0.3, 0.32)
    assert a == b


def test_estimator_warm_up_pads_with_first_vector():
    cle, cte = pair(4)
    est = CpmEstimator(cle, cte, 0.3, 0.32)
    rng = np.random.default_rng(1)
    first, second = rng.uniform(0, 0.31, 12), rng.uniform(0, 0.31, 12)
    s1 = est.update(first)
    assert s1 == predict(cle, cte, np.tile(first, (20, 1)), 0.3, 0.32)
    s2 = est.update(second)
    assert s2 == predict(cle, cte, np.vstack([np.tile(first, (19, 1)), second]), 0.3, 0.32)
    for _ in range(30):
        est.update(rng.uniform(0, 0.31, 12))
    assert est.window().shape == (20, 12)
    est.reset()
    assert len(est.buf) == 0


def test_estimator_rejects_swapped_models():
    cle, cte = pair()
    with pytest.raises(ValueError):
        CpmEstimator(cte, cle, 0.3, 0.32)


# ---------------------------------------------------------------- persistence

def trained_like(kind, H=32, seed=0):
    rng = np.random.default_rng(seed)
    m = init_model(kind, rng, H=H)
    m.params = {k: v + rng.normal(0, 0.1, v.shape) for k, v in m.params.items()}
    m.input_scaler = MinMaxScaler.fit(rng.uniform(0, 0.31, (50, 12)) * np.r_[np.ones(11), 0.0])
    if kind == CLE:
        m.output_scaler = MinMaxScaler.fit(rng.uniform(-0.3, 0.3, 50))
    m.metadata = {"seed": seed, "best_epoch": 3}
    return m


@pytest.mark.parametrize("kind", [CLE, CTE])
def test_save_load_round_trip(tmp_path, kind):
    m = trained_like(kind)
    probe = np.random.default_rng(9).uniform(0, 0.31, (20, 12))
    save_model(m, tmp_path / "m.bin")
    m2 = load_model(tmp_path / "m.bin")
    assert m2.kind == kind and m2.seq_len == 20 and m2.metadata == m.metadata
    np.testing.assert_array_equal(m2.input_scaler.degenerate, m.input_scaler.degenerate)
    np.testing.assert_allclose(lstm_forward(m2, probe), lstm_forward(m, probe), rtol=0, atol=1e-15)
    for k in m.params:
        np.testing.assert_array_equal(m2.params[k], m.params[k])


def test_load_other_hidden_size(tmp_path):
    m = trained_like(CTE, H=7)
    save_model(m, tmp_path / "m.bin")
    assert load_model(tmp_path / "m.bin").hidden == 7


def _corrupt(tmp_path, edit):
    save_model(trained_like(CLE), tmp_path / "m.bin")
    data = bytearray((tmp_path / "m.bin").read_bytes())
    (tmp_path / "bad.bin").write_bytes(bytes(edit(data)))
    return tmp_path / "bad.bin"


def test_load_errors(tmp_path):
    def bad_magic(d):
        d[0:1] = b"X"
        return d

    def bad_version(d):
        d[8:12] = (2).to_bytes(4, "little")
        return d

    def flip_payload(d):
        d[-3] ^= 0xFF
        return d

    cases = {"magic": bad_magic, "version": bad_version, "truncated": lambda d: d[:-8],
             "checksum": flip_payload, "header": lambda d: d[:20]}
    for name, edit in cases.items():
        with pytest.raises(ModelFormatError, match=name if name != "header" else "truncated"):
            load_model(_corrupt(tmp_path, edit))
    assert MAGIC == b"PSHCPM\r\n"


def test_load_rejects_non_finite(tmp_path):
    m = trained_like(CLE)
    m.params["head.b"] = np.array([np.nan])
    save_model(m, tmp_path / "m.bin")
    with pytest.raises(ModelFormatError, match="non-finite"):
        load_model(tmp_path / "m.bin")


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_scaler_round_trip_property(xs):
    x = np.asarray(xs)
    s = MinMaxScaler.fit(x)
    back = s.invert(s.apply(x[:, None]))[:, 0]
    np.testing.assert_allclose(back, x, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max()))


def test_window_thinning_keeps_every_kth_window_per_trial():
    ds = synthetic_cte(1, 2, n=30)
    thin = ds.thinned(3)
    np.testing.assert_array_equal(thin.ticks, np.tile([19, 22, 25, 28], 2))
    assert ds.thinned(1) is ds
    with pytest.raises(ValueError):
        TrainConfig(window_stride=0)
