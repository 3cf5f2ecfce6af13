import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mimodet.errors import FormatError, ParameterError, StateError
from mimodet.neuralnet import (AdamState, BatchNorm, Dense, NetworkModel, TrainingConfig,
                               adam_step, backward, build_dnn, build_mlp, cross_entropy_loss,
                               forward, load_model, predict, save_model, train)
from mimodet.modem import BPSK, QPSK

from gradcheck import param_arrays as _param_arrays, relative_errors, small_net as _small_net


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check(seed):
    model, x, t = _small_net(seed)
    errs = relative_errors(model, x, t)
    assert {name for _, name in errs} == {"weights", "biases", "gamma", "beta"}
    assert max(errs.values()) <= 1e-5


def test_output_layer_gradient_shortcut():
    model, x, t = _small_net(11)
    out, cache = forward(model, x, "train")
    x_in, z = cache.layer_caches[-1]
    # numerical dL/dz at the output pre-activation
    h = 1e-6
    num = np.zeros_like(z)
    from mimodet.neuralnet import sigmoid
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        num[idx] = (cross_entropy_loss(sigmoid(zp), t) - cross_entropy_loss(sigmoid(zm), t)) / (2 * h)
    np.testing.assert_allclose(num, (out - t) / t.size, rtol=1e-6, atol=1e-10)


def test_zero_gradient_at_saturated_target():
    t = np.array([[1.0, 0.0], [0.0, 1.0]])
    w = np.array([[1.0, -1.0], [-1.0, 1.0]]) * 100
    model = NetworkModel([Dense(w, np.zeros(2), "sigmoid")])
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    _, cache = forward(model, x, "train")
    grads = backward(model, cache, t)
    assert all(np.linalg.norm(g) <= 1e-9 for g in grads[0].values())


def test_zero_weights_give_half():
    model = build_dnn(4, 4, BPSK)
    for layer in model.layers:
        for p in layer.params().values():
            if isinstance(layer, Dense):
                p[:] = 0
    out, _ = forward(model, np.random.default_rng(0).standard_normal((3, 72)), "infer")
    np.testing.assert_array_equal(out, 0.5)


def test_hand_computed_dense():
    layer = Dense(np.array([[2.0]]), np.array([1.0]), "relu")
    out, _ = layer.forward(np.array([[3.0]]))
    assert out[0, 0] == 7.0


def test_infer_mode_row_independent():
    model = build_dnn(2, 2, QPSK, seed=1)
    rng = np.random.default_rng(1)
    row = rng.standard_normal(20)
    a = forward(model, np.vstack([row, rng.standard_normal((5, 20))]), "infer")[0][0]
    b = forward(model, np.vstack([rng.standard_normal((3, 20)), row]), "infer")[0][-1]
    np.testing.assert_array_equal(a, b)


def test_forward_errors():
    model = build_dnn(2, 2, QPSK)
    with pytest.raises(ParameterError):
        forward(model, np.zeros((4, 21)))
    with pytest.raises(ParameterError):
        forward(model, np.zeros((1, 20)), "train")
    with pytest.raises(StateError):
        backward(model, None, np.zeros((1, 4)))


def test_batchnorm_train_statistics():
    bn = BatchNorm(6)
    x = np.random.default_rng(2).standard_normal((64, 6)) * 3 + 1
    _, (x_norm, _) = bn.forward(x, train=True)
    assert np.all(np.abs(x_norm.mean(axis=0)) <= 1e-6)
    var = x.var(axis=0)
    np.testing.assert_allclose(x_norm.var(axis=0), var / (var + bn.epsilon), atol=1e-12)
    assert np.all(np.abs(x_norm.var(axis=0) - 1) <= 1e-4)


def test_loss_closed_forms():
    t = np.random.default_rng(3).integers(0, 2, (5, 4)).astype(float)
    assert cross_entropy_loss(t, t) <= 1e-11
    assert cross_entropy_loss(np.full((5, 4), 0.5), t) == pytest.approx(math.log(2), abs=1e-15)
    assert cross_entropy_loss(np.array([[0.25]]), np.array([[1.0]])) == pytest.approx(
        -math.log(0.25), abs=1e-15)
    with pytest.raises(ParameterError):
        cross_entropy_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.data())
def test_loss_non_negative(preds, data):
    t = data.draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=len(preds), max_size=len(preds)))
    assert cross_entropy_loss(np.array([preds]), np.array([t])) >= 0


def test_sigmoid_outputs_open_interval():
    model = build_dnn(4, 4, BPSK, seed=2)
    out = predict(model, np.random.default_rng(4).standard_normal((200, 72)) * 50)
    assert np.all((out > 0) & (out < 1))
    assert np.all(np.isfinite(out))


def test_adam_first_step_closed_form():
    g = np.array([0.3, -2.0, 1e-3])
    p = {"w": np.zeros(3)}
    state = AdamState(lr=0.01)
    adam_step(state, [p], [{"w": g}])
    np.testing.assert_allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert state.t == 1


def test_adam_zero_gradient_fixed_point():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState()
    for _ in range(5):
        adam_step(state, [p], [{"w": np.zeros(2)}])
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    with pytest.raises(ParameterError):
        adam_step(state, [p], [{"w": np.zeros(3)}])


def _toy_data(seed, n, width=12, k=3):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, width))
    t = (x[:, :k] > 0).astype(float)
    return x, t


def test_train_contract_and_determinism():
    data, val = _toy_data(0, 300), _toy_data(1, 100)
    cfg = TrainingConfig(batch_size=32, max_epochs=6, lr=1e-2, early_stop_patience=3, seed=5)
    runs = []
    for _ in range(2):
        model = build_mlp(12, [16, 8], 3, seed=1)
        best, hist = train(model, data, val, cfg)
        runs.append((best, hist))
    (b1, h1), (b2, h2) = runs
    assert h1.train_loss == h2.train_loss and h1.val_loss == h2.val_loss
    assert len(h1.val_loss) <= cfg.max_epochs
    from mimodet.neuralnet import evaluate_loss
    assert evaluate_loss(b1, val) == min(h1.val_loss)
    for (_, _, p), (_, _, q) in zip(_param_arrays(b1), _param_arrays(b2)):
        assert np.array_equal(p, q)


def test_train_rejects_bad_data():
    model = build_mlp(12, [4], 3)
    with pytest.raises(ParameterError):
        train(model, (np.zeros((0, 12)), np.zeros((0, 3))), _toy_data(0, 5))
    with pytest.raises(ParameterError):
        train(model, _toy_data(0, 10, width=5), _toy_data(0, 5))


@pytest.mark.parametrize("n_t,n_r,scheme,width", [(4, 4, BPSK, 72), (2, 2, QPSK, 20)])
def test_build_dnn_shapes(n_t, n_r, scheme, width):
    model = build_dnn(n_t, n_r, scheme)
    assert model.input_width == width and model.output_width == 4
    kinds = [(type(l).__name__, l.out_width) for l in model.layers]
    assert kinds == [("Dense", 512), ("BatchNorm", 512), ("Dense", 256), ("Dense", 128),
                     ("Dense", 64), ("Dense", 4)]
    for _, _, p in _param_arrays(model):
        assert np.all(np.isfinite(p))
    first = model.layers[0].weights
    assert np.abs(first).max() <= math.sqrt(6 / width)


def test_dnn_parameter_count():
    # 4x4 BPSK: trainable + running statistics
    assert build_dnn(4, 4, BPSK).n_parameters() == 212164
    with pytest.raises(ParameterError):
        build_dnn(0, 4, BPSK)


def test_save_load_roundtrip(tmp_path):
    model = build_dnn(2, 2, QPSK, seed=9)
    x = np.random.default_rng(5).standard_normal((16, 20))
    for _ in range(3):
        forward(model, x, "train")  # move running statistics off their defaults
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    for a, b in zip(model.layers, back.layers):
        for k in a.params():
            assert np.array_equal(a.params()[k], b.params()[k])
        if isinstance(a, BatchNorm):
            assert np.array_equal(a.running_mean, b.running_mean)
            assert np.array_equal(a.running_var, b.running_var)
    np.testing.assert_array_equal(predict(model, x), predict(back, x))
    assert (back.n_t, back.n_r, back.scheme) == (2, 2, "qpsk")


def test_load_rejects_truncated_and_versions(tmp_path):
    path = tmp_path / "m.json"
    save_model(build_mlp(3, [2], 1), path)
    text = path.read_text()
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(FormatError):
        load_model(tmp_path / "t.json")
    (tmp_path / "v.json").write_text(text.replace('"format_version": 1', '"format_version": 99'))
    with pytest.raises(FormatError):
        load_model(tmp_path / "v.json")
    (tmp_path / "w.json").write_text(text.replace('"in": 3', '"in": 4'))
    with pytest.raises(FormatError):
        load_model(tmp_path / "w.json")


def test_network_model_validation():
    with pytest.raises(ParameterError):
        NetworkModel([Dense(np.zeros((2, 3)), np.zeros(2), "relu")])
    with pytest.raises(ParameterError):
        NetworkModel([Dense(np.zeros((2, 3)), np.zeros(2), "relu"),
                      Dense(np.zeros((1, 3)), np.zeros(1), "sigmoid")])
