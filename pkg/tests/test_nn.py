import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plcml import nn
from plcml.nn import DenseLayer, LabeledDataset, MlpModel, TrainConfig


def test_identity_layer_passes_input_through():
    model = MlpModel([DenseLayer(np.eye(3), np.zeros(3), "identity")])
    x = np.array([[1.0, -2.0, 3.5]])
    assert np.array_equal(nn.predict(model, x), x)


def test_softmax_of_equal_logits_is_uniform():
    model = MlpModel([DenseLayer(np.eye(2), np.zeros(2), "softmax")])
    assert np.allclose(nn.predict(model, [[0.0, 0.0]]), [[0.5, 0.5]], atol=1e-15)


def test_two_layer_relu_matches_hand_arithmetic():
    w1 = np.array([[1.0, 2.0], [-1.0, 0.5], [0.5, -3.0]])
    b1 = np.array([0.1, 0.2, -0.3])
    w2 = np.array([[1.0, -1.0, 2.0]])
    b2 = np.array([0.5])
    model = MlpModel([DenseLayer(w1, b1, "relu"), DenseLayer(w2, b2, "identity")])
    x = (1.0, -1.0)
    # hidden pre-activations by hand: (1-2+0.1, -1-0.5+0.2, 0.5+3-0.3)
    h = [max(0.0, 1 * x[0] + 2 * x[1] + 0.1),
         max(0.0, -1 * x[0] + 0.5 * x[1] + 0.2),
         max(0.0, 0.5 * x[0] - 3 * x[1] - 0.3)]
    expected = 1 * h[0] - 1 * h[1] + 2 * h[2] + 0.5
    assert h == [0.0, 0.0, 3.2]
    assert nn.predict(model, [x])[0, 0] == pytest.approx(expected, abs=1e-14)


def test_forward_rejects_wrong_width():
    model = MlpModel.build([3, 2], ["identity"])
    with pytest.raises(nn.ShapeError):
        nn.forward(model, np.zeros((1, 4)))


def test_softmax_only_as_last_layer():
    with pytest.raises(ValueError):
        MlpModel.build([2, 3, 2], ["softmax", "identity"])


def test_mse_zero_at_exact_fit():
    p = np.random.default_rng(0).normal(size=(5, 3))
    assert nn.loss(p, p, "mse") == 0.0


def test_cross_entropy_of_half_half_is_ln2():
    assert nn.loss([[0.5, 0.5]], [[1.0, 0.0]], "cross_entropy") == pytest.approx(math.log(2))


def test_cross_entropy_rejects_soft_targets():
    with pytest.raises(nn.ContractError):
        nn.loss([[0.5, 0.5]], [[0.5, 0.5]], "cross_entropy")


def test_losses_match_scalar_loops():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(7, 4))
    t = rng.normal(size=(7, 4))
    total = 0.0
    for i in range(7):
        for j in range(4):
            total += (p[i, j] - t[i, j]) ** 2
    assert nn.loss(p, t, "mse") == pytest.approx(total / 7, rel=1e-14)

    probs = rng.dirichlet(np.ones(4), size=7)
    onehot = np.eye(4)[rng.integers(0, 4, size=7)]
    total = 0.0
    for i in range(7):
        for j in range(4):
            if onehot[i, j]:
                total -= math.log(probs[i, j])
    assert nn.loss(probs, onehot, "cross_entropy") == pytest.approx(total / 7, rel=1e-14)


def test_zero_gradient_at_exact_fit():
    model = MlpModel.build([3, 4, 2], ["tanh", "identity"], seed=3)
    x = np.random.default_rng(3).normal(size=(6, 3))
    acts = nn.forward(model, x)
    grads = nn.backward(model, acts, acts[-1], "mse")
    assert all(np.all(g == 0.0) for g in grads)


def test_linear_mse_gradient_closed_form():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(20, 3))
    y = rng.normal(size=(20, 1))
    w = rng.normal(size=(1, 3))
    model = MlpModel([DenseLayer(w, np.zeros(1), "identity")])
    grads = nn.backward(model, nn.forward(model, x), y, "mse")
    expected = 2.0 / 20 * x.T @ (x @ w.T - y)
    assert np.allclose(grads[0], expected.T, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("hidden", ["relu", "tanh", "sigmoid", "identity"])
@pytest.mark.parametrize("head,kind", [
    ("identity", "mse"), ("sigmoid", "mse"), ("tanh", "mse"),
    ("softmax", "mse"), ("softmax", "cross_entropy"), ("sigmoid", "cross_entropy"),
])
def test_grad_check_every_activation_loss_combination(hidden, head, kind):
    rng = np.random.default_rng(5)
    model = MlpModel.build([4, 6, 5, 3], [hidden, hidden, head], rng=rng)
    for layer in model.layers:
        layer.biases[:] = rng.normal(scale=0.3, size=layer.biases.shape)
    x = rng.normal(size=(5, 4))
    if kind == "cross_entropy":
        t = np.eye(3)[rng.integers(0, 3, size=5)]
    else:
        t = rng.normal(size=(5, 3))
    err = nn.grad_check(model, LabeledDataset(x, t), 1e-5, kind)
    assert err <= 1e-4


def test_grad_check_identity_single_layer_is_tight():
    model = MlpModel([DenseLayer(np.eye(2), np.zeros(2), "identity")])
    sample = LabeledDataset([[0.3, -0.7]], [[1.0, 2.0]])
    assert nn.grad_check(model, sample, 1e-5, "mse") <= 1e-8


def test_grad_check_rejects_large_epsilon():
    model = MlpModel.build([2, 1], ["identity"])
    with pytest.raises(ValueError):
        nn.grad_check(model, LabeledDataset([[1.0, 1.0]], [[0.0]]), 1e-2)


def _xor():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([[0], [1], [1], [0]], dtype=float)
    return LabeledDataset(x, y)


def test_xor_converges_with_adam():
    data = _xor()
    model = MlpModel.build([2, 8, 1], ["tanh", "identity"], seed=7)
    cfg = TrainConfig(optimizer="adam", learning_rate=0.02, batch_size=4, epochs=2000, seed=7)
    history = nn.train(model, data, cfg)
    assert len(history) == 2000
    assert nn.loss(nn.predict(model, data.inputs), data.targets) < 1e-2


def test_zero_learning_rate_freezes_parameters():
    data = _xor()
    model = MlpModel.build([2, 8, 1], ["tanh", "identity"], seed=2)
    before = [p.copy() for p in model.params()]
    for opt in ("sgd", "adam"):
        nn.train(model, data, TrainConfig(optimizer=opt, learning_rate=0.0, epochs=20, batch_size=2))
    assert all(np.array_equal(a, b) for a, b in zip(before, model.params()))


def test_training_is_bit_identical_under_seed():
    data = _xor()
    runs = []
    for _ in range(2):
        model = MlpModel.build([2, 8, 1], ["tanh", "identity"], seed=11)
        cfg = TrainConfig(learning_rate=0.01, batch_size=3, epochs=50, seed=11, dropout_rate=0.2)
        runs.append((nn.train(model, data, cfg), model.params()))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][1], runs[1][1]))


def test_zero_dropout_equals_no_dropout():
    data = _xor()
    a = MlpModel.build([2, 8, 1], ["tanh", "identity"], seed=5)
    b = a.copy()
    ha = nn.train(a, data, TrainConfig(epochs=30, batch_size=2, seed=9, dropout_rate=0.0))
    hb = nn.train(b, data, TrainConfig(epochs=30, batch_size=2, seed=9))
    assert ha == hb
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


def test_dropout_mask_is_inverted():
    mask = nn.dropout_mask(np.random.default_rng(0), (2000, 10), 0.5)
    assert set(np.unique(mask)) <= {0.0, 2.0}
    assert mask.mean() == pytest.approx(1.0, abs=0.03)


def test_sgd_step_reduces_fixed_quadratic():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(30, 4))
    y = rng.normal(size=(30, 1))
    model = MlpModel([DenseLayer(rng.normal(size=(1, 4)), np.zeros(1), "identity")])
    before = nn.loss(nn.predict(model, x), y)
    grads = nn.backward(model, nn.forward(model, x), y)
    nn.Sgd(1e-4).step(model.params(), grads)
    assert nn.loss(nn.predict(model, x), y) < before


def test_nan_loss_aborts_training():
    model = MlpModel.build([2, 1], ["identity"])
    data = LabeledDataset([[np.inf, 0.0]], [[0.0]])
    with pytest.raises(nn.TrainingDiverged):
        nn.train(model, data, TrainConfig(epochs=1))


def test_model_roundtrip_is_exact(tmp_path):
    model = MlpModel.build([3, 5, 2], ["relu", "softmax"], seed=21)
    nn.save_model(model, tmp_path / "m.json")
    back = nn.load_model(tmp_path / "m.json")
    assert all(np.array_equal(a, b) for a, b in zip(model.params(), back.params()))
    assert [l.activation for l in back.layers] == ["relu", "softmax"]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-30, 30)))
def test_softmax_rows_sum_to_one(logits):
    model = MlpModel([DenseLayer(np.eye(5), np.zeros(5), "softmax")])
    out = nn.predict(model, logits)
    assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all((out > 0) & (out < 1))
