import numpy as np
import pytest

from gabigan.datasets import make_synthetic_dataset
from gabigan.tinynet import (
    BuildError,
    ConvBlock,
    DenseBlock,
    Network,
    TrainConfig,
    accuracy_and_loss,
    grad_check,
    make_spec,
    train_with_early_stop,
)
from gabigan.tinynet.layers import BatchNorm, Conv2D, Dropout, MaxPool2, softmax


def naive_conv_same(x, w, b):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, o, h, wd))
    for i in range(n):
        for f in range(o):
            for r in range(h):
                for s in range(wd):
                    out[i, f, r, s] = np.sum(xp[i, :, r:r + k, s:s + k] * w[f]) + b[f]
    return out


@pytest.mark.parametrize("k", [3, 5])
def test_conv_matches_loop_oracle(k):
    rng = np.random.default_rng(k)
    layer = Conv2D(2, 3, k, rng)
    layer.params["b"] = rng.normal(size=3)
    x = rng.normal(size=(2, 2, 6, 5))
    np.testing.assert_allclose(layer.forward(x, False),
                               naive_conv_same(x, layer.params["W"], layer.params["b"]),
                               atol=1e-12)


def test_conv_rejects_even_kernel():
    with pytest.raises(ValueError):
        Conv2D(1, 1, 4, np.random.default_rng(0))


def test_maxpool_forward_and_routing():
    x = np.arange(25, dtype=float).reshape(1, 1, 5, 5)
    pool = MaxPool2()
    out = pool.forward(x, False)
    np.testing.assert_array_equal(out[0, 0], [[6, 8], [16, 18]])
    dx = pool.backward(np.ones_like(out))
    assert dx.sum() == 4
    assert dx[0, 0, 1, 1] == 1 and dx[0, 0, 4, 4] == 0


def test_batchnorm_normalises_in_training_and_uses_running_stats_after():
    rng = np.random.default_rng(0)
    bn = BatchNorm(3, spatial=False)
    x = rng.normal(5.0, 3.0, size=(200, 3))
    y = bn.forward(x, True)
    np.testing.assert_allclose(y.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(y.std(axis=0), 1, atol=1e-3)
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0))
    y_eval = bn.forward(x, False)
    expected = (x - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
    np.testing.assert_allclose(y_eval, expected)


def test_dropout_is_inverted_and_identity_at_inference():
    d = Dropout(0.5)
    x = np.ones((400, 50))
    y = d.forward(x, True, np.random.default_rng(0))
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert y.mean() == pytest.approx(1.0, abs=0.02)
    np.testing.assert_array_equal(d.forward(x, False), x)
    with pytest.raises(ValueError):
        d.forward(x, True)


def test_softmax_rows_sum_to_one_even_for_large_logits():
    p = softmax(np.array([[1000.0, 0.0], [-5.0, 5.0]]))
    np.testing.assert_allclose(p.sum(axis=1), 1)
    assert np.isfinite(p).all()


def test_make_spec_rejects_inputs_smaller_than_kernel():
    with pytest.raises(BuildError, match="smaller than kernel 5"):
        make_spec([ConvBlock(4, 5)], [DenseBlock(4)], (1, 4, 4), 2)
    with pytest.raises(BuildError, match="conv layer 2"):
        make_spec([ConvBlock(4, 3, max_pool=True), ConvBlock(4, 3)], [DenseBlock(4)], 4, 2)


def test_pooling_halves_spatial_dims_and_drops_odd_edges():
    spec = make_spec([ConvBlock(2, 3, max_pool=True), ConvBlock(3, 3, max_pool=True)],
                     [DenseBlock(3)], (1, 7, 6), 2)
    net = Network(spec, np.random.default_rng(0))
    flat_in = [layer for layer in net.layers if hasattr(layer, "params") and "W" in layer.params][2]
    # 7x6 -> 3x3 -> 1x1 with 3 channels
    assert flat_in.params["W"].shape == (3, 3)
    assert net.forward(np.zeros((2, 1, 7, 6))).shape == (2, 2)


def test_describe_lists_layers():
    spec = make_spec([ConvBlock(16, 3, batch_norm=True, max_pool=True)],
                     [DenseBlock(32, dropout=True)], 8, 3)
    assert spec.describe() == ["conv 16@3+bn+pool", "flatten", "dense 32+dropout",
                               "dense 3+softmax"]


def test_forward_checks_input_shape():
    net = Network(make_spec([], [DenseBlock(3)], (1, 4, 4), 2), np.random.default_rng(0))
    with pytest.raises(ValueError, match="does not match"):
        net.forward(np.zeros((1, 1, 5, 5)))


def test_loss_rejects_out_of_range_labels():
    net = Network(make_spec([], [DenseBlock(3)], (1, 2, 2), 2), np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.loss_and_gradients(np.zeros((1, 1, 2, 2)), [2])


@pytest.mark.parametrize("conv, dense", [
    ([ConvBlock(2, 3, "relu", max_pool=True)], [DenseBlock(4, "leaky_relu")]),
    ([ConvBlock(2, 5, "tanh", batch_norm=True)], [DenseBlock(3, "sigmoid", dropout=True)]),
    ([], [DenseBlock(5, "tanh", batch_norm=True), DenseBlock(3, "relu")]),
])
def test_gradients_match_finite_differences(conv, dense):
    net = Network(make_spec(conv, dense, (1, 5, 5), 3), np.random.default_rng(7))
    has_bn = any(b.batch_norm for b in [*conv, *dense])
    assert grad_check(net, seed=3) < (1e-3 if has_bn else 1e-4)


def test_grad_check_detects_a_wrong_gradient():
    net = Network(make_spec([], [DenseBlock(3, "tanh")], (1, 2, 2), 2), np.random.default_rng(0))
    assert grad_check(net, gradient_hook=lambda gs: [2 * g for g in gs]) > 0.1


def test_sgd_step_lowers_loss_on_its_batch():
    rng = np.random.default_rng(0)
    net = Network(make_spec([ConvBlock(3, 3, "tanh")], [DenseBlock(8, "tanh")], 6, 2), rng)
    x, y = rng.normal(size=(16, 1, 6, 6)), rng.integers(0, 2, 16)
    before, grads = net.loss_and_gradients(x, y)
    net.sgd_step(grads, 1e-2)
    after, _ = net.loss_and_gradients(x, y)
    assert after < before


def _blobs():
    return make_synthetic_dataset("blobs", 200, 16, seed=7)


def test_training_separable_blobs_reaches_high_accuracy():
    ds = _blobs()
    net = Network(make_spec([], [DenseBlock(16, "relu")], ds.input_shape, 2),
                  np.random.default_rng(0))
    _, acc, epochs, _ = train_with_early_stop(net, ds.split("train"), ds.split("val"),
                                              TrainConfig(learning_rate=0.05), np.random.default_rng(1))
    assert acc >= 0.9
    assert 1 <= epochs <= 30


def test_zero_epochs_gives_chance_accuracy():
    ds = make_synthetic_dataset("blobs", 400, 16, seed=3, val_fraction=0.25, test_fraction=0.25)
    net = Network(make_spec([], [DenseBlock(8)], ds.input_shape, 2), np.random.default_rng(5))
    _, acc, epochs, _ = train_with_early_stop(net, ds.split("train"), ds.split("val"),
                                              TrainConfig(max_epochs=0), np.random.default_rng(0))
    assert epochs == 0
    assert 0.35 <= acc <= 0.65


def test_early_stopping_halts_after_patience_without_improvement():
    ds = _blobs()
    net = Network(make_spec([], [DenseBlock(4)], ds.input_shape, 2), np.random.default_rng(0))
    cfg = TrainConfig(learning_rate=1e-300, patience=3, max_epochs=50)
    _, _, epochs, _ = train_with_early_stop(net, ds.split("train"), ds.split("val"), cfg,
                                            np.random.default_rng(0))
    # epoch 1 sets the best score; three stale epochs follow
    assert epochs == 4


def test_returned_network_holds_best_epoch_weights():
    ds = _blobs()
    net = Network(make_spec([], [DenseBlock(8)], ds.input_shape, 2), np.random.default_rng(2))
    best, acc, _, loss = train_with_early_stop(net, ds.split("train"), ds.split("val"),
                                               TrainConfig(max_epochs=8), np.random.default_rng(0))
    assert accuracy_and_loss(best, *ds.split("val")) == pytest.approx((acc, loss))


@pytest.mark.parametrize("kw", [{"learning_rate": 0}, {"batch_size": 0}, {"patience": 0},
                                {"max_epochs": -1}, {"dropout_rate": 1.0}])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)
