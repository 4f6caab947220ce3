import numpy as np
import numpy.testing as npt
import pytest

import nnet
from config import ARCHITECTURES, MODEL_MAGIC


def naive_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(n):
        for f in range(o):
            for y in range(ho):
                for xx in range(wo):
                    region = xp[i, :, y * stride:y * stride + k, xx * stride:xx * stride + k]
                    out[i, f, y, xx] = (region * w[f]).sum() + b[f]
    return out


def small_net(seed=0):
    return nnet.build_from_spec((1, 6, 6), [("conv2d", (2, 3, 1, 1)), ("relu", ()), ("maxpool", ()),
                                            ("fc", (3,)), ("softmax", ())], seed=seed)


# === 層 ===

@pytest.mark.parametrize("stride, pad", [(1, 0), (1, 1), (2, 0), (2, 1)])
def test_conv_forward_matches_naive(stride, pad):
    rng = np.random.default_rng(0)
    layer = nnet.Conv2D(2, 3, 3, stride, pad)
    layer.params["W"] = rng.normal(size=layer.params["W"].shape)
    layer.params["b"] = rng.normal(size=3)
    x = rng.normal(size=(2, 2, 7, 8))
    npt.assert_allclose(layer.forward(x), naive_conv(x, layer.params["W"], layer.params["b"], stride, pad),
                        atol=1e-12)


def test_maxpool_forward_and_first_max_routing():
    layer = nnet.MaxPool()
    x = np.array([[[[1.0, 3.0], [2.0, 0.0]]]])
    npt.assert_array_equal(layer.forward(x), [[[[3.0]]]])

    ties = np.ones((1, 1, 2, 2))
    dx, grads = layer.backward(ties, layer.forward(ties), np.array([[[[5.0]]]]))
    npt.assert_array_equal(dx, [[[[5.0, 0.0], [0.0, 0.0]]]])
    assert grads == {}


def test_maxpool_odd_size_drops_last_row_and_column():
    layer = nnet.MaxPool()
    assert layer.output_shape((1, 5, 7)) == (1, 2, 3)


def test_softmax_rows_sum_to_one():
    layer = nnet.Softmax(4)
    x = np.array([[1.0, 2.0, 3.0, 1000.0], [0.0, 0.0, 0.0, 0.0]])
    y = layer.forward(x)
    npt.assert_allclose(y.sum(axis=1), 1.0)
    npt.assert_allclose(y[1], 0.25)


def test_cross_entropy_floor():
    assert nnet.cross_entropy(np.array([0.0, 1.0]), 0) == pytest.approx(-np.log(1e-12))
    assert nnet.cross_entropy(np.array([0.5, 0.5]), 1) == pytest.approx(np.log(2))


# === ネットワーク ===

@pytest.mark.parametrize("role", list(ARCHITECTURES))
def test_reference_architectures(role):
    net = nnet.build_network(role)
    assert net.input_shape == tuple(ARCHITECTURES[role]["input_shape"])
    probs = nnet.predict_proba(net, np.zeros((3,) + net.input_shape))
    assert probs.shape == (3, net.n_classes)
    npt.assert_allclose(probs.sum(axis=1), 1.0)


def test_recognizer_has_35_classes():
    assert nnet.build_network("recognizer").n_classes == 35


def test_forward_rejects_wrong_shape():
    net = nnet.build_network("filter")
    with pytest.raises(nnet.ShapeMismatchError):
        nnet.forward(net, np.zeros((2, 1, 32, 96)))


def test_forward_accepts_single_sample():
    net = small_net()
    acts = nnet.forward(net, np.zeros((1, 6, 6)))
    assert acts[-1].shape == (1, 3)
    assert len(acts) == len(net.layers) + 1


def test_build_is_seed_deterministic():
    a = nnet.dumps_model(nnet.build_network("detector", seed=7))
    b = nnet.dumps_model(nnet.build_network("detector", seed=7))
    c = nnet.dumps_model(nnet.build_network("detector", seed=8))
    assert a == b
    assert a != c


# === 勾配チェック ===

def test_gradcheck_suite_passes():
    table = nnet.gradcheck_suite(seed=42)
    assert set(table["kind"]) == {"conv2d", "maxpool", "relu", "fc", "softmax"}
    assert table["passed"].all(), table
    assert (table["max_rel_error"] <= 1e-4).all()


def test_gradcheck_detects_perturbed_gradient():
    table = nnet.gradcheck_suite(seed=42, perturb=True)
    assert not table["passed"].any()


def test_gradcheck_is_deterministic():
    a = nnet.gradcheck_suite(seed=3)
    b = nnet.gradcheck_suite(seed=3)
    npt.assert_array_equal(a["max_rel_error"].to_numpy(), b["max_rel_error"].to_numpy())


# === 学習 ===

def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    x = rng.normal(0.0, 0.3, size=(n, 1, 2, 3))
    x[y == 1] += 1.0
    return x, y


def test_train_reduces_loss():
    x, y = blobs()
    net = nnet.build_from_spec((1, 2, 3), [("fc", (8,)), ("relu", ()), ("fc", (2,)), ("softmax", ())], seed=1)
    trained, history = nnet.train(net, x, y, nnet.TrainConfig(learning_rate=0.05, epochs=15, batch_size=16))
    assert len(history) == 15
    assert history[-1]["loss"] < history[0]["loss"]
    assert nnet.accuracy(trained, x, y) >= 0.95


def test_train_does_not_modify_input_network():
    x, y = blobs(40)
    net = nnet.build_from_spec((1, 2, 3), [("fc", (2,)), ("softmax", ())], seed=1)
    before = nnet.dumps_model(net)
    nnet.train(net, x, y, nnet.TrainConfig(epochs=2))
    assert nnet.dumps_model(net) == before


def test_train_zero_learning_rate_keeps_weights():
    net = small_net()
    x = np.random.default_rng(0).normal(size=(40, 1, 6, 6))
    y = np.arange(40) % 3
    trained, _ = nnet.train(net, x, y, nnet.TrainConfig(learning_rate=0.0, epochs=3))
    for (_, _, a), (_, _, b) in zip(net.parameters(), trained.parameters()):
        npt.assert_array_equal(a, b)


def test_train_is_deterministic():
    x = np.random.default_rng(5).normal(size=(30, 1, 6, 6))
    y = np.arange(30) % 3
    cfg = nnet.TrainConfig(epochs=2, batch_size=8, seed=9)
    a, _ = nnet.train(small_net(), x, y, cfg)
    b, _ = nnet.train(small_net(), x, y, cfg)
    assert nnet.dumps_model(a) == nnet.dumps_model(b)


def test_train_empty_dataset():
    with pytest.raises(nnet.EmptyDatasetError):
        nnet.train(small_net(), np.zeros((0, 1, 6, 6)), np.zeros(0, dtype=int))


def test_train_rejects_out_of_range_labels():
    with pytest.raises(ValueError):
        nnet.train(small_net(), np.zeros((2, 1, 6, 6)), np.array([0, 3]))


def test_split_dataset():
    x = np.arange(50).reshape(50, 1, 1, 1).astype(float)
    y = np.arange(50)
    xt, yt, xh, yh = nnet.split_dataset(x, y, 0.2, seed=1)
    assert len(xt) == 40 and len(xh) == 10
    assert sorted(np.concatenate([yt, yh]).tolist()) == list(range(50))
    npt.assert_array_equal(xh[:, 0, 0, 0], yh)


# === モデルファイル ===

def test_model_bytes_roundtrip():
    net = nnet.build_network("recognizer", seed=3)
    payload = nnet.dumps_model(net)
    assert payload.startswith(MODEL_MAGIC)
    assert nnet.dumps_model(nnet.loads_model(payload)) == payload


def test_model_file_predictions_match(tmp_path):
    net = small_net(seed=4)
    path = tmp_path / "sub" / "m.alprnet"
    nnet.save_model(net, path)
    loaded = nnet.load_model(path)
    x = np.random.default_rng(0).normal(size=(5, 1, 6, 6))
    npt.assert_allclose(nnet.predict_proba(loaded, x), nnet.predict_proba(net, x), atol=1e-5)


def test_model_format_errors():
    payload = nnet.dumps_model(small_net())
    with pytest.raises(nnet.BadMagicError):
        nnet.loads_model(b"NOTAMODEL" + payload[8:])
    with pytest.raises(nnet.VersionMismatchError):
        nnet.loads_model(payload[:8] + bytes([99]) + payload[9:])
    with pytest.raises(nnet.TruncatedModelError):
        nnet.loads_model(payload[:-3])
    with pytest.raises(nnet.TruncatedModelError):
        nnet.loads_model(payload[:4])
    with pytest.raises(nnet.ModelFormatError):
        nnet.loads_model(payload + b"\x00")


def test_model_errors_share_base_class():
    for cls in (nnet.BadMagicError, nnet.VersionMismatchError, nnet.TruncatedModelError):
        assert issubclass(cls, nnet.ModelFormatError)


# 先頭の畳み込み層の形状整数（出力ch, 入力ch, カーネル, ストライド, パディング）の位置
CONV_DIMS_OFFSET = len(MODEL_MAGIC) + 1 + 4 + 12 + 1


def patch_int(payload, offset, value):
    return payload[:offset] + np.array([value], dtype="<i4").tobytes() + payload[offset + 4:]


@pytest.mark.parametrize("index, value", [(0, -5), (0, 0), (1, 0), (2, 0), (3, 0), (4, -1)])
def test_model_rejects_bad_conv_dims(index, value):
    payload = patch_int(nnet.dumps_model(small_net()), CONV_DIMS_OFFSET + 4 * index, value)
    with pytest.raises(nnet.ModelFormatError):
        nnet.loads_model(payload)


def test_model_rejects_oversized_layer_before_allocating():
    payload = patch_int(nnet.dumps_model(small_net()), CONV_DIMS_OFFSET, 1_000_000_000)
    with pytest.raises(nnet.TruncatedModelError):
        nnet.loads_model(payload)


def test_model_rejects_bad_input_shape():
    payload = patch_int(nnet.dumps_model(small_net()), len(MODEL_MAGIC) + 1 + 4, 0)
    with pytest.raises(nnet.ModelFormatError):
        nnet.loads_model(payload)


# === 全結合層の逆伝播 ===

def test_fc_gradient_is_prob_minus_onehot_times_input():
    net = nnet.build_from_spec((1, 1, 4), [("fc", (3,)), ("softmax", ())], seed=5)
    x = np.random.default_rng(1).normal(size=(2, 1, 1, 4))
    labels = np.array([2, 0])
    acts = nnet.forward(net, x)
    grads = nnet.backward(net, acts, labels)

    delta = acts[-1] - np.eye(3)[labels]
    # 損失はバッチ平均
    npt.assert_allclose(grads[0]["W"], delta.T @ x.reshape(2, 4) / 2, atol=1e-12)
    npt.assert_allclose(grads[0]["b"], delta.sum(axis=0) / 2, atol=1e-12)
