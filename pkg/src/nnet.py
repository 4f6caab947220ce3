"""
小さな CNN エンジン
順伝播・逆伝播・モメンタム付き SGD・勾配チェック・モデルファイル（ALPRNET1）の読み書き
テンソルは (N, C, H, W) の float64 配列。学習は64bit、モデルファイルは32bitで保存する
"""
import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from config import (
    ARCHITECTURES,
    DEFAULT_SEED,
    GRADCHECK_EPSILON,
    GRADCHECK_TOLERANCE,
    LAYER_TAGS,
    MODEL_MAGIC,
    MODEL_VERSION,
    PREDICT_CHUNK,
    TRAIN_BATCH_SIZE,
    TRAIN_EPOCHS,
    TRAIN_LEARNING_RATE,
    TRAIN_MOMENTUM,
)

PROB_FLOOR = 1e-12

_TAG_TO_KIND = {tag: kind for kind, tag in LAYER_TAGS.items()}


class ShapeMismatchError(ValueError):
    """入力形状がネットワークと合わない"""


class EmptyDatasetError(ValueError):
    """学習データが空"""


class ModelFormatError(ValueError):
    """モデルファイルの形式エラー"""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


# === 層 ===

class Conv2D:
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0):
        if kernel < 1 or stride < 1 or padding < 0:
            raise ValueError(f"畳み込みの設定が不正です: k={kernel}, s={stride}, p={padding}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.params = {
            "W": np.zeros((out_channels, in_channels, kernel, kernel)),
            "b": np.zeros(out_channels),
        }

    def shape_ints(self):
        return (self.out_channels, self.in_channels, self.kernel, self.stride, self.padding)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeMismatchError(f"チャネル数が一致しません: {c} != {self.in_channels}")
        ho = (h + 2 * self.padding - self.kernel) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeMismatchError(f"畳み込み後のサイズが0になります: {shape}")
        return (self.out_channels, ho, wo)

    def _columns(self, x):
        p, k, s = self.padding, self.kernel, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        return cols, xp.shape, ho, wo

    def forward(self, x):
        p, k, s = self.padding, self.kernel, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo = win.shape[:4]
        # (N, C*k*k, Ho*Wo)。最内軸を出力の幅にして連続コピーにする
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)
        w = self.params["W"].reshape(self.out_channels, -1)
        out = w @ cols + self.params["b"][:, None]
        return out.reshape(n, self.out_channels, ho, wo)

    def backward(self, x, y, dy):
        n = x.shape[0]
        p, k, s = self.padding, self.kernel, self.stride
        cols, padded_shape, ho, wo = self._columns(x)
        dy_flat = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        w = self.params["W"].reshape(self.out_channels, -1)

        grads = {
            "W": (dy_flat.T @ cols).reshape(self.params["W"].shape),
            "b": dy_flat.sum(axis=0),
        }

        dcols = (dy_flat @ w).reshape(n, ho, wo, self.in_channels, k, k)
        dxp = np.zeros(padded_shape)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        h, w_ = x.shape[2], x.shape[3]
        return dxp[:, :, p:p + h, p:p + w_], grads


class MaxPool:
    """2x2 / ストライド2"""
    kind = "maxpool"

    def __init__(self):
        self.params = {}

    def shape_ints(self):
        return ()

    def output_shape(self, shape):
        c, h, w = shape
        if h < 2 or w < 2:
            raise ShapeMismatchError(f"プーリングできないサイズです: {shape}")
        return (c, h // 2, w // 2)

    @staticmethod
    def _blocks(x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        xc = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2)
        return xc.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)

    def forward(self, x):
        h2, w2 = x.shape[2] // 2, x.shape[3] // 2
        xc = x[:, :, :2 * h2, :2 * w2]
        top = np.maximum(xc[:, :, 0::2, 0::2], xc[:, :, 0::2, 1::2])
        bottom = np.maximum(xc[:, :, 1::2, 0::2], xc[:, :, 1::2, 1::2])
        return np.maximum(top, bottom)

    def backward(self, x, y, dy):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        # 最大値が複数ある場合は最初の1つに勾配を流す
        idx = self._blocks(x).argmax(axis=-1)
        onehot = np.arange(4) == idx[..., None]
        dblocks = onehot * dy[..., None]
        dblocks = dblocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros_like(x)
        dx[:, :, :2 * h2, :2 * w2] = dblocks.reshape(n, c, 2 * h2, 2 * w2)
        return dx, {}


class ReLU:
    kind = "relu"

    def __init__(self):
        self.params = {}

    def shape_ints(self):
        return ()

    def output_shape(self, shape):
        return shape

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, x, y, dy):
        return dy * (x > 0), {}


class FullyConnected:
    """入力は平坦化して扱う"""
    kind = "fc"

    def __init__(self, in_features, out_features):
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "W": np.zeros((out_features, in_features)),
            "b": np.zeros(out_features),
        }

    def shape_ints(self):
        return (self.out_features, self.in_features)

    def output_shape(self, shape):
        size = int(np.prod(shape))
        if size != self.in_features:
            raise ShapeMismatchError(f"全結合層の入力サイズが一致しません: {size} != {self.in_features}")
        return (self.out_features,)

    def forward(self, x):
        xf = x.reshape(x.shape[0], -1)
        return xf @ self.params["W"].T + self.params["b"]

    def backward(self, x, y, dy):
        xf = x.reshape(x.shape[0], -1)
        grads = {"W": dy.T @ xf, "b": dy.sum(axis=0)}
        dx = (dy @ self.params["W"]).reshape(x.shape)
        return dx, grads


class Softmax:
    kind = "softmax"

    def __init__(self, n_classes):
        self.n_classes = n_classes
        self.params = {}

    def shape_ints(self):
        return (self.n_classes,)

    def output_shape(self, shape):
        size = int(np.prod(shape))
        if size != self.n_classes:
            raise ShapeMismatchError(f"Softmax のクラス数が一致しません: {size} != {self.n_classes}")
        return (self.n_classes,)

    def forward(self, x):
        z = x.reshape(x.shape[0], -1)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, x, y, dy):
        dx = y * (dy - (dy * y).sum(axis=1, keepdims=True))
        return dx.reshape(x.shape), {}


@dataclass
class Network:
    layers: list
    input_shape: tuple
    n_classes: int

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ValueError("最終層は Softmax である必要があります")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (self.n_classes,):
            raise ValueError(f"出力クラス数が一致しません: {shape} != ({self.n_classes},)")

    def parameters(self):
        """(層番号, 名前, 配列) の一覧"""
        return [
            (i, name, arr)
            for i, layer in enumerate(self.layers)
            for name, arr in layer.params.items()
        ]


def _make_layer(kind, args, in_shape):
    if kind == "conv2d":
        out_ch, k, s, p = args
        return Conv2D(in_shape[0], out_ch, k, s, p)
    if kind == "maxpool":
        return MaxPool()
    if kind == "relu":
        return ReLU()
    if kind == "fc":
        return FullyConnected(int(np.prod(in_shape)), args[0])
    if kind == "softmax":
        return Softmax(int(np.prod(in_shape)))
    raise ValueError(f"未知の層種別です: {kind}")


def build_from_spec(input_shape, layer_specs, seed=DEFAULT_SEED):
    """層仕様のリストからネットワークを作り He 初期化する"""
    rng = np.random.default_rng(seed)
    layers = []
    shape = tuple(input_shape)
    for kind, args in layer_specs:
        layer = _make_layer(kind, args, shape)
        if "W" in layer.params:
            w = layer.params["W"]
            fan_in = int(np.prod(w.shape[1:]))
            layer.params["W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=w.shape)
        layers.append(layer)
        shape = layer.output_shape(shape)
    return Network(layers=layers, input_shape=input_shape, n_classes=shape[0])


def build_network(role, seed=DEFAULT_SEED):
    """役割（detector / filter / recognizer）の参照アーキテクチャを作る"""
    if role not in ARCHITECTURES:
        raise ValueError(f"未知のネットワーク役割です: {role}")
    arch = ARCHITECTURES[role]
    return build_from_spec(arch["input_shape"], arch["layers"], seed)


# === 順伝播・損失・逆伝播 ===

def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == net.input_shape:
        x = x[None]
    if x.ndim != len(net.input_shape) + 1 or x.shape[1:] != net.input_shape:
        raise ShapeMismatchError(f"入力形状 {x.shape} はネットワーク入力 {net.input_shape} と一致しません")
    return x


def forward(net, x):
    """各層の活性値のリストを返す（先頭が入力、末尾がクラス確率）"""
    acts = [_as_batch(net, x)]
    for layer in net.layers:
        acts.append(layer.forward(acts[-1]))
    return acts


def forward_from(net, act, start):
    """start 番目の層の入力 act から最後まで伝播する"""
    for layer in net.layers[start:]:
        act = layer.forward(act)
    return act


def predict_proba(net, x, chunk=PREDICT_CHUNK):
    """クラス確率 (N, クラス数)"""
    x = _as_batch(net, x)
    if len(x) == 0:
        return np.zeros((0, net.n_classes))
    out = [forward_from(net, x[i:i + chunk], 0) for i in range(0, len(x), chunk)]
    return np.concatenate(out, axis=0)


def _check_labels(labels, n_classes):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"ラベルが範囲外です（クラス数 {n_classes}）")
    return labels


def cross_entropy(probs, label):
    """-log(p[label])（p は 1e-12 で下限を設ける）"""
    probs = np.asarray(probs, dtype=np.float64)
    _check_labels([label], probs.shape[-1])
    return float(-np.log(max(probs[label], PROB_FLOOR)))


def batch_loss(probs, labels):
    labels = _check_labels(labels, probs.shape[1])
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def _backprop(net, acts, labels):
    probs = acts[-1]
    n = probs.shape[0]
    labels = _check_labels(labels, net.n_classes)
    if labels.size == 1 and n > 1:
        labels = np.repeat(labels, n)

    # 下限を下回った確率の勾配は0
    picked = probs[np.arange(n), labels]
    dprobs = np.zeros_like(probs)
    safe = picked >= PROB_FLOOR
    dprobs[np.arange(n)[safe], labels[safe]] = -1.0 / (n * picked[safe])

    param_grads = [None] * len(net.layers)
    act_grads = [None] * len(acts)
    act_grads[-1] = dprobs
    dy = dprobs
    for i in range(len(net.layers) - 1, -1, -1):
        dy, grads = net.layers[i].backward(acts[i], acts[i + 1], dy)
        param_grads[i] = grads
        act_grads[i] = dy
    return param_grads, act_grads


def backward(net, activations, labels):
    """平均交差エントロピーに対する各パラメータの勾配（層ごとの dict）"""
    param_grads, _ = _backprop(net, activations, labels)
    return param_grads


# === 学習 ===

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = TRAIN_LEARNING_RATE
    momentum: float = TRAIN_MOMENTUM
    batch_size: int = TRAIN_BATCH_SIZE
    epochs: int = TRAIN_EPOCHS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"学習率は0以上である必要があります: {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"バッチサイズは1以上である必要があります: {self.batch_size}")


def train(net, x, y, cfg=TrainConfig(), verbose=False):
    """ミニバッチ SGD（モメンタム付き）で学習し、(学習済みネット, エポック履歴) を返す"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise EmptyDatasetError("学習データが空です")
    x = _as_batch(net, x)
    y = _check_labels(y, net.n_classes)
    if len(x) != len(y):
        raise ValueError(f"データ数とラベル数が一致しません: {len(x)} != {len(y)}")

    net = copy.deepcopy(net)
    rng = np.random.default_rng(cfg.seed)
    velocity = [{k: np.zeros_like(v) for k, v in layer.params.items()} for layer in net.layers]
    history = []

    epochs = range(1, cfg.epochs + 1)
    for epoch in tqdm(epochs, desc="学習中", disable=not verbose):
        order = rng.permutation(len(x))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            acts = forward(net, x[idx])
            probs = acts[-1]
            loss_sum += batch_loss(probs, y[idx]) * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())

            grads = backward(net, acts, y[idx])
            for layer, vel, grad in zip(net.layers, velocity, grads):
                for name in layer.params:
                    vel[name] = cfg.momentum * vel[name] - cfg.learning_rate * grad[name]
                    layer.params[name] = layer.params[name] + vel[name]

        record = {
            "epoch": epoch,
            "loss": loss_sum / len(x),
            "accuracy": correct / len(x),
        }
        history.append(record)
        if verbose:
            tqdm.write(f"  epoch {epoch:3d}  loss={record['loss']:.4f}  acc={record['accuracy']:.4f}")

    return net, history


def accuracy(net, x, y):
    if len(x) == 0:
        return 0.0
    pred = predict_proba(net, x).argmax(axis=1)
    return float((pred == np.asarray(y)).mean())


def split_dataset(x, y, holdout, seed=DEFAULT_SEED):
    """学習用と検証用に決定的に分割する"""
    if not 0.0 <= holdout < 1.0:
        raise ValueError(f"検証データ比率が不正です: {holdout}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(x))
    n_hold = int(round(len(x) * holdout))
    hold, keep = order[:n_hold], order[n_hold:]
    return x[keep], y[keep], x[hold], y[hold]


# === 勾配チェック ===

def _relative_error(analytic, numeric):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _loss_from(net, act, start, labels):
    return batch_loss(forward_from(net, act, start), labels)


def gradient_check(net, x, label, eps=GRADCHECK_EPSILON, perturb=False):
    """層ごとに解析勾配と中心差分の最大相対誤差を返す"""
    acts = forward(net, x)
    labels = np.atleast_1d(label)
    param_grads, act_grads = _backprop(net, acts, labels)

    errors = []
    for i, layer in enumerate(net.layers):
        worst = 0.0

        # 層入力に対する勾配
        base = acts[i].copy()
        analytic = act_grads[i] * (1.1 if perturb else 1.0)
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + eps
            plus = _loss_from(net, base, i, labels)
            base[idx] = orig - eps
            minus = _loss_from(net, base, i, labels)
            base[idx] = orig
            numeric[idx] = (plus - minus) / (2 * eps)
        worst = max(worst, _relative_error(analytic, numeric))

        # パラメータに対する勾配
        for name, arr in layer.params.items():
            analytic = param_grads[i][name] * (1.1 if perturb else 1.0)
            numeric = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                plus = _loss_from(net, acts[0], 0, labels)
                arr[idx] = orig - eps
                minus = _loss_from(net, acts[0], 0, labels)
                arr[idx] = orig
                numeric[idx] = (plus - minus) / (2 * eps)
            worst = max(worst, _relative_error(analytic, numeric))

        errors.append({"layer": i, "kind": layer.kind, "max_rel_error": worst})
    return errors


# 層種別ごとの小さな検査用ネット
GRADCHECK_NETS = [
    ("conv2d", (2, 6, 6), [("conv2d", (3, 3, 1, 1)), ("fc", (3,)), ("softmax", ())]),
    ("conv2d", (1, 7, 7), [("conv2d", (2, 3, 2, 0)), ("fc", (3,)), ("softmax", ())]),
    ("maxpool", (2, 4, 6), [("maxpool", ()), ("fc", (3,)), ("softmax", ())]),
    ("relu", (1, 2, 3), [("fc", (5,)), ("relu", ()), ("fc", (3,)), ("softmax", ())]),
    ("fc", (1, 2, 3), [("fc", (4,)), ("softmax", ())]),
    ("softmax", (1, 1, 4), [("softmax", ())]),
]


def gradcheck_suite(seed=DEFAULT_SEED, perturb=False, eps=GRADCHECK_EPSILON):
    """全層種別の勾配チェック結果を表で返す"""
    rows = {}
    for i, (kind, input_shape, specs) in enumerate(GRADCHECK_NETS):
        net = build_from_spec(input_shape, specs, seed=seed + i)
        rng = np.random.default_rng(seed + 100 + i)
        for layer in net.layers:
            if "b" in layer.params:
                layer.params["b"] = rng.normal(0.0, 0.1, size=layer.params["b"].shape)
        x = rng.normal(0.0, 1.0, size=(2,) + tuple(input_shape))
        labels = rng.integers(0, net.n_classes, size=2)
        for record in gradient_check(net, x, labels, eps=eps, perturb=perturb):
            if record["kind"] == kind:
                rows[kind] = max(rows.get(kind, 0.0), record["max_rel_error"])

    table = pd.DataFrame(
        {"kind": list(rows.keys()), "max_rel_error": list(rows.values())}
    )
    table["passed"] = table["max_rel_error"] <= GRADCHECK_TOLERANCE
    return table


# === モデルファイル ===

def dumps_model(net):
    """ALPRNET1 形式のバイト列"""
    parts = [
        MODEL_MAGIC,
        bytes([MODEL_VERSION]),
        np.array([len(net.layers)], dtype="<i4").tobytes(),
        np.array(net.input_shape, dtype="<i4").tobytes(),
    ]
    for layer in net.layers:
        parts.append(bytes([LAYER_TAGS[layer.kind]]))
        parts.append(np.array(layer.shape_ints(), dtype="<i4").tobytes())
        for name in ("W", "b"):
            if name in layer.params:
                parts.append(layer.params[name].astype("<f4").tobytes())
    return b"".join(parts)


_SHAPE_INT_COUNT = {"conv2d": 5, "maxpool": 0, "relu": 0, "fc": 2, "softmax": 1}


def _check_dims(kind, dims):
    """形状整数の範囲チェック（パディングだけ0を許す）"""
    if kind == "conv2d":
        out_ch, in_ch, k, s, p = dims
        ok = min(out_ch, in_ch, k, s) >= 1 and p >= 0
    else:
        ok = all(d >= 1 for d in dims)
    if not ok:
        raise ModelFormatError(f"{kind} 層の形状が不正です: {dims}")


def _param_count(kind, dims):
    if kind == "conv2d":
        out_ch, in_ch, k, _, _ = dims
        return out_ch * in_ch * k * k + out_ch
    if kind == "fc":
        out_f, in_f = dims
        return out_f * in_f + out_f
    return 0


class _Reader:
    def __init__(self, payload):
        self.payload = payload
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.payload):
            raise TruncatedModelError(
                f"モデルファイルが途中で切れています（位置 {self.pos} で {n} バイト必要）"
            )
        chunk = self.payload[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def ints(self, count):
        return np.frombuffer(self.take(4 * count), dtype="<i4").astype(int).tolist()

    def floats(self, shape):
        count = int(np.prod(shape))
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float64).reshape(shape)


def loads_model(payload):
    """バイト列からネットワークを復元する"""
    head = payload[:len(MODEL_MAGIC)]
    if head != MODEL_MAGIC:
        if len(head) < len(MODEL_MAGIC) and MODEL_MAGIC.startswith(head):
            raise TruncatedModelError("モデルファイルが途中で切れています（マジック）")
        raise BadMagicError(f"マジックバイトが不正です: {head!r}")

    reader = _Reader(payload)
    reader.take(len(MODEL_MAGIC))
    version = reader.take(1)[0]
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"未対応のバージョンです: {version}（対応 {MODEL_VERSION}）")

    (n_layers,) = reader.ints(1)
    input_shape = tuple(reader.ints(3))
    if min(input_shape) < 1:
        raise ModelFormatError(f"入力形状が不正です: {input_shape}")
    layers = []
    for _ in range(n_layers):
        tag = reader.take(1)[0]
        if tag not in _TAG_TO_KIND:
            raise ModelFormatError(f"未知の層タグです: {tag}")
        kind = _TAG_TO_KIND[tag]
        dims = reader.ints(_SHAPE_INT_COUNT[kind])
        _check_dims(kind, dims)
        # 配列を確保する前に残りのバイト数と照合する
        if 4 * _param_count(kind, dims) > len(payload) - reader.pos:
            raise TruncatedModelError(f"{kind} 層のパラメータが途中で切れています: {dims}")
        if kind == "conv2d":
            out_ch, in_ch, k, s, p = dims
            layer = Conv2D(in_ch, out_ch, k, s, p)
        elif kind == "fc":
            out_f, in_f = dims
            layer = FullyConnected(in_f, out_f)
        elif kind == "softmax":
            layer = Softmax(dims[0])
        elif kind == "maxpool":
            layer = MaxPool()
        else:
            layer = ReLU()
        for name in ("W", "b"):
            if name in layer.params:
                layer.params[name] = reader.floats(layer.params[name].shape)
        layers.append(layer)

    if reader.pos != len(payload):
        raise ModelFormatError(f"モデルファイルの末尾に余分なデータがあります（{len(payload) - reader.pos} バイト）")
    if not layers:
        raise ModelFormatError("層が1つもありません")

    try:
        return Network(layers=layers, input_shape=input_shape, n_classes=layers[-1].shape_ints()[0])
    except (ValueError, AttributeError, IndexError) as e:
        raise ModelFormatError(f"モデルの構造が不正です: {e}") from e


def save_model(net, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_model(net))


def load_model(path):
    return loads_model(Path(path).read_bytes())
