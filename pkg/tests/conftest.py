"""
共通フィクスチャ
src/ のモジュールは素の名前で import する
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import cli  # noqa: E402
import nnet  # noqa: E402
import pipeline  # noqa: E402

SEED = 42


def constant_net(role, favored, margin=20.0):
    """入力によらず favored クラスを出力するネットワーク"""
    net = nnet.build_network(role, seed=SEED)
    last_fc = [layer for layer in net.layers if layer.kind == "fc"][-1]
    last_fc.params["W"] = np.zeros_like(last_fc.params["W"])
    bias = np.full(last_fc.out_features, -margin)
    bias[favored] = margin
    last_fc.params["b"] = bias
    return net


@pytest.fixture
def never_detect_bundle():
    """検出しない検出器 + 全部通すフィルタ + 常に 'A' を返す認識器"""
    return pipeline.ModelBundle(
        detector=constant_net("detector", 0),
        filter=constant_net("filter", 1),
        recognizer=constant_net("recognizer", 10),
    )


@pytest.fixture
def always_detect_bundle():
    """全窓を検出する検出器 + 全部通すフィルタ + 常に 'A' を返す認識器"""
    return pipeline.ModelBundle(
        detector=constant_net("detector", 1),
        filter=constant_net("filter", 1),
        recognizer=constant_net("recognizer", 10),
    )


@pytest.fixture
def model_dir(tmp_path, never_detect_bundle):
    """固定出力モデルを3つ保存したディレクトリ"""
    paths = {}
    for role in ("detector", "filter", "recognizer"):
        paths[role] = tmp_path / f"{role}.alprnet"
        nnet.save_model(getattr(never_detect_bundle, role), paths[role])
    return paths


# === 学習済みモデル（slow テスト用） ===

TRAINING_STEPS = [
    ["synth", "chars", "--n", "200"],
    ["synth", "negatives", "--n", "7000"],
    ["synth", "plates", "--n", "4000"],
]


@pytest.fixture(scope="session")
def trained_models(tmp_path_factory):
    """README と同じ手順（seed 42、既定の学習設定）で3つのモデルを作る"""
    root = tmp_path_factory.mktemp("trained")
    for step in TRAINING_STEPS:
        assert cli.main(step + ["--out-dir", str(root), "--seed", str(SEED)]) == 0
    paths = {}
    for role in ("recognizer", "filter", "detector"):
        paths[role] = root / f"{role}.alprnet"
        code = cli.main(["train", role, "--data-dir", str(root), "--out", str(paths[role]), "--seed", str(SEED)])
        assert code == 0
    return paths


@pytest.fixture(scope="session")
def trained_bundle(trained_models):
    return pipeline.load_bundle(trained_models)
