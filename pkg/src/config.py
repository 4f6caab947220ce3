"""
設定ファイル - ナンバープレート検出・認識ツールキット
"""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# === パス設定 ===
ROOT_DIR = Path(__file__).parent.parent
DATA_DIR = Path(os.getenv("ALPR_DATA_DIR", ROOT_DIR / "data"))
MODEL_DIR = Path(os.getenv("ALPR_MODEL_DIR", ROOT_DIR / "models"))
OUTPUT_DIR = Path(os.getenv("ALPR_OUTPUT_DIR", ROOT_DIR / "output"))
FIGURE_DIR = OUTPUT_DIR / "figures"

# すべての乱数はこのシードから派生する
DEFAULT_SEED = int(os.getenv("ALPR_SEED", "42"))

# === 画像 ===
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# === ニューラルネット ===
MODEL_MAGIC = b"ALPRNET1"
MODEL_VERSION = 1

# 層種別タグ（モデルファイルの1バイト目）
LAYER_TAGS = {
    "conv2d": 1,
    "maxpool": 2,
    "relu": 3,
    "fc": 4,
    "softmax": 5,
}

# 学習のデフォルト値
TRAIN_LEARNING_RATE = 0.01
TRAIN_MOMENTUM = 0.9
TRAIN_BATCH_SIZE = 32
TRAIN_EPOCHS = 10
TRAIN_HOLDOUT = 0.2

# 推論時のミニバッチ（メモリ節約用）
PREDICT_CHUNK = 256

# 勾配チェック
GRADCHECK_EPSILON = 1e-5
GRADCHECK_TOLERANCE = 1e-4

# 3つの参照アーキテクチャ
# (種別, 引数) のリスト。conv2d は (出力ch, カーネル, ストライド, パディング)
ARCHITECTURES = {
    "detector": {
        "input_shape": (1, 32, 96),
        "layers": [
            ("conv2d", (8, 3, 1, 1)),
            ("relu", ()),
            ("maxpool", ()),
            ("conv2d", (16, 3, 1, 1)),
            ("relu", ()),
            ("maxpool", ()),
            ("fc", (64,)),
            ("relu", ()),
            ("fc", (2,)),
            ("softmax", ()),
        ],
    },
    "filter": {
        "input_shape": (1, 24, 24),
        "layers": [
            ("conv2d", (8, 3, 1, 1)),
            ("relu", ()),
            ("maxpool", ()),
            ("fc", (32,)),
            ("relu", ()),
            ("fc", (2,)),
            ("softmax", ()),
        ],
    },
    "recognizer": {
        "input_shape": (1, 24, 24),
        "layers": [
            ("conv2d", (8, 3, 1, 1)),
            ("relu", ()),
            ("maxpool", ()),
            ("conv2d", (16, 3, 1, 1)),
            ("relu", ()),
            ("maxpool", ()),
            ("fc", (128,)),
            ("relu", ()),
            ("fc", (35,)),
            ("softmax", ()),
        ],
    },
}

MODEL_FILES = {
    "detector": MODEL_DIR / "detector.alprnet",
    "filter": MODEL_DIR / "filter.alprnet",
    "recognizer": MODEL_DIR / "recognizer.alprnet",
}

# === プレート検出 ===
DETECTOR_WINDOW = (32, 96)  # (高さ, 幅)
DETECTOR_STRIDE = 8
DETECTOR_SCALE_STEP = 0.75
DETECTOR_SCORE_THRESH = 0.5
DETECTOR_NMS_IOU = 0.3
# 検出後の矩形補正（窓の中のプレート地に合わせる）
DETECTOR_REFINE = True
DETECTOR_REFINE_MARGIN = 0.75
DETECTOR_REFINE_MIN_TOL = 12.0
DETECTOR_REFINE_MIN_COVER = 0.5
# 学習用の正例の大きさのゆらぎ（ピラミッドの段の間隔に収める）
DETECTOR_POSITIVE_SCALE = (0.87, 1.15)

# === 文字分割（緩めの判定） ===
SEG_MIN_HEIGHT_RATIO = 0.30
SEG_MAX_HEIGHT_RATIO = 0.95
SEG_MIN_ASPECT = 0.08
SEG_MAX_ASPECT = 1.10
SEG_MIN_AREA_RATIO = 0.003
SEG_WIDE_TRIGGER = 1.25
SEG_MAX_WIDE_ASPECT = 3.0
SEG_ADAPTIVE_WINDOW = 15
SEG_ADAPTIVE_OFFSET = 10
SEG_GAP_FACTOR = 1.5
SEG_DEDUP_IOU = 0.5

# === 文字認識 ===
# 0-9 と O を除く A-Z（O は 0 と同一クラス）
ALPHABET = "0123456789ABCDEFGHIJKLMNPQRSTUVWXYZ"
PATCH_SIZE = 24
CHARNESS_THRESH = 0.5

# === パイプライン ===
CROP_MARGIN = 0.05
ROW_SPLIT_FACTOR = 0.5

# === 合成データ ===
PLATE_SIZE = (64, 192)  # (高さ, 幅)
SCENE_SIZE = (256, 384)
CHAR_HEIGHT_RATIO = 0.45
CHAR_SPACING = 8
CHAR_SPACING_RANGE = (7, 9)
TWO_ROW_CHAR_HEIGHT_RATIO = 0.32
PLATE_SCALE_RANGE = (0.5, 1.5)
PLATE_TEMPLATES = ["LLLDDD", "DLLLDD", "LLDDDD", "DDLLLD"]

# 背景・文字の輝度（DarkOnLight の場合。LightOnDark は反転）
PLATE_LIGHT_LEVEL = 210
PLATE_DARK_LEVEL = 40

# 難易度ティア: 割合と描画パラメータの範囲
BENCHMARK_TIERS = {
    "clean": {
        "share": 0.7,
        "contrast": (0.8, 1.0),
        "rotation": (-1.0, 1.0),
        "noise": (0.0, 4.0),
        "blur": (0,),
    },
    "moderate": {
        "share": 0.2,
        "contrast": (0.6, 1.0),
        "rotation": (-5.0, 5.0),
        "noise": (6.0, 12.0),
        "blur": (0, 1),
    },
    "low_contrast": {
        "share": 0.1,
        "contrast": (0.2, 0.45),
        "rotation": (-2.0, 2.0),
        "noise": (0.0, 4.0),
        "blur": (0,),
    },
}
LIGHT_ON_DARK_SHARE = 0.2

# === 評価 ===
EVAL_IOU_THRESH = 0.5
MANIFEST_COLUMNS = ["filename", "x", "y", "w", "h", "text", "tier"]

# === CLI 終了コード ===
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_IO = 2
EXIT_MODEL = 3
EXIT_MANIFEST = 4
