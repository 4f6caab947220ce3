"""
エンドツーエンドの読み取り
検出 → 切り出し → 文字分割 → 文字/非文字フィルタ → 文字認識 → 並べ替え
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

import detector
import imaging
import nnet
import recognizer
import segmenter
from config import ARCHITECTURES, CHARNESS_THRESH, CROP_MARGIN, MODEL_FILES, ROW_SPLIT_FACTOR


@dataclass(frozen=True)
class PlateReading:
    detection: object
    text: str
    chars: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.text) != len(self.chars):
            raise ValueError(f"文字列長と文字数が一致しません: {self.text!r} / {len(self.chars)}")


@dataclass(frozen=True)
class ModelBundle:
    detector: nnet.Network
    filter: nnet.Network
    recognizer: nnet.Network
    detector_config: detector.DetectorConfig = detector.DetectorConfig()
    segmenter_config: segmenter.SegmenterConfig = segmenter.DEFAULT_CONFIG
    charness_thresh: float = CHARNESS_THRESH
    crop_margin: float = CROP_MARGIN

    def __post_init__(self):
        for role in ARCHITECTURES:
            check_role(getattr(self, role), role)


def check_role(net, role):
    """ネットワークの入出力形状が役割のアーキテクチャと一致するか確認する"""
    arch = ARCHITECTURES[role]
    n_classes = arch["layers"][-2][1][0]
    if tuple(net.input_shape) != tuple(arch["input_shape"]) or net.n_classes != n_classes:
        raise nnet.ShapeMismatchError(
            f"{role} の形状が一致しません: 入力 {net.input_shape}, クラス数 {net.n_classes}"
        )


def load_bundle(paths=None, **configs):
    """3つのモデルファイルを読み込む（paths は役割 → パスの辞書）"""
    paths = {**MODEL_FILES, **(paths or {})}
    nets = {role: nnet.load_model(paths[role]) for role in ARCHITECTURES}
    return ModelBundle(**nets, **configs)


def _two_means(values):
    """1次元 2-means（初期値は最小値と最大値）。各要素の所属 0/1 を返す"""
    centers = np.array([values.min(), values.max()], dtype=np.float64)
    assign = None
    for _ in range(100):
        # 等距離なら上の行
        new = (np.abs(values - centers[1]) < np.abs(values - centers[0])).astype(int)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for k in (0, 1):
            if np.any(assign == k):
                centers[k] = values[assign == k].mean()
    return assign, centers


def assemble_string(preds):
    """読み順に並べる（縦方向のばらつきが大きければ2行に分ける）"""
    preds = list(preds)
    if not preds:
        return []
    boxes = [p.segment.bbox if hasattr(p.segment, "bbox") else p.segment for p in preds]
    xc = np.array([b.center[0] for b in boxes])
    yc = np.array([b.center[1] for b in boxes])
    heights = np.array([b.h for b in boxes], dtype=np.float64)

    def by_x(indices):
        return sorted(indices, key=lambda i: (xc[i], yc[i]))

    spread = yc.max() - yc.min()
    if spread <= ROW_SPLIT_FACTOR * float(np.median(heights)):
        return [preds[i] for i in by_x(range(len(preds)))]

    assign, centers = _two_means(yc)
    top = int(np.argmin(centers))
    rows = [
        by_x([i for i in range(len(preds)) if assign[i] == top]),
        by_x([i for i in range(len(preds)) if assign[i] != top]),
    ]
    return [preds[i] for row in rows for i in row]


def read_plate(models, plate):
    """切り出したプレート画像の文字列を読む"""
    plate = imaging.as_gray(plate)
    segs = segmenter.segment_plate(plate, models.segmenter_config)
    preds = recognizer.recognize_segments(
        models.filter, models.recognizer, plate, segs, models.charness_thresh
    )
    chars = assemble_string(preds)
    return PlateReading(detection=None, text="".join(p.char for p in chars), chars=chars)


def process_image(models, scene):
    """シーン画像から全プレートを検出して読む（検出スコアの高い順）"""
    scene = imaging.as_gray(scene)
    h, w = scene.shape
    readings = []
    for det in detector.detect_plates(models.detector, scene, models.detector_config):
        box = imaging.clamp_bbox(imaging.expand_bbox(det.bbox, models.crop_margin), w, h)
        reading = read_plate(models, imaging.crop(scene, box))
        readings.append(PlateReading(detection=det, text=reading.text, chars=reading.chars))
    return readings


def process_images(models, scenes, jobs=1):
    """複数画像を処理する。結果は入力順"""
    if jobs <= 1:
        return [process_image(models, s) for s in scenes]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda s: process_image(models, s), scenes))
