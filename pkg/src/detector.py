"""
ナンバープレート検出
画像ピラミッド上をスライディングウィンドウで走査し、2クラス CNN でプレートらしさを判定する
"""
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

import imaging
import nnet
from config import (
    DETECTOR_NMS_IOU,
    DETECTOR_REFINE,
    DETECTOR_REFINE_MARGIN,
    DETECTOR_REFINE_MIN_COVER,
    DETECTOR_REFINE_MIN_TOL,
    DETECTOR_SCALE_STEP,
    DETECTOR_SCORE_THRESH,
    DETECTOR_STRIDE,
    DETECTOR_WINDOW,
)


@dataclass(frozen=True)
class PlateDetection:
    bbox: imaging.BBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"スコアは [0, 1] の範囲です: {self.score}")


@dataclass(frozen=True)
class DetectorConfig:
    scale_step: float = DETECTOR_SCALE_STEP
    stride: int = DETECTOR_STRIDE
    score_thresh: float = DETECTOR_SCORE_THRESH
    iou_thresh: float = DETECTOR_NMS_IOU
    refine: bool = DETECTOR_REFINE

    def __post_init__(self):
        if not 0.0 < self.scale_step < 1.0:
            raise ValueError(f"スケール比は (0, 1) の範囲です: {self.scale_step}")
        if self.stride < 1:
            raise ValueError(f"ストライドは1以上です: {self.stride}")
        if not 0.0 <= self.score_thresh <= 1.0:
            raise ValueError(f"スコアしきい値は [0, 1] の範囲です: {self.score_thresh}")
        if not 0.0 <= self.iou_thresh <= 1.0:
            raise ValueError(f"IoU しきい値は [0, 1] の範囲です: {self.iou_thresh}")


def build_pyramid(img, scale_step=DETECTOR_SCALE_STEP, window=DETECTOR_WINDOW):
    """窓が収まる段だけを (画像, 倍率) のリストで返す。各段は原画像から直接縮小する"""
    if not 0.0 < scale_step < 1.0:
        raise ValueError(f"スケール比は (0, 1) の範囲です: {scale_step}")
    img = imaging.as_gray(img)
    h, w = img.shape
    wh, ww = window

    levels = []
    k = 0
    while True:
        factor = scale_step ** k
        lh, lw = int(np.floor(h * factor)), int(np.floor(w * factor))
        if lh < wh or lw < ww:
            break
        level = img if k == 0 else imaging.resize_bilinear(img, lw, lh)
        levels.append((level, factor))
        k += 1
    return levels


def _window_boxes(level_shape, orig_shape, factor, stride, window):
    """段上の窓位置を倍率で割って元画像座標の矩形に戻す"""
    lh, lw = level_shape
    oh, ow = orig_shape
    wh, ww = window
    ys = np.arange(0, lh - wh + 1, stride)
    xs = np.arange(0, lw - ww + 1, stride)

    boxes = []
    for y in ys:
        for x in xs:
            x0 = int(imaging.round_half_up(x / factor))
            y0 = int(imaging.round_half_up(y / factor))
            x1 = int(imaging.round_half_up((x + ww) / factor))
            y1 = int(imaging.round_half_up((y + wh) / factor))
            box = imaging.clamp_bbox(imaging.BBox(x0, y0, max(1, x1 - x0), max(1, y1 - y0)), ow, oh)
            boxes.append(box)
    return boxes


def _level_windows(level, stride, window):
    wh, ww = window
    scaled = level.astype(np.float64) / 255.0
    views = sliding_window_view(scaled, (wh, ww))[::stride, ::stride]
    ny, nx = views.shape[:2]
    return views.reshape(ny * nx, 1, wh, ww)


def scan(net, img, stride=DETECTOR_STRIDE, score_thresh=DETECTOR_SCORE_THRESH, scale_step=DETECTOR_SCALE_STEP):
    """全段・全窓を採点し、しきい値以上の候補を返す"""
    window = net.input_shape[1:]
    if net.input_shape[0] != 1 or net.n_classes != 2:
        raise nnet.ShapeMismatchError(f"検出器の形状ではありません: 入力 {net.input_shape}, クラス数 {net.n_classes}")
    if stride < 1:
        raise ValueError(f"ストライドは1以上です: {stride}")
    img = imaging.as_gray(img)

    levels = build_pyramid(img, scale_step, window)
    if not levels:
        return []
    # 全段の窓をまとめて1回で採点する
    windows = np.concatenate([_level_windows(level, stride, window) for level, _ in levels])
    boxes = [
        box
        for level, factor in levels
        for box in _window_boxes(level.shape, img.shape, factor, stride, window)
    ]
    scores = nnet.predict_proba(net, windows)[:, 1]

    return [
        PlateDetection(bbox=box, score=float(np.clip(score, 0.0, 1.0)))
        for box, score in zip(boxes, scores)
        if score >= score_thresh
    ]


def _order_key(d):
    return (-d.score, d.bbox.x, d.bbox.y)


def nms(candidates, iou_thresh=DETECTOR_NMS_IOU):
    """貪欲法の非最大値抑制（同点は x, y の小さい順）"""
    remaining = sorted(candidates, key=_order_key)
    kept = []
    for cand in remaining:
        if all(imaging.iou(cand.bbox, k.bbox) < iou_thresh for k in kept):
            kept.append(cand)
    return kept


def _noise_sigma(patch):
    """横方向の差分の中央値から画素ノイズの標準偏差を見積もる"""
    if patch.shape[1] < 2:
        return 0.0
    diffs = np.abs(np.diff(patch, axis=1))
    return float(np.median(diffs)) / (0.6745 * np.sqrt(2.0))


def refine_box(img, box, margin=DETECTOR_REFINE_MARGIN):
    """窓の矩形をプレート地の領域の外接矩形に合わせる

    プレート地の輝度は窓内の中央値、許容幅はノイズの3倍（最低 DETECTOR_REFINE_MIN_TOL）。
    窓を margin 倍広げた探索範囲で、許容幅に入る画素の連結成分のうち窓内に最も多いものを選ぶ。
    成分が探索範囲の内側の縁に触れる、または窓の半分以上を覆わない場合は元の矩形を返す。
    """
    img = imaging.as_gray(img)
    h, w = img.shape
    inner = imaging.crop(img, box).astype(np.float64)
    level = float(np.median(inner))
    tol = max(DETECTOR_REFINE_MIN_TOL, 3.0 * _noise_sigma(inner))

    region = imaging.clamp_bbox(imaging.expand_bbox(box, margin), w, h)
    patch = imaging.crop(img, region).astype(np.float64)
    # オープニングで細い橋渡しと孤立した画素を落とす
    mask = ndimage.binary_opening(np.abs(patch - level) <= tol, structure=np.ones((3, 3), dtype=bool))
    labels, count = ndimage.label(mask)
    if count == 0:
        return box

    ox, oy = box.x - region.x, box.y - region.y
    counts = np.bincount(labels[oy:oy + box.h, ox:ox + box.w].ravel(), minlength=count + 1)
    counts[0] = 0
    best = int(np.argmax(counts))
    if counts[best] < DETECTOR_REFINE_MIN_COVER * box.area:
        return box

    ys, xs = ndimage.find_objects(labels)[best - 1]
    # 画像の端ではない探索範囲の縁に届いたら、領域が閉じていない
    open_left = xs.start == 0 and region.x > 0
    open_top = ys.start == 0 and region.y > 0
    open_right = xs.stop == region.w and region.x2 < w
    open_bottom = ys.stop == region.h and region.y2 < h
    if open_left or open_top or open_right or open_bottom:
        return box
    return imaging.BBox(region.x + xs.start, region.y + ys.start, xs.stop - xs.start, ys.stop - ys.start)


def refine_detections(img, detections, iou_thresh=DETECTOR_NMS_IOU):
    """各検出の矩形を補正し、同じプレートに集まった重複を NMS で落とす"""
    img = imaging.as_gray(img)
    refined = [replace(d, bbox=refine_box(img, d.bbox)) for d in detections]
    return nms(refined, iou_thresh)


def detect_plates(net, img, cfg=DetectorConfig()):
    """ピラミッド走査 → NMS（→ 矩形補正 → NMS）。スコアの高い順"""
    img = imaging.as_gray(img)
    kept = nms(scan(net, img, cfg.stride, cfg.score_thresh, cfg.scale_step), cfg.iou_thresh)
    if cfg.refine:
        kept = refine_detections(img, kept, cfg.iou_thresh)
    return sorted(kept, key=_order_key)
