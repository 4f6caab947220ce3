"""
文字分割
切り出したプレート画像から文字領域を3段階で取り出す

  1. 大域 Otsu 二値化 + 連結成分（両極性を試し、残った成分が多い方を採用）
  2. 横長の塊を縦方向射影の谷で分割
  3. 文字間の広い隙間を局所平均しきい値で再走査（低コントラスト文字の回収）

判定はゆるめにしておき、非文字の除去は後段のフィルタネットワークに任せる
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

import imaging
from config import (
    SEG_ADAPTIVE_OFFSET,
    SEG_ADAPTIVE_WINDOW,
    SEG_DEDUP_IOU,
    SEG_GAP_FACTOR,
    SEG_MAX_ASPECT,
    SEG_MAX_HEIGHT_RATIO,
    SEG_MAX_WIDE_ASPECT,
    SEG_MIN_AREA_RATIO,
    SEG_MIN_ASPECT,
    SEG_MIN_HEIGHT_RATIO,
    SEG_WIDE_TRIGGER,
)


@dataclass(frozen=True)
class SegmenterConfig:
    min_height_ratio: float = SEG_MIN_HEIGHT_RATIO
    max_height_ratio: float = SEG_MAX_HEIGHT_RATIO
    min_aspect: float = SEG_MIN_ASPECT
    max_aspect: float = SEG_MAX_ASPECT
    min_area_ratio: float = SEG_MIN_AREA_RATIO
    wide_trigger: float = SEG_WIDE_TRIGGER
    max_wide_aspect: float = SEG_MAX_WIDE_ASPECT
    adaptive_window: int = SEG_ADAPTIVE_WINDOW
    adaptive_offset: float = SEG_ADAPTIVE_OFFSET
    gap_factor: float = SEG_GAP_FACTOR
    dedup_iou: float = SEG_DEDUP_IOU

    def __post_init__(self):
        if not 0 <= self.min_height_ratio < self.max_height_ratio:
            raise ValueError(f"高さ比の範囲が不正です: {self.min_height_ratio}-{self.max_height_ratio}")
        if not 0 <= self.min_aspect < self.max_aspect:
            raise ValueError(f"縦横比の範囲が不正です: {self.min_aspect}-{self.max_aspect}")
        if self.min_area_ratio < 0:
            raise ValueError(f"最小面積比が負です: {self.min_area_ratio}")
        if self.wide_trigger <= 0 or self.max_wide_aspect < self.wide_trigger:
            raise ValueError(f"横長判定の範囲が不正です: {self.wide_trigger}-{self.max_wide_aspect}")
        if self.adaptive_window < 1:
            raise ValueError(f"局所平均の窓幅が不正です: {self.adaptive_window}")


DEFAULT_CONFIG = SegmenterConfig()


@dataclass(frozen=True)
class CharSegment:
    """プレート座標の外接矩形と、矩形内の文字画素マスク"""
    bbox: imaging.BBox
    mask: np.ndarray = field(compare=False)
    origin_step: int = 1

    @property
    def aspect(self):
        return self.bbox.w / self.bbox.h


def _passes_common(bbox, area, plate_shape, cfg):
    ph, pw = plate_shape
    ratio = bbox.h / ph
    if not cfg.min_height_ratio <= ratio <= cfg.max_height_ratio:
        return False
    return area >= cfg.min_area_ratio * ph * pw


def passes_filters(seg, plate_shape, cfg=DEFAULT_CONFIG):
    """高さ比・縦横比・面積の幾何フィルタ"""
    area = int(np.count_nonzero(seg.mask))
    if not _passes_common(seg.bbox, area, plate_shape, cfg):
        return False
    return cfg.min_aspect <= seg.aspect <= cfg.max_aspect


def _is_candidate(seg, plate_shape, cfg):
    """フィルタ通過、または分割待ちの横長の塊"""
    area = int(np.count_nonzero(seg.mask))
    if not _passes_common(seg.bbox, area, plate_shape, cfg):
        return False
    upper = max(cfg.max_aspect, cfg.max_wide_aspect)
    return cfg.min_aspect <= seg.aspect <= upper


def _is_wide(seg, cfg):
    return seg.aspect > cfg.wide_trigger


def _components_to_segments(mask, step, dx=0, dy=0):
    return [
        CharSegment(
            bbox=imaging.BBox(c.bbox.x + dx, c.bbox.y + dy, c.bbox.w, c.bbox.h),
            mask=c.mask,
            origin_step=step,
        )
        for c in imaging.connected_components(mask)
    ]


def _sort_by_x(segs):
    return sorted(segs, key=lambda s: (s.bbox.x, s.bbox.y))


def segment_step1(plate, cfg=DEFAULT_CONFIG):
    """大域 Otsu で二値化し、残る成分が多い極性を選ぶ（同数なら dark_on_light）"""
    plate = imaging.as_gray(plate)
    try:
        t = imaging.otsu_threshold(plate)
    except imaging.DegenerateImageError:
        return [], imaging.DARK_ON_LIGHT

    best, best_polarity = None, None
    for polarity in imaging.POLARITIES:
        mask = imaging.binarize(plate, t, polarity)
        segs = [s for s in _components_to_segments(mask, 1) if _is_candidate(s, plate.shape, cfg)]
        if best is None or len(segs) > len(best):
            best, best_polarity = segs, polarity
    return _sort_by_x(best), best_polarity


def _tighten(mask, x0, y0, step):
    """マスクの非ゼロ部分に矩形を詰める（空なら None）"""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    top, bottom = ys.min(), ys.max() + 1
    left, right = xs.min(), xs.max() + 1
    return CharSegment(
        bbox=imaging.BBox(x0 + int(left), y0 + int(top), int(right - left), int(bottom - top)),
        mask=mask[top:bottom, left:right],
        origin_step=step,
    )


def split_column(mask):
    """中央50%の範囲で列和が最小になる最も左の列"""
    w = mask.shape[1]
    profile = mask.sum(axis=0)
    lo = w // 4
    hi = max(lo + 1, w - w // 4)
    return lo + int(np.argmin(profile[lo:hi]))


def _split(seg, cfg, min_width):
    if not _is_wide(seg, cfg):
        return [seg]
    c = split_column(seg.mask)
    if c < min_width or seg.bbox.w - c < min_width:
        return [seg]

    parts = []
    for part_mask, x0 in ((seg.mask[:, :c], seg.bbox.x), (seg.mask[:, c:], seg.bbox.x + c)):
        part = _tighten(part_mask, x0, seg.bbox.y, 2)
        if part is not None:
            parts.append(part)
    if len(parts) < 2:
        return [seg]

    out = []
    for part in parts:
        out.extend(_split(part, cfg, min_width))
    return out


def segment_step2(segs, plate, cfg=DEFAULT_CONFIG):
    """横長の塊を射影の谷で再帰的に分割する"""
    plate = imaging.as_gray(plate)
    out = []
    for seg in segs:
        if not _is_wide(seg, cfg):
            out.append(seg)
            continue
        min_width = max(2, int(imaging.round_half_up(cfg.min_aspect * seg.bbox.h)))
        for part in _split(seg, cfg, min_width):
            if part is seg or _is_candidate(part, plate.shape, cfg):
                out.append(part)
    return _sort_by_x(out)


def adaptive_mask(plate, polarity, cfg=DEFAULT_CONFIG):
    """局所平均しきい値による二値化"""
    plate = imaging.as_gray(plate)
    local_mean = ndimage.uniform_filter(plate.astype(np.float64), size=cfg.adaptive_window, mode="nearest")
    if polarity == imaging.DARK_ON_LIGHT:
        return plate <= local_mean - cfg.adaptive_offset
    if polarity == imaging.LIGHT_ON_DARK:
        return plate >= local_mean + cfg.adaptive_offset
    raise ValueError(f"未知の極性です: {polarity}")


def find_gaps(segs, plate_width, cfg=DEFAULT_CONFIG):
    """中央値幅の gap_factor 倍より広い横方向の隙間 (x0, x1) の一覧"""
    accepted = sorted(segs, key=lambda s: s.bbox.x)
    if not accepted:
        return [(0, plate_width)]
    limit = cfg.gap_factor * float(np.median([s.bbox.w for s in accepted]))

    gaps = []
    edges = [0] + [s.bbox.x2 for s in accepted]
    starts = [s.bbox.x for s in accepted] + [plate_width]
    reach = 0
    for left, right in zip(edges, starts):
        reach = max(reach, left)
        if right - reach > limit:
            gaps.append((reach, right))
    return gaps


def _dedup(segs, iou_thresh):
    """先にあるものを優先して IoU の大きい重複を落とす"""
    kept = []
    for seg in segs:
        if all(imaging.iou(seg.bbox, k.bbox) < iou_thresh for k in kept):
            kept.append(seg)
    return kept


def segment_step3(segs, plate, cfg=DEFAULT_CONFIG, polarity=imaging.DARK_ON_LIGHT):
    """広い隙間を局所平均しきい値で走査して取りこぼした文字を回収する"""
    plate = imaging.as_gray(plate)
    ph, pw = plate.shape
    accepted = [s for s in segs if passes_filters(s, plate.shape, cfg)]
    gaps = find_gaps(accepted, pw, cfg)
    if not gaps:
        return _sort_by_x(segs)

    mask = adaptive_mask(plate, polarity, cfg)
    found = []
    for x0, x1 in gaps:
        for seg in _components_to_segments(mask[:, x0:x1], 3, dx=x0):
            if passes_filters(seg, plate.shape, cfg):
                found.append(seg)

    merged = list(segs)
    for seg in _sort_by_x(found):
        if all(imaging.iou(seg.bbox, s.bbox) < cfg.dedup_iou for s in merged):
            merged.append(seg)
    return _sort_by_x(merged)


def segment_plate(plate, cfg=DEFAULT_CONFIG):
    """3段階の分割をまとめて実行し、x 順の文字領域を返す"""
    plate = imaging.as_gray(plate)
    segs, polarity = segment_step1(plate, cfg)
    segs = segment_step2(segs, plate, cfg)
    segs = segment_step3(segs, plate, cfg, polarity=polarity)
    # 分割できなかった横長の塊はここで落とす
    final = [s for s in segs if passes_filters(s, plate.shape, cfg)]
    return _dedup(_sort_by_x(final), cfg.dedup_iou)
