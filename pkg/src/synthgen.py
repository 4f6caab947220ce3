"""
合成データ生成スクリプト
実データがなくても学習・ベンチマークを実行できるように、プレート・シーン・文字パッチを生成する
乱数はすべて numpy の PCG64（default_rng）でシードから派生させる
"""
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import ndimage
from tqdm import tqdm

import imaging
import recognizer
from config import (
    ALPHABET,
    BENCHMARK_TIERS,
    CHAR_HEIGHT_RATIO,
    CHAR_SPACING,
    CHAR_SPACING_RANGE,
    DETECTOR_POSITIVE_SCALE,
    DETECTOR_WINDOW,
    LIGHT_ON_DARK_SHARE,
    MANIFEST_COLUMNS,
    PLATE_DARK_LEVEL,
    PLATE_LIGHT_LEVEL,
    PLATE_SCALE_RANGE,
    PLATE_SIZE,
    PLATE_TEMPLATES,
    SCENE_SIZE,
    TWO_ROW_CHAR_HEIGHT_RATIO,
)

# === 7x5 ビットマップフォント（O は 0 と同じグリフ） ===
GLYPHS = {
    "0": [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    "1": ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "2": [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    "3": ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
    "4": ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    "5": ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    "6": ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    "7": ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    "8": [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    "9": [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
    "A": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "B": ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    "C": [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
    "D": ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."],
    "E": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "F": ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
    "G": [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
    "H": ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "I": [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "J": ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."],
    "K": ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
    "L": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "M": ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
    "N": ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
    "P": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "Q": [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
    "R": ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
    "S": [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
    "T": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    "U": ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "V": ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    "W": ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
    "X": ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
    "Y": ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
    "Z": ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
}

# プレート上の非文字マーク（ハードネガティブ）
SYMBOLS = {
    "wheelchair": ["..#....", "..#....", "..###..", "..#.#..", ".##.###", "#..#..#", ".##...."],
    "flag": ["######.", "#.#.#..", "######.", "#......", "#......", "#......", "#......"],
    "heart": [".##.##.", "#######", "#######", ".#####.", "..###..", "...#..."],
    "star": ["...#...", "...#...", "#######", ".#####.", "..###..", ".##.##.", "#.....#"],
    "diamond": ["...#...", "..###..", ".#####.", "#######", ".#####.", "..###..", "...#..."],
}

LETTERS = [c for c in ALPHABET if c.isalpha()]
DIGITS = [c for c in ALPHABET if c.isdigit()]

# 細い斜めの接点をつなぐための十字膨張
_CROSS = ndimage.generate_binary_structure(2, 1)
_DILATE_MIN_HEIGHT = 14
_LAYOUT_MARGIN = 2


class PlateLayoutError(ValueError):
    """文字列がプレートに収まらない、またはプレートがシーンに収まらない"""


@dataclass(frozen=True)
class PlateSpec:
    template: str = "LLLDDD"
    size: tuple = PLATE_SIZE
    char_height_ratio: float = CHAR_HEIGHT_RATIO
    spacing: int = CHAR_SPACING
    polarity: str = imaging.DARK_ON_LIGHT
    contrast: float = 1.0
    rotation: float = 0.0
    noise: float = 0.0
    blur: int = 0
    rows: int = 1

    def __post_init__(self):
        if not self.template or set(self.template) - {"L", "D"}:
            raise ValueError(f"テンプレートは L/D からなる空でない文字列です: {self.template!r}")
        if not 0.2 <= self.contrast <= 1.0:
            raise ValueError(f"コントラストは [0.2, 1.0] の範囲です: {self.contrast}")
        if not -5.0 <= self.rotation <= 5.0:
            raise ValueError(f"回転角は [-5, 5] 度の範囲です: {self.rotation}")
        if self.blur not in (0, 1):
            raise ValueError(f"ぼかし半径は 0 か 1 です: {self.blur}")
        if self.noise < 0:
            raise ValueError(f"ノイズの標準偏差が負です: {self.noise}")
        if self.rows not in (1, 2):
            raise ValueError(f"行数は 1 か 2 です: {self.rows}")
        if self.polarity not in imaging.POLARITIES:
            raise ValueError(f"未知の極性です: {self.polarity}")


@dataclass(frozen=True)
class RenderedPlate:
    image: np.ndarray
    text: str
    glyph_boxes: list
    symbol_box: object = None


@dataclass(frozen=True)
class SceneSample:
    scene: np.ndarray
    gt_box: imaging.BBox
    gt_text: str
    glyph_boxes: list
    tier: str = "clean"
    distractors: list = field(default_factory=list)


def glyph_bitmap(c):
    """文字の 7x5 ビットマップ"""
    key = "0" if c == "O" else c
    if key not in GLYPHS:
        raise recognizer.UnsupportedCharacterError(f"グリフがありません: {c!r}")
    return np.array([[p == "#" for p in row] for row in GLYPHS[key]], dtype=bool)


def symbol_bitmap(name):
    return np.array([[p == "#" for p in row] for row in SYMBOLS[name]], dtype=bool)


def scale_glyph(bitmap, height):
    """最近傍で指定の高さに拡大する（大きい場合は十字膨張で斜めの接点を太らせる）"""
    bh, bw = bitmap.shape
    width = max(1, int(imaging.round_half_up(height * bw / bh)))
    rows = np.arange(height) * bh // height
    cols = np.arange(width) * bw // width
    scaled = bitmap[rows][:, cols]
    if height >= _DILATE_MIN_HEIGHT:
        scaled = ndimage.binary_dilation(np.pad(scaled, 1), structure=_CROSS)
    return scaled


def sample_text(template, rng):
    """L=英字, D=数字 のテンプレートから文字列を作る"""
    return "".join(
        LETTERS[rng.integers(len(LETTERS))] if t == "L" else DIGITS[rng.integers(len(DIGITS))]
        for t in template
    )


def _levels(polarity, contrast):
    if polarity == imaging.DARK_ON_LIGHT:
        bg, full = PLATE_LIGHT_LEVEL, PLATE_DARK_LEVEL
    else:
        bg, full = PLATE_DARK_LEVEL, PLATE_LIGHT_LEVEL
    return float(bg), bg + contrast * (full - bg)


def _rotate(canvas, labels, angle):
    """中心回りにバイリニアで回転（ラベル画像は最近傍）"""
    h, w = canvas.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle)
    cos, sin = np.cos(theta), np.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    src_x = cx + cos * dx + sin * dy
    src_y = cy - sin * dx + cos * dy
    coords = np.array([src_y, src_x])
    rotated = ndimage.map_coordinates(canvas, coords, order=1, mode="nearest")
    rotated_labels = ndimage.map_coordinates(labels, coords, order=0, mode="constant", cval=0)
    return rotated, rotated_labels


def _row_layout(items, plate_w, spacing):
    widths = [bm.shape[1] for bm in items]
    total = sum(widths) + spacing * (len(items) - 1)
    if total > plate_w - 2 * _LAYOUT_MARGIN:
        raise PlateLayoutError(f"文字列がプレートに収まりません: 必要幅 {total}px > {plate_w}px")
    xs = []
    x = (plate_w - total) // 2
    for w in widths:
        xs.append(x)
        x += w + spacing
    return xs


def render_plate(spec, seed, text=None, symbol_at=None, symbol=None, contrast_override=None):
    """プレート画像・文字列・各文字の外接矩形を生成する

    symbol_at を指定すると、その文字位置の直前に記号（symbol）を挿入する。
    contrast_override は {文字位置: コントラスト} で一部の文字だけ薄くする。
    """
    rng = np.random.default_rng(seed)
    text = sample_text(spec.template, rng) if text is None else recognizer.normalize_text(text)
    if not text:
        raise PlateLayoutError("空の文字列は描画できません")
    contrast_override = contrast_override or {}

    ph, pw = spec.size
    if spec.rows == 1:
        char_h = int(imaging.round_half_up(spec.char_height_ratio * ph))
        rows_text = [list(range(len(text)))]
    else:
        char_h = int(imaging.round_half_up(TWO_ROW_CHAR_HEIGHT_RATIO * ph))
        half = (len(text) + 1) // 2
        rows_text = [list(range(half)), list(range(half, len(text)))]

    bg, fg = _levels(spec.polarity, spec.contrast)
    canvas = np.full((ph, pw), bg, dtype=np.float64)
    labels = np.zeros((ph, pw), dtype=np.int32)

    # 各行に (ラベル番号, ビットマップ) を並べる。ラベル 1..n は文字、n+1 は記号
    symbol_label = len(text) + 1
    rows = []
    for indices in rows_text:
        items = [(i + 1, scale_glyph(glyph_bitmap(text[i]), char_h)) for i in indices]
        if symbol_at is not None and 0 in indices:
            sym = scale_glyph(symbol_bitmap(symbol or "wheelchair"), char_h)
            items.insert(min(symbol_at, len(items)), (symbol_label, sym))
        rows.append(items)

    row_h = max(bm.shape[0] for items in rows for _, bm in items)
    gap = int(imaging.round_half_up(0.08 * ph))
    block_h = row_h * len(rows) + gap * (len(rows) - 1)
    top = (ph - block_h) // 2

    for r, items in enumerate(rows):
        y = top + r * (row_h + gap)
        xs = _row_layout([bm for _, bm in items], pw, spec.spacing)
        for (label, bm), x in zip(items, xs):
            h, w = bm.shape
            region = labels[y:y + h, x:x + w]
            region[bm] = label
            level = fg
            if 0 < label <= len(text) and (label - 1) in contrast_override:
                level = bg + contrast_override[label - 1] * (_levels(spec.polarity, 1.0)[1] - bg)
            canvas[y:y + h, x:x + w][bm] = level

    if spec.rotation:
        canvas, labels = _rotate(canvas, labels, spec.rotation)

    if spec.noise > 0:
        canvas = canvas + rng.normal(0.0, spec.noise, size=canvas.shape)
    if spec.blur:
        canvas = ndimage.uniform_filter(canvas, size=3, mode="nearest")

    image = np.clip(imaging.round_half_up(canvas), 0, 255).astype(np.uint8)

    # 回転後の画素から外接矩形を取る
    objects = ndimage.find_objects(labels, max_label=symbol_label)
    boxes = []
    for i in range(len(text)):
        sl = objects[i]
        if sl is None:
            raise PlateLayoutError(f"文字 {text[i]!r} がプレート外に出ました")
        boxes.append(imaging.BBox(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start))
    symbol_box = None
    if symbol_at is not None and objects[symbol_label - 1] is not None:
        sl = objects[symbol_label - 1]
        symbol_box = imaging.BBox(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)

    return RenderedPlate(image=image, text=text, glyph_boxes=boxes, symbol_box=symbol_box)


def _scale_box(b, sx, sy):
    x0 = int(np.floor(b.x * sx))
    y0 = int(np.floor(b.y * sy))
    x1 = int(np.ceil(b.x2 * sx))
    y1 = int(np.ceil(b.y2 * sy))
    return imaging.BBox(x0, y0, max(1, x1 - x0), max(1, y1 - y0))


def scale_plate(plate, scale):
    """プレートを拡大縮小し、文字矩形も合わせる"""
    ph, pw = plate.image.shape
    nw = max(1, int(imaging.round_half_up(pw * scale)))
    nh = max(1, int(imaging.round_half_up(ph * scale)))
    image = imaging.resize_bilinear(plate.image, nw, nh)
    sx, sy = nw / pw, nh / ph
    boxes = [_scale_box(b, sx, sy) for b in plate.glyph_boxes]
    symbol_box = _scale_box(plate.symbol_box, sx, sy) if plate.symbol_box else None
    return RenderedPlate(image=image, text=plate.text, glyph_boxes=boxes, symbol_box=symbol_box)


def _scene_background(rng, scene_size):
    sh, sw = scene_size
    coarse = rng.uniform(60, 160, size=(4, 4))
    bg = imaging.resize_float(coarse, sw, sh)
    bg = bg + rng.normal(0.0, 4.0, size=bg.shape)

    distractors = []
    for _ in range(int(rng.integers(2, 6))):
        w = int(rng.integers(10, sw // 3))
        h = int(rng.integers(8, sh // 4))
        x = int(rng.integers(0, sw - w + 1))
        y = int(rng.integers(0, sh - h + 1))
        bg[y:y + h, x:x + w] = rng.uniform(20, 235)
        distractors.append(imaging.BBox(x, y, w, h))
    return bg, distractors


def compose_scene(plate, scene_size=SCENE_SIZE, seed=0, tier="clean", scale=None):
    """背景にプレートを配置したシーンを作る"""
    rng = np.random.default_rng(seed)
    sh, sw = scene_size
    bg, distractors = _scene_background(rng, scene_size)

    if scale is None:
        scale = rng.uniform(*PLATE_SCALE_RANGE)
    placed = scale_plate(plate, scale)
    ph, pw = placed.image.shape
    if pw > sw or ph > sh:
        raise PlateLayoutError(f"プレート {pw}x{ph} がシーン {sw}x{sh} に収まりません")

    x = int(rng.integers(0, sw - pw + 1))
    y = int(rng.integers(0, sh - ph + 1))
    bg[y:y + ph, x:x + pw] = placed.image

    scene = np.clip(imaging.round_half_up(bg), 0, 255).astype(np.uint8)
    return SceneSample(
        scene=scene,
        gt_box=imaging.BBox(x, y, pw, ph),
        gt_text=placed.text,
        glyph_boxes=placed.glyph_boxes,
        tier=tier,
        distractors=distractors,
    )


def random_plate_spec(rng, tier="clean", **overrides):
    """ティアの範囲内でランダムな PlateSpec を作る"""
    params = BENCHMARK_TIERS[tier]
    polarity = imaging.LIGHT_ON_DARK if rng.uniform() < LIGHT_ON_DARK_SHARE else imaging.DARK_ON_LIGHT
    spec = PlateSpec(
        template=PLATE_TEMPLATES[rng.integers(len(PLATE_TEMPLATES))],
        spacing=int(rng.integers(CHAR_SPACING_RANGE[0], CHAR_SPACING_RANGE[1] + 1)),
        polarity=polarity,
        contrast=float(rng.uniform(*params["contrast"])),
        rotation=float(rng.uniform(*params["rotation"])),
        noise=float(rng.uniform(*params["noise"])),
        blur=int(params["blur"][rng.integers(len(params["blur"]))]),
    )
    return replace(spec, **overrides) if overrides else spec


def random_tier(rng):
    names = list(BENCHMARK_TIERS)
    shares = np.array([BENCHMARK_TIERS[n]["share"] for n in names])
    return names[rng.choice(len(names), p=shares / shares.sum())]


def _jitter_box(rng, b, limit_w, limit_h, amount=1):
    x0 = b.x + int(rng.integers(-amount, amount + 1))
    y0 = b.y + int(rng.integers(-amount, amount + 1))
    x1 = b.x2 + int(rng.integers(-amount, amount + 1))
    y1 = b.y2 + int(rng.integers(-amount, amount + 1))
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(limit_w, max(x1, x0 + 1)), min(limit_h, max(y1, y0 + 1))
    return imaging.BBox(x0, y0, x1 - x0, y1 - y0)


# === 学習用データセット ===

def make_char_dataset(n_per_class, seed):
    """全35クラスについて n 枚ずつ文字パッチを作る"""
    if n_per_class < 1:
        raise ValueError(f"n は1以上である必要があります: {n_per_class}")
    patches, labels = [], []
    for label, char in enumerate(tqdm(ALPHABET, desc="文字パッチ生成")):
        for k in range(n_per_class):
            rng = np.random.default_rng([seed, label, k])
            spec = random_plate_spec(rng, random_tier(rng))
            text = list(sample_text(spec.template, rng))
            pos = int(rng.integers(len(text)))
            text[pos] = char
            plate = render_plate(spec, int(rng.integers(2**32)), text="".join(text))
            plate = scale_plate(plate, rng.uniform(*PLATE_SCALE_RANGE))
            h, w = plate.image.shape
            box = _jitter_box(rng, plate.glyph_boxes[pos], w, h)
            patches.append(recognizer.prepare_patch(plate.image, box))
            labels.append(label)
    return np.stack(patches), np.array(labels, dtype=np.int64)


def _blank_plate(spec, rng):
    """文字のないプレート背景"""
    ph, pw = spec.size
    bg, _ = _levels(spec.polarity, spec.contrast)
    canvas = np.full((ph, pw), bg, dtype=np.float64)
    if spec.noise > 0:
        canvas = canvas + rng.normal(0.0, spec.noise, size=canvas.shape)
    if spec.blur:
        canvas = ndimage.uniform_filter(canvas, size=3, mode="nearest")
    return np.clip(imaging.round_half_up(canvas), 0, 255).astype(np.uint8)


def _background_negative(rng):
    spec = random_plate_spec(rng, random_tier(rng))
    if rng.uniform() < 0.5:
        image = _blank_plate(spec, rng)
    else:
        bg, _ = _scene_background(rng, spec.size)
        image = np.clip(imaging.round_half_up(bg), 0, 255).astype(np.uint8)
    ph, pw = image.shape
    h = int(rng.integers(int(0.3 * ph), int(0.9 * ph) + 1))
    w = max(2, int(h * rng.uniform(0.3, 1.0)))
    x = int(rng.integers(0, pw - w + 1))
    y = int(rng.integers(0, ph - h + 1))
    return recognizer.prepare_patch(image, imaging.BBox(x, y, w, h))


def _fragment_negative(rng):
    spec = random_plate_spec(rng, random_tier(rng))
    plate = render_plate(spec, int(rng.integers(2**32)))
    plate = scale_plate(plate, rng.uniform(*PLATE_SCALE_RANGE))
    b = plate.glyph_boxes[rng.integers(len(plate.glyph_boxes))]
    half = max(1, b.h // 2)
    if rng.uniform() < 0.5:
        box = imaging.BBox(b.x, b.y, b.w, half)
    else:
        box = imaging.BBox(b.x, b.y + half, b.w, b.h - half)
    return recognizer.prepare_patch(plate.image, box)


def _symbol_negative(rng):
    spec = random_plate_spec(rng, random_tier(rng), template="LLDD")
    name = list(SYMBOLS)[rng.integers(len(SYMBOLS))]
    plate = render_plate(spec, int(rng.integers(2**32)), symbol_at=int(rng.integers(5)), symbol=name)
    plate = scale_plate(plate, rng.uniform(*PLATE_SCALE_RANGE))
    h, w = plate.image.shape
    box = _jitter_box(rng, plate.symbol_box, w, h)
    return recognizer.prepare_patch(plate.image, box)


NEGATIVE_SOURCES = [_background_negative, _fragment_negative, _symbol_negative]


def make_negative_dataset(n, seed):
    """プレート背景・文字の断片・記号マークの非文字パッチ（3種を均等に）"""
    if n < 1:
        raise ValueError(f"n は1以上である必要があります: {n}")
    patches = []
    for i in tqdm(range(n), desc="非文字パッチ生成"):
        rng = np.random.default_rng([seed, 1_000_003, i])
        patches.append(NEGATIVE_SOURCES[i % len(NEGATIVE_SOURCES)](rng))
    return np.stack(patches), np.zeros(n, dtype=np.int64)


def _window_patch(scene, box):
    wh, ww = DETECTOR_WINDOW
    patch = imaging.resize_bilinear(imaging.crop(scene, box), ww, wh)
    return (patch.astype(np.float64) / 255.0)[None]


def _random_window(rng, scene_shape, avoid, max_iou=0.3, tries=50):
    sh, sw = scene_shape
    wh, ww = DETECTOR_WINDOW
    max_scale = min(sw / ww, sh / wh)
    for _ in range(tries):
        s = rng.uniform(1.0, max_scale)
        w, h = int(ww * s), int(wh * s)
        x = int(rng.integers(0, sw - w + 1))
        y = int(rng.integers(0, sh - h + 1))
        box = imaging.BBox(x, y, w, h)
        if imaging.iou(box, avoid) < max_iou:
            return box
    return None


def _positive_window(rng, gt):
    """プレートに合わせた窓。中心を少しずらし、大きさはピラミッドの段の間隔内で変える"""
    s = rng.uniform(*DETECTOR_POSITIVE_SCALE)
    w = max(8, int(gt.w * s))
    h = max(4, int(w * DETECTOR_WINDOW[0] / DETECTOR_WINDOW[1]))
    cx = gt.x + gt.w / 2 + rng.uniform(-0.06, 0.06) * gt.w
    cy = gt.y + gt.h / 2 + rng.uniform(-0.06, 0.06) * gt.h
    return imaging.BBox(int(cx - w / 2), int(cy - h / 2), w, h)


def _context_window(rng, sample, kind):
    """背景・紛らわしい矩形・横にずれたプレート"""
    gt = sample.gt_box
    if kind == 1 and sample.distractors:
        d = sample.distractors[rng.integers(len(sample.distractors))]
        w = max(DETECTOR_WINDOW[1], d.w)
        box = imaging.BBox(d.x, d.y, w, max(DETECTOR_WINDOW[0], w // 3))
        if imaging.iou(box, gt) < 0.3:
            return box
    elif kind == 2:
        shift = rng.choice([-1, 1]) * rng.uniform(0.6, 0.9) * gt.w
        box = imaging.BBox(int(gt.x + shift), gt.y, gt.w, gt.h)
        if imaging.clamp_bbox(box, sample.scene.shape[1], sample.scene.shape[0]) is not None:
            return box
    return _random_window(rng, sample.scene.shape, gt)


def _scale_window(rng, sample, nested):
    """大きさの合わない窓: プレートの内側の小さな窓か、プレートを含む大きな窓（IoU < 0.5）"""
    gt = sample.gt_box
    sh, sw = sample.scene.shape
    s = rng.uniform(0.4, 0.68) if nested else rng.uniform(1.5, 2.2)
    w = max(8, int(gt.w * s))
    h = max(4, int(w * DETECTOR_WINDOW[0] / DETECTOR_WINDOW[1]))
    if w > sw or h > sh:
        return None
    lo_x, hi_x = sorted((gt.x, gt.x2 - w))
    lo_y, hi_y = sorted((gt.y, gt.y2 - h))
    x = int(np.clip(rng.integers(lo_x, hi_x + 1), 0, sw - w))
    y = int(np.clip(rng.integers(lo_y, hi_y + 1), 0, sh - h))
    box = imaging.BBox(x, y, w, h)
    return box if imaging.iou(box, gt) < 0.5 else None


def make_plate_dataset(n, seed):
    """検出器用: 1シーンあたりプレート窓2枚と非プレート窓2枚

    非プレート窓は「背景・紛らわしい矩形・横ずれ」から1枚、「内側の小窓・大きすぎる窓」から1枚。
    """
    if n < 1:
        raise ValueError(f"n は1以上である必要があります: {n}")
    patches, labels = [], []
    for i in tqdm(range(n), desc="検出用パッチ生成"):
        rng = np.random.default_rng([seed, 2_000_003, i])
        tier = random_tier(rng)
        plate = render_plate(random_plate_spec(rng, tier), int(rng.integers(2**32)))
        sample = compose_scene(plate, SCENE_SIZE, int(rng.integers(2**32)), tier=tier)

        for _ in range(2):
            patches.append(_window_patch(sample.scene, _positive_window(rng, sample.gt_box)))
            labels.append(1)

        for box in (_context_window(rng, sample, i % 3), _scale_window(rng, sample, nested=i % 2 == 0)):
            if box is None:
                continue
            patches.append(_window_patch(sample.scene, box))
            labels.append(0)
    return np.stack(patches), np.array(labels, dtype=np.int64)


# === 保存・読み込み ===

def save_dataset(path, x, y):
    """パッチは k/255 の値なので uint8 で保存する"""
    path = Path(path)
    u8 = np.clip(imaging.round_half_up(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)
    np.savez_compressed(path, X=u8, y=np.asarray(y, dtype=np.int64))
    return path


def load_dataset(path):
    with np.load(Path(path)) as data:
        return data["X"].astype(np.float64) / 255.0, data["y"].astype(np.int64)


def dataset_checksum(x, y):
    u8 = np.clip(imaging.round_half_up(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)
    h = hashlib.sha256()
    h.update(u8.tobytes())
    h.update(np.asarray(y, dtype="<i8").tobytes())
    return h.hexdigest()


# === ベンチマーク ===

def tier_counts(n):
    """ティアごとのシーン数（端数は最後のティアに寄せる）"""
    names = list(BENCHMARK_TIERS)
    counts = {}
    for name in names[:-1]:
        counts[name] = int(imaging.round_half_up(n * BENCHMARK_TIERS[name]["share"]))
    counts[names[-1]] = n - sum(counts.values())
    return counts


def make_benchmark_samples(n, seed):
    """ベンチマーク用シーンを生成する（ファイルには書かない）"""
    if n < 1:
        raise ValueError(f"n は1以上である必要があります: {n}")
    tiers = [name for name, count in tier_counts(n).items() for _ in range(count)]
    rng = np.random.default_rng(seed)
    rng.shuffle(tiers)

    samples = []
    for i, tier in enumerate(tqdm(tiers, desc="ベンチマーク生成")):
        srng = np.random.default_rng([seed, i])
        plate = render_plate(random_plate_spec(srng, tier), int(srng.integers(2**32)))
        samples.append(compose_scene(plate, SCENE_SIZE, int(srng.integers(2**32)), tier=tier))
    return samples


def make_benchmark(n, seed, out_dir):
    """scenes/NNNN.pgm と manifest.tsv を書き出す"""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"出力先ディレクトリがありません: {out_dir}")
    scene_dir = out_dir / "scenes"
    scene_dir.mkdir(exist_ok=True)

    samples = make_benchmark_samples(n, seed)
    rows = []
    for i, sample in enumerate(samples):
        filename = f"scenes/{i:04d}.pgm"
        imaging.write_pgm(sample.scene, out_dir / filename)
        b = sample.gt_box
        rows.append([filename, b.x, b.y, b.w, b.h, sample.gt_text, sample.tier])

    manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    manifest_path = out_dir / "manifest.tsv"
    manifest.to_csv(manifest_path, sep="\t", index=False, lineterminator="\n")
    return samples, manifest_path


def file_checksum(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
