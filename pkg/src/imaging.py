"""
画像の基本型と古典的な画像処理
グレースケール画像は (高さ, 幅) の uint8 配列、ビットマスクは bool 配列で表す
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from config import LUMA_WEIGHTS

DARK_ON_LIGHT = "dark_on_light"
LIGHT_ON_DARK = "light_on_dark"
POLARITIES = (DARK_ON_LIGHT, LIGHT_ON_DARK)

# 8近傍連結
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class DegenerateImageError(ValueError):
    """輝度が1種類しかない画像（Otsu が定義できない）"""


class ImageFormatError(OSError):
    """画像ファイルが読めない"""


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"矩形の幅・高さは正である必要があります: {self}")

    @property
    def area(self):
        return self.w * self.h

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class Component:
    """連結成分: 外接矩形・画素数・矩形内のマスク"""
    bbox: BBox
    area: int
    mask: np.ndarray

    @property
    def pixels(self):
        """画像座標での (y, x) 配列"""
        ys, xs = np.nonzero(self.mask)
        return np.stack([ys + self.bbox.y, xs + self.bbox.x], axis=1)


def as_gray(img):
    """2次元 uint8 配列であることを確認して返す"""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"グレースケール画像は空でない2次元配列である必要があります: shape={arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return arr


def round_half_up(values):
    """四捨五入（0.5 は切り上げ）"""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def to_grayscale(r, g, b):
    """RGB 各チャネルから輝度画像を作る"""
    r, g, b = (np.asarray(c, dtype=np.float64) for c in (r, g, b))
    if not (r.shape == g.shape == b.shape):
        raise ValueError(f"チャネルのサイズが一致しません: {r.shape}, {g.shape}, {b.shape}")
    wr, wg, wb = LUMA_WEIGHTS
    luma = round_half_up(wr * r + wg * g + wb * b)
    return np.clip(luma, 0, 255).astype(np.uint8)


def rgb_to_gray(rgb):
    """(高さ, 幅, 3) 配列版"""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"RGB 画像の形状が不正です: {rgb.shape}")
    return to_grayscale(rgb[..., 0], rgb[..., 1], rgb[..., 2])


def _bilinear_axis(src_len, dst_len):
    """画素中心基準の座標対応（端はクランプ）"""
    pos = (np.arange(dst_len, dtype=np.float64) + 0.5) * (src_len / dst_len) - 0.5
    pos = np.clip(pos, 0.0, src_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src_len - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_float(arr, w, h):
    """バイリニア補間（float のまま返す）"""
    if w <= 0 or h <= 0:
        raise ValueError(f"リサイズ先のサイズが不正です: {w}x{h}")
    arr = np.asarray(arr, dtype=np.float64)
    src_h, src_w = arr.shape
    if (src_w, src_h) == (w, h):
        return arr.copy()

    y0, y1, fy = _bilinear_axis(src_h, h)
    x0, x1, fx = _bilinear_axis(src_w, w)

    rows = arr[y0] * (1.0 - fy)[:, None] + arr[y1] * fy[:, None]
    return rows[:, x0] * (1.0 - fx)[None, :] + rows[:, x1] * fx[None, :]


def resize_bilinear(img, w, h):
    """バイリニア補間によるリサイズ"""
    img = as_gray(img)
    out = resize_float(img, w, h)
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def between_class_variance(img):
    """しきい値 t=0..254 それぞれのクラス間分散"""
    img = as_gray(img)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    prob = hist / total

    omega = np.cumsum(prob)[:255]
    mu = np.cumsum(prob * np.arange(256))[:255]
    mu_total = mu[-1] + 255 * prob[255]

    denom = omega * (1.0 - omega)
    numer = (mu_total * omega - mu) ** 2
    sigma = np.zeros(255, dtype=np.float64)
    valid = denom > 0
    sigma[valid] = numer[valid] / denom[valid]
    return sigma


def otsu_threshold(img):
    """Otsu の方法でしきい値を求める（同値なら最小の t）"""
    img = as_gray(img)
    if np.unique(img).size < 2:
        raise DegenerateImageError("輝度が一定の画像にはしきい値を定義できません")
    sigma = between_class_variance(img)
    # np.argmax は最初の最大値を返す
    return int(np.argmax(sigma))


def binarize(img, t, polarity):
    """しきい値でビットマスクを作る"""
    img = as_gray(img)
    if polarity == DARK_ON_LIGHT:
        return img <= t
    if polarity == LIGHT_ON_DARK:
        return img > t
    raise ValueError(f"未知の極性です: {polarity}")


def connected_components(mask):
    """8近傍の連結成分を (x, y) 順で返す"""
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []

    areas = np.bincount(labels.ravel(), minlength=count + 1)
    components = []
    for label, slices in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = slices
        bbox = BBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start)
        local = labels[slices] == label
        components.append(Component(bbox=bbox, area=int(areas[label]), mask=local))

    components.sort(key=lambda c: (c.bbox.x, c.bbox.y))
    return components


def intersection_area(a, b):
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def iou(a, b):
    """2つの矩形の IoU"""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / float(a.area + b.area - inter)


def clamp_bbox(b, width, height):
    """画像範囲に切り詰める（範囲外なら None）"""
    x0, y0 = max(b.x, 0), max(b.y, 0)
    x1, y1 = min(b.x2, width), min(b.y2, height)
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1 - x0, y1 - y0)


def crop(img, b):
    """矩形で切り出す（はみ出した部分は切り詰め）"""
    img = as_gray(img)
    clamped = clamp_bbox(b, img.shape[1], img.shape[0])
    if clamped is None:
        raise ValueError(f"矩形が画像の外にあります: {b} (画像 {img.shape[1]}x{img.shape[0]})")
    return img[clamped.y:clamped.y2, clamped.x:clamped.x2].copy()


def expand_bbox(b, margin):
    """上下左右を幅・高さの margin 倍だけ広げる"""
    dx = int(round_half_up(b.w * margin))
    dy = int(round_half_up(b.h * margin))
    return BBox(b.x - dx, b.y - dy, b.w + 2 * dx, b.h + 2 * dy)


# === ファイル入出力（PGM / PPM） ===

def read_image(path):
    """画像を読み込みグレースケールで返す（PPM は輝度変換）"""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return np.array(im, dtype=np.uint8)
            return rgb_to_gray(np.array(im.convert("RGB"), dtype=np.uint8))
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"画像として読み込めません: {path} ({e})") from e


def read_rgb(path):
    """カラー画像 (高さ, 幅, 3) を読み込む"""
    path = Path(path)
    try:
        with Image.open(path) as im:
            return np.array(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"画像として読み込めません: {path} ({e})") from e


def write_pgm(img, path):
    """P5 バイナリ PGM として保存"""
    Image.fromarray(as_gray(img)).save(Path(path), format="PPM")


def write_ppm(rgb, path):
    """P6 バイナリ PPM として保存"""
    rgb = np.asarray(rgb, dtype=np.uint8)
    Image.fromarray(rgb).save(Path(path), format="PPM")
