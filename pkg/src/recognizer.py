"""
文字認識
文字/非文字フィルタ（2クラス）と35クラスの文字分類、ラベル空間の定義
"""
from dataclasses import dataclass

import numpy as np

import imaging
import nnet
from config import ALPHABET, CHARNESS_THRESH, PATCH_SIZE

N_CLASSES = len(ALPHABET)
_CHAR_TO_LABEL = {c: i for i, c in enumerate(ALPHABET)}
# O と 0 は同じクラスとして扱う
_CHAR_TO_LABEL["O"] = _CHAR_TO_LABEL["0"]


class UnsupportedCharacterError(ValueError):
    """小文字・記号などラベル空間にない文字"""


@dataclass(frozen=True)
class CharPrediction:
    label: int
    char: str
    confidence: float
    charness: float
    segment: object


def char_to_label(c):
    if c not in _CHAR_TO_LABEL:
        raise UnsupportedCharacterError(f"対応していない文字です: {c!r}")
    return _CHAR_TO_LABEL[c]


def label_to_char(i):
    if not 0 <= int(i) < N_CLASSES:
        raise ValueError(f"ラベルが範囲外です: {i}")
    return ALPHABET[int(i)]


def normalize_text(text):
    """正解文字列を正規形にする（O → 0、未対応文字はエラー）"""
    return "".join(label_to_char(char_to_label(c)) for c in text)


def is_canonical(text):
    return all(c in ALPHABET for c in text)


def _segment_bbox(seg):
    return seg if isinstance(seg, imaging.BBox) else seg.bbox


def prepare_patch(plate, seg):
    """文字領域を正方形にパディングして 24x24 の [0,1] テンソルにする"""
    plate = imaging.as_gray(plate)
    bbox = _segment_bbox(seg)
    patch = imaging.crop(plate, bbox)
    h, w = patch.shape

    # 背景色は切り出し領域の外周の中央値
    border = np.concatenate([patch[0], patch[-1], patch[:, 0], patch[:, -1]])
    fill = int(np.median(border))

    side = max(h, w)
    square = np.full((side, side), fill, dtype=np.uint8)
    top = (side - h) // 2
    left = (side - w) // 2
    square[top:top + h, left:left + w] = patch

    resized = imaging.resize_bilinear(square, PATCH_SIZE, PATCH_SIZE)
    return (resized.astype(np.float64) / 255.0)[None]


def prepare_patches(plate, segs):
    if not segs:
        return np.zeros((0, 1, PATCH_SIZE, PATCH_SIZE))
    return np.stack([prepare_patch(plate, s) for s in segs])


def charness_batch(filter_net, patches):
    """文字らしさの確率（クラス1）"""
    return nnet.predict_proba(filter_net, patches)[:, 1]


def classify_charness(filter_net, patch):
    return float(charness_batch(filter_net, patch)[0])


def classify_batch(recog_net, patches):
    """(ラベル配列, 信頼度配列)。同値なら小さいラベル"""
    probs = nnet.predict_proba(recog_net, patches)
    labels = probs.argmax(axis=1)
    return labels, probs[np.arange(len(labels)), labels]


def classify_char(recog_net, patch):
    labels, conf = classify_batch(recog_net, patch)
    label = int(labels[0])
    return label, label_to_char(label), float(conf[0])


def recognize_segments(filter_net, recog_net, plate, segs, charness_thresh=CHARNESS_THRESH):
    """フィルタを通った分割領域だけを分類して CharPrediction を返す"""
    patches = prepare_patches(plate, segs)
    if len(patches) == 0:
        return []
    charness = charness_batch(filter_net, patches)
    keep = np.flatnonzero(charness >= charness_thresh)
    if keep.size == 0:
        return []

    labels, conf = classify_batch(recog_net, patches[keep])
    return [
        CharPrediction(
            label=int(label),
            char=label_to_char(label),
            confidence=float(c),
            charness=float(charness[k]),
            segment=segs[k],
        )
        for k, label, c in zip(keep, labels, conf)
    ]
