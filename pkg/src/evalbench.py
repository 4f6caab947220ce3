"""
評価スクリプト
検出の適合率・再現率と、最長共通部分列による文字列スコアを集計する
"""
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

import imaging
import recognizer
from config import EVAL_IOU_THRESH, MANIFEST_COLUMNS

RECORD_COLUMNS = ["id", "tier", "matched", "iou", "score", "pred_text", "gt_text", "plate_score", "exact"]


class ManifestError(ValueError):
    """マニフェストの形式エラー（line は1始まりの行番号、ヘッダが1行目）"""

    def __init__(self, line, message):
        super().__init__(f"manifest {line}行目: {message}")
        self.line = line


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    mean_score: float
    exact_rate: float
    records: pd.DataFrame
    per_tier: dict = field(default_factory=dict)

    def summary(self):
        """key=value 形式の要約（順序固定）"""
        items = {
            "scenes": len(self.records),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "mean_plate_score": self.mean_score,
            "exact_match_rate": self.exact_rate,
        }
        for tier, stats in self.per_tier.items():
            items[f"tier.{tier}.scenes"] = stats["scenes"]
            items[f"tier.{tier}.mean_plate_score"] = stats["mean_plate_score"]
            items[f"tier.{tier}.exact_match_rate"] = stats["exact_match_rate"]
        return items


# === 検出の評価 ===

def match_detections(dets, gts, iou_thresh=EVAL_IOU_THRESH):
    """スコアの高い順に、未対応の正解のうち IoU 最大のものへ割り当てる"""
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"IoU しきい値は (0, 1] の範囲です: {iou_thresh}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].bbox.x, dets[i].bbox.y))
    used = set()
    assignment = {}
    tp = fp = 0
    for i in order:
        best, best_iou = None, 0.0
        for j, gt in enumerate(gts):
            if j in used:
                continue
            v = imaging.iou(dets[i].bbox, gt)
            if v > best_iou:
                best, best_iou = j, v
        if best is not None and best_iou >= iou_thresh:
            used.add(best)
            assignment[i] = best
            tp += 1
        else:
            fp += 1
    return {"tp": tp, "fp": fp, "fn": len(gts) - len(used), "assignment": assignment}


def precision_recall(tp, fp, fn):
    """検出が0件なら適合率 1.0、正解が0件なら再現率 1.0"""
    if min(tp, fp, fn) < 0:
        raise ValueError(f"件数が負です: tp={tp}, fp={fp}, fn={fn}")
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    return precision, recall


# === 認識の評価 ===

def lcs_len(a, b):
    """最長共通部分列の長さ（動的計画法）"""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, start=1):
            if ca == cb:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def plate_score(pred, gt):
    """LCS 長を長い方の文字列長で割る。未検出（pred=None）は 0"""
    if not gt:
        raise ValueError("正解文字列が空です")
    if pred is None:
        return 0.0
    pred = recognizer.normalize_text(pred)
    gt = recognizer.normalize_text(gt)
    return lcs_len(pred, gt) / max(len(pred), len(gt))


# === マニフェスト ===

def _parser_line(error):
    m = re.search(r"line (\d+)", str(error))
    return int(m.group(1)) if m else 1


def _int_field(row, name, line, minimum):
    try:
        value = int(row[name])
    except ValueError:
        raise ManifestError(line, f"{name} が整数ではありません: {row[name]!r}") from None
    if value < minimum:
        raise ManifestError(line, f"{name} は {minimum} 以上である必要があります: {value}")
    return value


def load_manifest(path):
    """manifest.tsv を読み込み、型と値を検証した DataFrame を返す"""
    path = Path(path)
    try:
        raw = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise ManifestError(_parser_line(e), f"TSV として読めません ({e})") from e
    except pd.errors.EmptyDataError as e:
        raise ManifestError(1, "ヘッダがありません") from e

    if list(raw.columns) != MANIFEST_COLUMNS:
        raise ManifestError(1, f"列が一致しません: {list(raw.columns)} (期待値 {MANIFEST_COLUMNS})")

    rows = []
    for i, row in enumerate(raw.to_dict("records")):
        line = i + 2
        if not row["filename"]:
            raise ManifestError(line, "filename が空です")
        x = _int_field(row, "x", line, 0)
        y = _int_field(row, "y", line, 0)
        w = _int_field(row, "w", line, 1)
        h = _int_field(row, "h", line, 1)
        if not row["text"]:
            raise ManifestError(line, "text が空です")
        try:
            text = recognizer.normalize_text(row["text"])
        except recognizer.UnsupportedCharacterError as e:
            raise ManifestError(line, str(e)) from e
        rows.append([row["filename"], x, y, w, h, text, row["tier"] or "unknown"])

    return pd.DataFrame(rows, columns=MANIFEST_COLUMNS)


def manifest_boxes(manifest):
    return [imaging.BBox(int(r.x), int(r.y), int(r.w), int(r.h)) for r in manifest.itertuples()]


# === 集計 ===

def evaluate(readings_per_scene, manifest, iou_thresh=EVAL_IOU_THRESH):
    """シーンごとの読み取り結果（スコア順）とマニフェストから EvalReport を作る"""
    if len(readings_per_scene) != len(manifest):
        raise ValueError(f"シーン数が一致しません: {len(readings_per_scene)} != {len(manifest)}")

    tp = fp = fn = 0
    records = []
    for readings, gt_box, row in zip(readings_per_scene, manifest_boxes(manifest), manifest.itertuples()):
        match = match_detections([r.detection for r in readings], [gt_box], iou_thresh)
        tp += match["tp"]
        fp += match["fp"]
        fn += match["fn"]

        # 認識は最もスコアの高い読み取りだけで採点する
        top = max(readings, key=lambda r: r.detection.score, default=None)
        overlap = imaging.iou(top.detection.bbox, gt_box) if top else 0.0
        matched = top is not None and overlap >= iou_thresh
        pred = top.text if matched else None
        score = plate_score(pred, row.text)
        records.append({
            "id": row.filename,
            "tier": row.tier,
            "matched": matched,
            "iou": overlap,
            "score": top.detection.score if top else 0.0,
            "pred_text": top.text if top else "",
            "gt_text": row.text,
            "plate_score": score,
            "exact": matched and pred == row.text,
        })

    df = pd.DataFrame(records, columns=RECORD_COLUMNS)
    precision, recall = precision_recall(tp, fp, fn)
    mean_score = float(df["plate_score"].mean()) if len(df) else 0.0
    exact_rate = float(df["exact"].mean()) if len(df) else 0.0

    per_tier = {}
    for tier, group in df.groupby("tier", sort=True):
        per_tier[tier] = {
            "scenes": len(group),
            "mean_plate_score": float(group["plate_score"].mean()),
            "exact_match_rate": float(group["exact"].mean()),
        }

    return EvalReport(
        tp=tp, fp=fp, fn=fn,
        precision=precision, recall=recall,
        mean_score=mean_score, exact_rate=exact_rate,
        records=df, per_tier=per_tier,
    )


def _format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return f"{v:.6f}"
    return str(v)


def format_report(report):
    """要約ブロック、空行、シーンごとの TSV"""
    lines = [f"{k}={_format_value(v)}" for k, v in report.summary().items()]
    lines.append("")
    lines.append("\t".join(RECORD_COLUMNS))
    for rec in report.records.to_dict("records"):
        lines.append("\t".join(_format_value(rec[c]) for c in RECORD_COLUMNS))
    return "\n".join(lines) + "\n"


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_report(report))
    return path


def read_report(path):
    """write_report の出力を (要約 dict, レコード DataFrame) に戻す"""
    text = Path(path).read_text(encoding="utf-8")
    head, _, body = text.partition("\n\n")
    summary = dict(line.split("=", 1) for line in head.splitlines())
    records = pd.read_csv(io.StringIO(body), sep="\t", dtype=str, keep_default_na=False)
    return summary, records
