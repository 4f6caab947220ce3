"""
コマンドラインツール
  python src/cli.py synth {chars,negatives,plates,benchmark} --n N --out-dir DIR
  python src/cli.py train {detector,filter,recognizer} --data-dir DIR --out MODEL
  python src/cli.py read IMAGE [IMAGE ...]
  python src/cli.py bench DIR --report PATH
  python src/cli.py gradcheck
  python src/cli.py plot --report PATH

終了コード: 0 成功 / 1 チェック失敗 / 2 入出力 / 3 モデル / 4 マニフェスト
"""
import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

import detector
import evalbench
import imaging
import nnet
import pipeline
import segmenter
import synthgen
import visualize
from config import (
    CHARNESS_THRESH,
    DATA_DIR,
    DEFAULT_SEED,
    EVAL_IOU_THRESH,
    EXIT_CHECK_FAILED,
    EXIT_IO,
    EXIT_MANIFEST,
    EXIT_MODEL,
    EXIT_OK,
    FIGURE_DIR,
    MODEL_FILES,
    OUTPUT_DIR,
    TRAIN_HOLDOUT,
)

DATASET_FILES = {
    "chars": "chars.npz",
    "negatives": "negatives.npz",
    "plates": "plates.npz",
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int = DEFAULT_SEED
    jobs: int = 1
    model_files: dict = field(default_factory=lambda: dict(MODEL_FILES))
    detector_config: detector.DetectorConfig = detector.DetectorConfig()
    segmenter_config: segmenter.SegmenterConfig = segmenter.DEFAULT_CONFIG
    charness_thresh: float = CHARNESS_THRESH
    match_iou: float = EVAL_IOU_THRESH
    train_config: nnet.TrainConfig = nnet.TrainConfig()

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError(f"--jobs は1以上です: {self.jobs}")

    @classmethod
    def from_args(cls, args):
        cfg = cls(command=args.command, seed=args.seed, jobs=getattr(args, "jobs", 1))
        model_files = dict(cfg.model_files)
        for role in model_files:
            path = getattr(args, f"{role}_model", None)
            if path is not None:
                model_files[role] = Path(path)

        det_overrides = {
            name: getattr(args, name)
            for name in ("scale_step", "stride", "score_thresh", "iou_thresh")
            if getattr(args, name, None) is not None
        }
        if getattr(args, "no_refine", False):
            det_overrides["refine"] = False
        train_overrides = {
            name: getattr(args, name)
            for name in ("learning_rate", "momentum", "batch_size", "epochs")
            if getattr(args, name, None) is not None
        }
        return replace(
            cfg,
            model_files=model_files,
            detector_config=replace(cfg.detector_config, **det_overrides),
            charness_thresh=_override(args, "charness_thresh", cfg.charness_thresh),
            match_iou=_override(args, "match_iou", cfg.match_iou),
            train_config=replace(cfg.train_config, seed=args.seed, **train_overrides),
        )


def _override(args, name, default):
    value = getattr(args, name, None)
    return default if value is None else value


def log(*args):
    """進捗表示（標準出力はレコード専用なので標準エラーへ）"""
    print(*args, file=sys.stderr)


def _load_models(cfg):
    return pipeline.load_bundle(
        cfg.model_files,
        detector_config=cfg.detector_config,
        segmenter_config=cfg.segmenter_config,
        charness_thresh=cfg.charness_thresh,
    )


# === synth ===

def cmd_synth(cfg, args):
    out_dir = Path(args.out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"出力先ディレクトリがありません: {out_dir}")

    log("=" * 60)
    log(f"合成データ生成: {args.kind} (n={args.n}, seed={cfg.seed})")
    log("=" * 60)

    if args.kind == "benchmark":
        samples, manifest_path = synthgen.make_benchmark(args.n, cfg.seed, out_dir)
        tiers = pd.Series([s.tier for s in samples]).value_counts().sort_index()
        print(
            f"benchmark\tscenes={len(samples)}\t"
            + "\t".join(f"{t}={c}" for t, c in tiers.items())
            + f"\tsha256={synthgen.file_checksum(manifest_path)}"
        )
        return EXIT_OK

    make = {
        "chars": synthgen.make_char_dataset,
        "negatives": synthgen.make_negative_dataset,
        "plates": synthgen.make_plate_dataset,
    }[args.kind]
    x, y = make(args.n, cfg.seed)
    path = synthgen.save_dataset(out_dir / DATASET_FILES[args.kind], x, y)
    print(f"{args.kind}\tpatches={len(x)}\tpath={path.name}\tsha256={synthgen.dataset_checksum(x, y)}")
    return EXIT_OK


# === train ===

def _load_training_data(role, data_dir, seed):
    data_dir = Path(data_dir)
    if role == "detector":
        return synthgen.load_dataset(data_dir / DATASET_FILES["plates"])
    x_char, y_char = synthgen.load_dataset(data_dir / DATASET_FILES["chars"])
    if role == "recognizer":
        return x_char, y_char

    # フィルタ: 文字=1、非文字=0。多い方を少ない方に合わせて間引く
    x_neg, _ = synthgen.load_dataset(data_dir / DATASET_FILES["negatives"])
    rng = np.random.default_rng(seed)
    n = min(len(x_char), len(x_neg))
    x_char = x_char[np.sort(rng.permutation(len(x_char))[:n])]
    x_neg = x_neg[np.sort(rng.permutation(len(x_neg))[:n])]
    x = np.concatenate([x_char, x_neg])
    y = np.concatenate([np.ones(len(x_char), dtype=np.int64), np.zeros(len(x_neg), dtype=np.int64)])
    return x, y


def cmd_train(cfg, args):
    role = args.role
    out = Path(args.out) if args.out else cfg.model_files[role]

    print("=" * 60)
    print(f"学習: {role} (seed={cfg.seed})")
    print("=" * 60)

    print("\n[1/3] データ読み込み...")
    x, y = _load_training_data(role, args.data_dir, cfg.seed)
    if len(x) == 0:
        raise nnet.EmptyDatasetError(f"学習データが空です: {args.data_dir}")
    x_train, y_train, x_hold, y_hold = nnet.split_dataset(x, y, args.holdout, cfg.seed)
    print(f"  学習 {len(x_train)} 件 / 検証 {len(x_hold)} 件")

    print("\n[2/3] 学習中...")
    net = nnet.build_network(role, seed=cfg.seed)
    trained, history = nnet.train(net, x_train, y_train, cfg.train_config, verbose=True)

    print("\n[3/3] 保存...")
    nnet.save_model(trained, out)
    pd.DataFrame(history).to_csv(visualize.history_path(out), index=False, lineterminator="\n")
    print(f"  モデル: {out}")

    if len(x_hold):
        print(f"\nheld_out_accuracy={nnet.accuracy(trained, x_hold, y_hold):.4f}")
    print("=" * 60)
    return EXIT_OK


# === read ===

def format_reading_line(name, readings):
    """1画像1行: ファイル名、プレート数、プレートごとに 矩形・スコア・文字列・文字ごとの信頼度"""
    fields = [str(name), str(len(readings))]
    for r in readings:
        b = r.detection.bbox
        fields.append(f"{b.x},{b.y},{b.w},{b.h}")
        fields.append(f"{r.detection.score:.4f}")
        fields.append(r.text or "-")
        fields.append(",".join(f"{c.confidence:.4f}" for c in r.chars) or "-")
    return "\t".join(fields)


def cmd_read(cfg, args):
    models = _load_models(cfg)
    scenes = [imaging.read_image(p) for p in args.images]
    log(f"読み取り: {len(scenes)} 枚 (jobs={cfg.jobs})")
    for path, readings in zip(args.images, pipeline.process_images(models, scenes, cfg.jobs)):
        print(format_reading_line(Path(path).name, readings))
    return EXIT_OK


# === bench ===

def run_benchmark(cfg, bench_dir, models=None):
    bench_dir = Path(bench_dir)
    manifest = evalbench.load_manifest(bench_dir / "manifest.tsv")
    models = models or _load_models(cfg)

    log("=" * 60)
    log(f"ベンチマーク: {len(manifest)} シーン")
    log("=" * 60)
    scenes = [imaging.read_image(bench_dir / name) for name in manifest["filename"]]
    readings = pipeline.process_images(models, scenes, cfg.jobs)
    return evalbench.evaluate(readings, manifest, cfg.match_iou), scenes, readings, manifest


def cmd_bench(cfg, args):
    report, scenes, readings, manifest = run_benchmark(cfg, args.bench_dir)
    path = evalbench.write_report(report, args.report)
    log(f"レポート: {path}")

    summary = report.summary()
    for key in ("precision", "recall", "mean_plate_score", "exact_match_rate"):
        print(f"{key}={summary[key]:.6f}")

    if args.figures:
        figure_dir = Path(args.figure_dir)
        visualize.plot_benchmark_summary(summary, report.records, figure_dir)
        if scenes:
            boxes = evalbench.manifest_boxes(manifest)
            visualize.plot_detections(scenes[0], readings[0], boxes[0], figure_dir / "03_detections.png")
    return EXIT_OK


# === gradcheck ===

def cmd_gradcheck(cfg, args):
    log("勾配チェック（中心差分）...")
    table = nnet.gradcheck_suite(seed=cfg.seed, perturb=args.perturb)
    print("kind\tmax_rel_error\tpassed")
    for row in table.itertuples():
        print(f"{row.kind}\t{row.max_rel_error:.3e}\t{'ok' if row.passed else 'FAIL'}")
    return EXIT_OK if bool(table["passed"].all()) else EXIT_CHECK_FAILED


# === plot ===

def cmd_plot(cfg, args):
    visualize.create_all_visualizations(cfg.model_files, args.report, args.out_dir)
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"1以上の整数を指定してください: {text}")
    return value


def _add_detection_overrides(p):
    p.add_argument("--detector-model")
    p.add_argument("--filter-model")
    p.add_argument("--recognizer-model")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--stride", type=int)
    p.add_argument("--scale-step", type=float)
    p.add_argument("--score-thresh", type=float)
    p.add_argument("--iou-thresh", type=float, help="NMS の IoU しきい値")
    p.add_argument("--no-refine", action="store_true", help="検出矩形の補正をしない")
    p.add_argument("--charness-thresh", type=float)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)

    parser = argparse.ArgumentParser(description="ナンバープレート検出・認識ツールキット")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="合成データを生成する")
    p.add_argument("kind", choices=["chars", "negatives", "plates", "benchmark"])
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--out-dir", default=str(DATA_DIR))
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="ネットワークを学習する")
    p.add_argument("role", choices=list(MODEL_FILES))
    p.add_argument("--data-dir", default=str(DATA_DIR))
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--holdout", type=float, default=TRAIN_HOLDOUT)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("read", parents=[common], help="画像からプレートを読む")
    p.add_argument("images", nargs="+")
    _add_detection_overrides(p)
    p.set_defaults(handler=cmd_read)

    p = sub.add_parser("bench", parents=[common], help="ベンチマークを評価する")
    p.add_argument("bench_dir")
    p.add_argument("--report", default=str(OUTPUT_DIR / "report.txt"))
    p.add_argument("--match-iou", type=float, help="評価時の IoU しきい値")
    p.add_argument("--figures", action="store_true")
    p.add_argument("--figure-dir", default=str(FIGURE_DIR))
    _add_detection_overrides(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("gradcheck", parents=[common], help="全層の勾配を数値微分と比較する")
    p.add_argument("--perturb", action="store_true", help="解析勾配をわざと崩す（検査用）")
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("plot", parents=[common], help="学習履歴とレポートを図にする")
    p.add_argument("--report")
    p.add_argument("--out-dir", default=str(FIGURE_DIR))
    p.add_argument("--detector-model")
    p.add_argument("--filter-model")
    p.add_argument("--recognizer-model")
    p.set_defaults(handler=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
    except ValueError as e:
        parser.error(str(e))
    try:
        return args.handler(cfg, args)
    except evalbench.ManifestError as e:
        print(f"エラー: {e}", file=sys.stderr)
        return EXIT_MANIFEST
    except (nnet.ModelFormatError, nnet.ShapeMismatchError, nnet.EmptyDatasetError) as e:
        print(f"エラー: {e}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as e:
        print(f"エラー: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
