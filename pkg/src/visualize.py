"""
可視化スクリプト
学習曲線・ベンチマーク結果・検出結果をグラフとして出力する
"""
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")

import matplotlib.patches as mpatches
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from config import FIGURE_DIR, MODEL_FILES

ROLE_COLORS = {
    "detector": "#4169E1",
    "filter": "#2E8B57",
    "recognizer": "#DC143C",
}

# スタイル設定
sns.set_theme(style="whitegrid", font_scale=1.1)


def history_path(model_path):
    """モデルファイルに対応する学習履歴 CSV"""
    model_path = Path(model_path)
    return model_path.with_name(model_path.name + ".history.csv")


def plot_loss_history(histories, out_dir=FIGURE_DIR):
    """役割ごとのエポック別損失と学習精度"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 2, figsize=(14, 5))

    for role, df in histories.items():
        color = ROLE_COLORS.get(role)
        axes[0].plot(df["epoch"], df["loss"], marker="o", color=color, label=role)
        axes[1].plot(df["epoch"], df["accuracy"], marker="o", color=color, label=role)

    axes[0].set_title("Training loss", fontsize=14, fontweight="bold")
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("cross-entropy")
    axes[1].set_title("Training accuracy", fontsize=14, fontweight="bold")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylim(0, 1.02)
    for ax in axes:
        ax.legend()
    plt.tight_layout()

    path = out_dir / "01_loss_history.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    print(f"  保存: {path.name}", file=sys.stderr)
    return path


def plot_benchmark_summary(summary, records, out_dir=FIGURE_DIR):
    """全体指標の棒グラフとティア別の文字列スコア分布"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 2, figsize=(16, 6))

    metrics = ["precision", "recall", "mean_plate_score", "exact_match_rate"]
    values = [float(summary[m]) for m in metrics]
    bars = axes[0].bar(metrics, values, color=sns.color_palette("deep", len(metrics)))
    for bar, v in zip(bars, values):
        axes[0].text(bar.get_x() + bar.get_width() / 2, v + 0.01, f"{v:.3f}", ha="center", fontsize=10)
    axes[0].set_ylim(0, 1.1)
    axes[0].set_title("Benchmark summary", fontsize=14, fontweight="bold")

    df = records.copy()
    df["plate_score"] = df["plate_score"].astype(float)
    sns.boxplot(data=df, x="tier", y="plate_score", ax=axes[1], color="#87CEEB")
    sns.stripplot(data=df, x="tier", y="plate_score", ax=axes[1], color="#333333", size=3, alpha=0.5)
    axes[1].set_ylim(-0.05, 1.05)
    axes[1].set_title("Plate score by tier", fontsize=14, fontweight="bold")
    plt.tight_layout()

    path = out_dir / "02_benchmark_summary.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    print(f"  保存: {path.name}", file=sys.stderr)
    return path


def plot_detections(scene, readings, gt_box=None, path=None):
    """シーンに検出枠（青）と正解枠（緑）を重ねる"""
    path = Path(path or FIGURE_DIR / "03_detections.png")
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.imshow(scene, cmap="gray", vmin=0, vmax=255)

    if gt_box is not None:
        ax.add_patch(mpatches.Rectangle(
            (gt_box.x, gt_box.y), gt_box.w, gt_box.h, fill=False, edgecolor="#2E8B57", linewidth=2,
        ))
    for r in readings:
        b = r.detection.bbox
        ax.add_patch(mpatches.Rectangle((b.x, b.y), b.w, b.h, fill=False, edgecolor="#4169E1", linewidth=2))
        ax.text(b.x, b.y - 3, f"{r.text or '-'} ({r.detection.score:.2f})", color="#4169E1", fontsize=10)
    ax.set_axis_off()
    plt.tight_layout()

    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    print(f"  保存: {path.name}", file=sys.stderr)
    return path


def create_all_visualizations(model_files=None, report_path=None, out_dir=FIGURE_DIR):
    """学習履歴とベンチマークレポートから図をまとめて作る"""
    import evalbench

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_files = {**MODEL_FILES, **(model_files or {})}

    print("=" * 60)
    print("可視化を実行中...")
    print("=" * 60)

    histories = {}
    for role, model_path in model_files.items():
        try:
            histories[role] = pd.read_csv(history_path(model_path))
        except FileNotFoundError:
            print(f"  {history_path(model_path).name} が見つかりません、スキップ")
    created = []
    if histories:
        created.append(plot_loss_history(histories, out_dir))

    if report_path is not None:
        try:
            summary, records = evalbench.read_report(report_path)
            created.append(plot_benchmark_summary(summary, records, out_dir))
        except FileNotFoundError:
            print(f"  {Path(report_path).name} が見つかりません、スキップ")

    print("\n可視化完了!")
    print(f"出力先: {out_dir}")
    print("=" * 60)
    return created
