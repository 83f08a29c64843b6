"""
训练曲线：accuracy-vs-epoch 与 loss-vs-epoch（训练 + 验证两条曲线）

图像之外同时写出逐序列的数据文件（每行 ``epoch<TAB>value``），
无需重新训练即可重画。
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib.pyplot as plt

from convoher2.errors import EmptyHistory
from convoher2.training.history import TrainHistory

SERIES = ("train_accuracy", "val_accuracy", "train_loss", "val_loss")


@dataclass
class CurveArtifacts:
    accuracy_figure: Path
    loss_figure: Path
    series_files: dict[str, Path] = field(default_factory=dict)


def save_series(points: list[tuple[int, float]], path: str | Path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{epoch}\t{value!r}\n" for epoch, value in points), encoding="utf-8")
    return path


def load_series(path: str | Path) -> list[tuple[int, float]]:
    points = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            epoch, value = line.split("\t")
            points.append((int(epoch), float(value)))
    return points


def _points(history: TrainHistory, name: str) -> list[tuple[int, float]]:
    return [(m.epoch, getattr(m, name)) for m in history.epochs if getattr(m, name) is not None]


def _plot(history: TrainHistory, metric: str, title: str, save_path: Path, show: bool) -> Path:
    fig, ax = plt.subplots(figsize=(8, 5))
    for split, style in (("train", "-o"), ("val", "-s")):
        points = _points(history, f"{split}_{metric}")
        if points:
            epochs, values = zip(*points)
            # 单点序列也要可见
            ax.plot(epochs, values, style, label=split, markersize=3 if len(points) > 1 else 6)

    ax.set_title(title, fontsize=14, fontweight="bold")
    ax.set_xlabel("Epoch")
    ax.set_ylabel(metric.capitalize())
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()

    fig.savefig(save_path, dpi=300, bbox_inches="tight")
    print(f"📊 曲线已保存到: {save_path}")
    if show:
        plt.show()
    plt.close(fig)
    return save_path


def plot_curves(
    history: TrainHistory,
    out_dir: str | Path,
    title_prefix: Optional[str] = None,
    show: bool = False,
) -> CurveArtifacts:
    """
    绘制准确率与损失曲线，并写出原始序列

    Args:
        history: 训练历史
        out_dir: 输出目录
        title_prefix: 标题前缀（如 "IHC"）
        show: 是否弹出窗口

    Raises:
        EmptyHistory: 历史为空

    Example:
        >>> plot_curves(history, "runs/ihc")  # accuracy.png, loss.png, *.tsv
    """
    if not history.epochs:
        raise EmptyHistory("训练历史为空，无法绘制曲线")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = f"{title_prefix} " if title_prefix else ""

    series_files = {}
    for name in SERIES:
        points = _points(history, name)
        if points:
            series_files[name] = save_series(points, out_dir / f"{name}.tsv")

    return CurveArtifacts(
        accuracy_figure=_plot(history, "accuracy", f"{prefix}Accuracy", out_dir / "accuracy.png", show),
        loss_figure=_plot(history, "loss", f"{prefix}Loss", out_dir / "loss.png", show),
        series_files=series_files,
    )
