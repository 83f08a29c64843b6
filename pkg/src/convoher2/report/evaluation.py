"""
评估报告：准确率、逐类别指标、混淆矩阵、检查点引用
"""
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from convoher2.data.manifest import DatasetManifest
from convoher2.enums import SCORE_LABELS, Split, StainModality
from convoher2.errors import CorruptArtifact
from convoher2.model.checkpoint import CheckpointMeta
from convoher2.model.features import FeatureStore
from convoher2.model.network import ModelHandle
from convoher2.report.confusion import CategoryMetrics, ConfusionMatrix, confusion
from convoher2.training.evaluate import predict_features, predict_split, score_predictions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluationReport:
    modality: Optional[StainModality]
    split: Split
    n_samples: int
    accuracy: float
    loss: float
    per_category: tuple[CategoryMetrics, ...]
    matrix: ConfusionMatrix
    checkpoint_ref: Optional[CheckpointMeta] = None
    created_at: str = ""

    def __post_init__(self):
        if self.n_samples != self.matrix.n:
            raise ValueError(f"n_samples={self.n_samples} 与混淆矩阵总数 {self.matrix.n} 不一致")
        if self.accuracy != self.matrix.accuracy:
            raise ValueError("accuracy 必须等于 trace / n_samples")

    def to_dict(self) -> dict:
        return {
            "modality": self.modality.value if self.modality else None,
            "split": self.split.value,
            "n_samples": self.n_samples,
            "accuracy": self.accuracy,
            "loss": self.loss,
            "per_category": [m.to_dict() for m in self.per_category],
            "confusion_matrix": self.matrix.to_list(),
            "checkpoint": self.checkpoint_ref.to_dict() if self.checkpoint_ref else None,
            "created_at": self.created_at,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationReport":
        """读取 save 写出的 JSON；逐类别指标由混淆矩阵重新计算"""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            matrix = ConfusionMatrix(data["confusion_matrix"])
            checkpoint = data.get("checkpoint")
            return cls(
                modality=StainModality.parse(data["modality"]) if data.get("modality") else None,
                split=Split.parse(data["split"]),
                n_samples=matrix.n,
                accuracy=matrix.accuracy,
                loss=float(data["loss"]),
                per_category=matrix.per_category(),
                matrix=matrix,
                checkpoint_ref=CheckpointMeta.from_dict(checkpoint) if checkpoint else None,
                created_at=data.get("created_at", ""),
            )
        except (OSError, KeyError, TypeError, ValueError) as e:
            raise CorruptArtifact(f"评估报告不可读: {path} ({e})") from e

    def render(self) -> str:
        """控制台文本：总体指标 + 逐类别表 + 混淆矩阵"""
        modality = self.modality.value if self.modality else "?"
        lines = [
            f"modality={modality} split={self.split.value} n={self.n_samples} "
            f"accuracy={self.accuracy:.4f} loss={self.loss:.4f}",
            "",
            f"{'score':<6} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}",
        ]
        for m in self.per_category:
            flag = " (undefined)" if m.precision_undefined or m.recall_undefined else ""
            lines.append(f"{m.score.label:<6} {m.precision:>9.4f} {m.recall:>9.4f} {m.f1:>9.4f} {m.support:>8d}{flag}")
        lines += ["", "confusion (rows=true, cols=predicted)", "      " + "".join(f"{s:>7}" for s in SCORE_LABELS)]
        for label, row in zip(SCORE_LABELS, self.matrix.to_list()):
            lines.append(f"{label:<6}" + "".join(f"{c:>7d}" for c in row))
        return "\n".join(lines)


def full_report(
    handle: ModelHandle,
    manifest: DatasetManifest,
    checkpoint_meta: Optional[CheckpointMeta] = None,
    split: Split = Split.TEST,
    store: Optional[FeatureStore] = None,
    workers: int = 4,
) -> EvaluationReport:
    """
    对整个划分做推理并生成评估报告

    Args:
        handle: 已加载检查点的模型
        manifest: 数据清单
        checkpoint_meta: 写入报告的检查点引用
        split: 评估的划分
        store: 给出时走特征缓存路径

    Raises:
        EmptySplit: 划分为空
    """
    if store is not None:
        pred = predict_features(handle, store, manifest, split)
    else:
        pred = predict_split(handle, manifest, split, workers=workers)

    score = score_predictions(pred.probabilities, pred.labels)
    matrix = confusion(pred.predicted, pred.labels)
    report = EvaluationReport(
        modality=manifest.modality,
        split=split,
        n_samples=matrix.n,
        accuracy=matrix.accuracy,
        loss=score.loss,
        per_category=matrix.per_category(),
        matrix=matrix,
        checkpoint_ref=checkpoint_meta,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    logger.info("评估完成: %s %s n=%d accuracy=%.4f", manifest.modality.value, split.value, report.n_samples, report.accuracy)
    return report
