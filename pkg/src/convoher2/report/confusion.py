"""
混淆矩阵与逐类别指标

行 = 真实类别，列 = 预测类别。
分母为 0 的 precision / recall 记为 0，并带 undefined 标记。
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from convoher2.enums import NUM_SCORES, Her2Score
from convoher2.errors import IndexOutOfRange, LengthMismatch


@dataclass(frozen=True)
class CategoryMetrics:
    score: Her2Score
    precision: float
    recall: float
    f1: float
    support: int
    precision_undefined: bool = False
    recall_undefined: bool = False

    def to_dict(self) -> dict:
        return {
            "score": self.score.label,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "precision_undefined": self.precision_undefined,
            "recall_undefined": self.recall_undefined,
        }


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # 4×4 int64

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (NUM_SCORES, NUM_SCORES) or np.any(counts < 0):
            raise ValueError(f"混淆矩阵应为 {NUM_SCORES}×{NUM_SCORES} 非负整数，实际 {counts.shape}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    @property
    def accuracy(self) -> float:
        return self.trace / self.n if self.n else 0.0

    @property
    def support(self) -> np.ndarray:
        """每个真实类别的样本数（行和）"""
        return self.counts.sum(axis=1)

    def per_category(self) -> tuple[CategoryMetrics, ...]:
        diag = np.diag(self.counts)
        col = self.counts.sum(axis=0)
        row = self.counts.sum(axis=1)
        metrics = []
        for k in range(NUM_SCORES):
            precision = diag[k] / col[k] if col[k] else 0.0
            recall = diag[k] / row[k] if row[k] else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            metrics.append(CategoryMetrics(
                score=Her2Score.from_index(k),
                precision=float(precision),
                recall=float(recall),
                f1=float(f1),
                support=int(row[k]),
                precision_undefined=not col[k],
                recall_undefined=not row[k],
            ))
        return tuple(metrics)

    def support_weighted_recall(self) -> Fraction:
        """Σ_k (row_k / N) · (diag_k / row_k)，精确有理数，恒等于 trace / N"""
        total = Fraction(0)
        for k in range(NUM_SCORES):
            row = int(self.support[k])
            if row:
                total += Fraction(row, self.n) * Fraction(int(self.counts[k, k]), row)
        return total

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion(predictions: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray) -> ConfusionMatrix:
    """
    统计混淆矩阵

    Raises:
        LengthMismatch: 预测与标签长度不同
        IndexOutOfRange: 下标不在 [0, 3]

    Example:
        >>> confusion([2, 2, 2, 2], [0, 1, 2, 3]).accuracy
        0.25
    """
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(predictions) != len(labels):
        raise LengthMismatch(f"预测 {len(predictions)} 个，标签 {len(labels)} 个")
    for name, values in (("预测", predictions), ("标签", labels)):
        if len(values) and (values.min() < 0 or values.max() >= NUM_SCORES):
            raise IndexOutOfRange(f"{name}下标应在 [0, {NUM_SCORES - 1}]")
    if not len(labels):
        return ConfusionMatrix(np.zeros((NUM_SCORES, NUM_SCORES), dtype=np.int64))
    return ConfusionMatrix(confusion_matrix(labels, predictions, labels=list(range(NUM_SCORES))))
