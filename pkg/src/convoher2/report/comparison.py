"""
与已有方法的准确率对比表
"""
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from convoher2.enums import StainModality


@dataclass(frozen=True)
class ComparisonRow:
    method_name: str
    dataset_name: str
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy 应在 [0, 1]，实际 {self.accuracy}")

    def to_row(self) -> dict:
        return {
            "method": self.method_name,
            "dataset": self.dataset_name,
            "accuracy": f"{self.accuracy * 100:.2f}%",
        }


# 文献中报告的结果（数据集各不相同，原样引用，不重新测量）
BASELINE_ROWS = (
    ComparisonRow("SVM", "MRI images", 0.795),
    ComparisonRow("DenseNet", "Ultrasound images", 0.8056),
    ComparisonRow("HASHI algorithm", "HER2SC", 0.833),
)
# 只替换最后一层的原始 InceptionV3 迁移学习
ORIGINAL_INCEPTION_ROW = ComparisonRow("InceptionV3 (original head)", "BCI Dataset", 0.76)


def measured_row(accuracy: float, modality: Optional[StainModality], method_name: str = "convoher2") -> ComparisonRow:
    dataset = f"BCI Dataset ({modality.value})" if modality else "BCI Dataset"
    return ComparisonRow(method_name, dataset, accuracy)


class ComparisonTable:
    def __init__(self, rows: list[ComparisonRow]):
        self.rows = rows

    def __len__(self) -> int:
        return len(self.rows)

    def to_rows(self) -> list[dict]:
        return [r.to_row() for r in self.rows]

    def render(self) -> str:
        rows = self.to_rows()
        headers = list(rows[0].keys())

        # 列宽
        col_widths = {
            h: max(len(h), *(len(str(row[h])) for row in rows))
            for h in headers
        }
        lines = [
            " | ".join(f"{h:<{col_widths[h]}}" for h in headers),
            "-+-".join("-" * col_widths[h] for h in headers),
        ]
        for row in rows:
            lines.append(" | ".join(f"{str(row[h]):<{col_widths[h]}}" for h in headers))
        return "\n".join(lines)

    def pretty_print(self):
        print(self.render())

    def to_csv(self, path: str | Path):
        rows = self.to_rows()
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=rows[0].keys())
            writer.writeheader()
            writer.writerows(rows)


def comparison_table(
    rows: Iterable[ComparisonRow] = (),
    include_baselines: bool = True,
    include_original: bool = False,
) -> ComparisonTable:
    """
    组装对比表：文献基线（可选）→ 原始 InceptionV3（可选）→ 本次测量结果

    Raises:
        ValueError: 最终没有任何行
    """
    table_rows: list[ComparisonRow] = []
    if include_baselines:
        table_rows.extend(BASELINE_ROWS)
    if include_original:
        table_rows.append(ORIGINAL_INCEPTION_ROW)
    table_rows.extend(rows)
    if not table_rows:
        raise ValueError("对比表至少需要一行")
    return ComparisonTable(table_rows)
