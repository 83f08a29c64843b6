from convoher2.report.comparison import (
    BASELINE_ROWS,
    ORIGINAL_INCEPTION_ROW,
    ComparisonRow,
    ComparisonTable,
    comparison_table,
    measured_row,
)
from convoher2.report.confusion import CategoryMetrics, ConfusionMatrix, confusion
from convoher2.report.evaluation import EvaluationReport, full_report

__all__ = [
    "BASELINE_ROWS",
    "CategoryMetrics",
    "ComparisonRow",
    "ComparisonTable",
    "ConfusionMatrix",
    "EvaluationReport",
    "ORIGINAL_INCEPTION_ROW",
    "comparison_table",
    "confusion",
    "full_report",
    "measured_row",
]
