from convoher2.enums.score import Her2Score, NUM_SCORES, SCORE_LABELS, format_label
from convoher2.enums.split import RangeTag, Split
from convoher2.enums.stain import StainModality

__all__ = [
    "Her2Score",
    "NUM_SCORES",
    "SCORE_LABELS",
    "format_label",
    "RangeTag",
    "Split",
    "StainModality",
]
