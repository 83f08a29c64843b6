from enum import Enum


class Her2Score(Enum):
    """
    HER2 评分（临床四级）

    label 与 index 一一对应：0↔0, 1+↔1, 2+↔2, 3+↔3
    """
    ZERO = "0"
    ONE_PLUS = "1+"
    TWO_PLUS = "2+"
    THREE_PLUS = "3+"

    @property
    def label(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return _INDEX[self]

    @classmethod
    def from_label(cls, label: str) -> "Her2Score":
        try:
            return cls(label)
        except ValueError:
            raise ValueError(f"非法 HER2 评分标签: {label!r}") from None

    @classmethod
    def from_index(cls, index: int) -> "Her2Score":
        if not 0 <= int(index) < NUM_SCORES:
            raise ValueError(f"HER2 评分下标越界: {index}")
        return _ORDERED[int(index)]

    def __str__(self) -> str:
        return self.value


_ORDERED = list(Her2Score)
_INDEX = {score: i for i, score in enumerate(_ORDERED)}

NUM_SCORES = 4
SCORE_LABELS = tuple(s.label for s in _ORDERED)


def format_label(score: Her2Score) -> str:
    return score.label
