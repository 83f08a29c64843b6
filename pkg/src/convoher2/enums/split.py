from enum import Enum


class Split(Enum):
    TRAIN = "train"
    TEST = "test"
    UNSPLIT = "unsplit"  # 扫描时未发现预定义 train/test 目录

    @classmethod
    def parse(cls, token: str) -> "Split":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ValueError(f"未知数据划分: {token!r}") from None

    def __str__(self) -> str:
        return self.value


class RangeTag(Enum):
    """图像张量取值范围标记"""
    RAW_0_255 = "raw_0_255"
    NORMALIZED_M1_1 = "normalized_m1_1"
